#pragma once

#include <string>
#include <vector>

namespace avgsim {

/// Dense node index. Node 0 is always ground.
using NodeId = int;
inline constexpr NodeId kGroundNode = 0;

// ============================================================================
// Sources and passive elements
// ============================================================================

enum class SourceKind { Dc, Sin, Step };

/// One breakpoint of a piecewise-constant source: value holds from `time` on.
struct StepPoint {
    double time = 0.0;
    double value = 0.0;
    bool operator==(const StepPoint&) const = default;
};

/// Independent voltage source. Sin sources may be full-wave rectified, which
/// is how a line-frequency input seen from the DC side of a bridge is written.
struct VoltageSource {
    std::string name;
    NodeId pos = 0;
    NodeId neg = 0;
    SourceKind kind = SourceKind::Dc;
    double dc_value = 0.0;
    double amplitude = 0.0;
    double frequency = 0.0;
    bool rectified = false;
    std::vector<StepPoint> steps;

    /// Instantaneous source value. The engines sample this once per switching
    /// period and hold it, so intra-period shape never enters the models.
    [[nodiscard]] double value_at(double t) const;

    bool operator==(const VoltageSource&) const = default;
};

struct Resistor {
    std::string name;
    NodeId pos = 0;
    NodeId neg = 0;
    double resistance = 0.0;
    bool operator==(const Resistor&) const = default;
};

struct Capacitor {
    std::string name;
    NodeId pos = 0;
    NodeId neg = 0;
    double capacitance = 0.0;
    double initial_voltage = 0.0;
    bool operator==(const Capacitor&) const = default;
};

// ============================================================================
// Switching cell
// ============================================================================

enum class CellTopology { Buck, Boost, BuckBoost };

/// Three-terminal switch/diode/inductor cell, declared as
/// X<name> t1 t2 common <kind>. Terminal roles are (input, output, return).
///
/// The averaged model works on two directed ports. Port 1 carries the active
/// switch current and sees the on-time inductor voltage v1; port 2 carries
/// the diode current and sees the off-time inductor voltage v2. For each
/// topology the ports map onto terminal pairs so that v1 > 0 and v2 < 0 in
/// normal operation and the port current flows from the `from` node to the
/// `to` node through the cell.
struct SwitchingCell {
    std::string name;
    NodeId t1 = 0;
    NodeId t2 = 0;
    NodeId common = 0;
    CellTopology topology = CellTopology::Buck;
    double inductance = 0.0;
    bool bidirectional = false;
    double initial_current = 0.0;

    [[nodiscard]] NodeId port1_from() const;
    [[nodiscard]] NodeId port1_to() const;
    [[nodiscard]] NodeId port2_from() const;
    [[nodiscard]] NodeId port2_to() const;

    bool operator==(const SwitchingCell&) const = default;
};

// ============================================================================
// Regulator description
// ============================================================================

enum class BlockKind { Probe, Const, Gain, Sum, Mult, Tf, Pwm };

/// One statement of the .reg block. Fields are used per kind:
///  Probe: node (or cell_current), Const/Gain/Pwm: value, Sum: in1/in2/negate,
///  Mult: in1/in2, Tf: in1 + continuous-domain num/den coefficients in
///  ascending powers of s.
struct BlockSpec {
    BlockKind kind = BlockKind::Const;
    std::string name;
    std::string in1;
    std::string in2;
    bool negate_in2 = false;
    double value = 0.0;
    bool cell_current = false;
    NodeId node = 0;
    std::vector<double> num;
    std::vector<double> den;
    bool operator==(const BlockSpec&) const = default;
};

/// Peak current limit. iref is either a literal or the name of a graph
/// signal; islope is the compensation ramp amplitude in amperes.
struct PeakLimitSpec {
    bool present = false;
    bool iref_is_signal = false;
    std::string iref_signal;
    double iref_value = 0.0;
    double islope = 0.0;
    bool operator==(const PeakLimitSpec&) const = default;
};

struct RegulatorSpec {
    std::vector<BlockSpec> blocks;
    PeakLimitSpec peak;
    bool has_duty_max = false;
    double duty_max = 1.0;
    bool has_soft_start = false;
    double soft_start_duration = 0.0;
    bool operator==(const RegulatorSpec&) const = default;
};

// ============================================================================
// Circuit
// ============================================================================

struct TransientSpec {
    double t_stop = 0.0;
    int points_per_period = 100;
    bool operator==(const TransientSpec&) const = default;
};

/// Element statement in netlist file order. Serialization replays this so a
/// round trip reproduces node numbering exactly.
struct StatementRef {
    char kind = 'V';  ///< 'V', 'R', 'C' or 'X'
    int index = 0;    ///< position within the per-kind vector
    bool operator==(const StatementRef&) const = default;
};

/// Parsed netlist: at most one switching cell, linear R/C elements, ideal
/// voltage sources and the regulator description. Node indices are assigned
/// in order of first appearance, ground fixed at index 0. A netlist without
/// a cell is a plain linear circuit; both engines accept it.
struct Circuit {
    std::vector<std::string> node_labels{"0"};
    std::vector<VoltageSource> sources;
    std::vector<Resistor> resistors;
    std::vector<Capacitor> capacitors;
    bool has_cell = false;
    SwitchingCell cell;
    RegulatorSpec regulator;
    double switching_frequency = 0.0;
    TransientSpec tran;
    std::vector<StatementRef> statements;

    [[nodiscard]] int node_count() const { return static_cast<int>(node_labels.size()); }
    [[nodiscard]] double period() const { return 1.0 / switching_frequency; }
    [[nodiscard]] int period_count() const;

    /// Source values sampled at time t, in source declaration order.
    [[nodiscard]] std::vector<double> source_values_at(double t) const;

    bool operator==(const Circuit&) const = default;
};

}  // namespace avgsim
