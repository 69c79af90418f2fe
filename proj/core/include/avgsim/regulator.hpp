#pragma once

#include <optional>
#include <string>
#include <vector>

#include "avgsim/avgcell.hpp"
#include "avgsim/circuit.hpp"

namespace avgsim {

/// Discrete transfer function in z^-1, denominator normalized to a[0] = 1.
struct DiscreteTf {
    std::vector<double> b;
    std::vector<double> a;
};

/// Maps a proper continuous-domain rational function (coefficients in
/// ascending powers of s) onto the switching-period grid with the bilinear
/// substitution s = (2/T)(1 - z^-1)/(1 + z^-1).
[[nodiscard]] DiscreteTf bilinear_discretize(const std::vector<double>& num,
                                             const std::vector<double>& den,
                                             double period);

/// Signals the regulator reads each period. Node voltages follow the
/// circuit's node indexing; cell_current is the end-of-on-time inductor
/// current estimate of the current pass; i_l0 and v1 feed the peak limit.
struct FeedbackView {
    const std::vector<double>* node_voltages = nullptr;
    double cell_current = 0.0;
    double i_l0 = 0.0;
    double v1 = 0.0;
};

struct DutyCandidate {
    enum class Kind { Pwm, PeakLimit, SoftStart, DutyMax };
    Kind kind = Kind::Pwm;
    double value = 0.0;
    std::string source;
};

/// Outcome of one regulator evaluation. duty is the minimum of all
/// candidates clamped into [0, duty_max]. peak_iref carries the evaluated
/// current reference so a caller can re-enforce the limit in its own domain.
struct DutyDecision {
    double duty = 0.0;
    std::vector<DutyCandidate> candidates;
    std::optional<double> peak_iref;
    bool peak_guard_warning = false;
};

/// Block-diagram regulator. Built once per run from the parsed description;
/// evaluation is a topological sweep over the blocks. Discrete transfer
/// functions advance their state only on committed evaluations, so a period
/// may preview the duty (predictor pass) without clocking the controllers.
class ControlGraph {
public:
    ControlGraph(const RegulatorSpec& spec, const CellParams& cell, double period);

    /// Evaluates every signal and collects duty candidates.
    /// With commit = false the internal controller states stay untouched.
    [[nodiscard]] DutyDecision eval_duty(const FeedbackView& feedback, double t,
                                         bool commit);

    [[nodiscard]] double duty_max() const { return duty_max_; }
    [[nodiscard]] bool has_peak_limit() const { return peak_.present; }
    [[nodiscard]] double peak_islope() const { return peak_.islope; }
    [[nodiscard]] bool has_soft_start() const { return soft_start_duration_ > 0.0; }

private:
    struct Node {
        BlockSpec spec;
        DiscreteTf tf;                 // Tf blocks
        std::vector<double> state;     // Tf blocks, direct form II transposed
        int in1 = -1;
        int in2 = -1;
    };

    [[nodiscard]] double eval_tf(Node& node, double u, bool commit);

    std::vector<Node> nodes_;          // topological order
    std::vector<double> values_;
    PeakLimitSpec peak_;
    int peak_iref_index_ = -1;
    double duty_max_ = 1.0;
    double soft_start_duration_ = 0.0;
    double cell_gain_ = 0.0;
};

}  // namespace avgsim
