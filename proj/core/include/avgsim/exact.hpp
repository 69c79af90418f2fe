#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "avgsim/circuit.hpp"
#include "avgsim/pece.hpp"
#include "avgsim/trace.hpp"

namespace avgsim {

/// Conduction pattern of the cell during one interval of exact simulation.
/// On: the active switch conducts, the inductor hangs on port 1. Off: the
/// diode conducts, the inductor hangs on port 2. Idle: nothing conducts and
/// the inductor current is pinned at zero (also the tag for a circuit
/// without a cell, which has a single unswitched topology).
enum class Topology { On, Off, Idle };

/// Linear system x' = A x + B u, y = C x + D u for one topology.
/// States are the inductor current (when a cell exists) followed by the
/// capacitor voltages in declaration order. Inputs are the sources in
/// declaration order. Outputs are the non-ground node voltages followed by
/// the capacitor branch currents.
struct StateSpaceSystem {
    Topology topology = Topology::Idle;
    Eigen::MatrixXd a;
    Eigen::MatrixXd b;
    Eigen::MatrixXd c;
    Eigen::MatrixXd d;
    std::vector<std::string> state_labels;
    int inductor_state = -1;      ///< state index of i_L, -1 without a cell
    int output_cap_offset = 0;    ///< first capacitor-current output row
};

/// Builds the topology's state-space form by probing a resistive companion
/// network: capacitors and sources enter as pinned voltage branches, the
/// inductor as a current source along the conducting port's route. Solving
/// once per unit state and unit input yields the matrix columns.
/// Degenerate layouts (capacitor loops, cut inductors) surface as singular
/// probe solves.
[[nodiscard]] StateSpaceSystem build_state_space(const Circuit& circuit,
                                                 Topology topology);

/// One-topology transition over a fixed interval: x(dt) = E x0 + F u.
struct TransitionPair {
    Eigen::MatrixXd e;
    Eigen::MatrixXd f;
};

/// Closed-form propagation of one topology. The primary path diagonalizes A
/// once and evaluates the matrix exponential and its forced-response
/// integral through the eigenvalues; when the eigenvector basis is too
/// ill-conditioned to reproduce A, a scaling-and-squaring exponential of the
/// augmented matrix [[A, B], [0, 0]] takes over (recorded as fallback).
class Propagator {
public:
    explicit Propagator(StateSpaceSystem system);

    [[nodiscard]] TransitionPair transition(double dt) const;
    [[nodiscard]] Eigen::VectorXd propagate(const Eigen::VectorXd& x0,
                                            const Eigen::VectorXd& u, double dt) const;
    /// State derivative A x + B u.
    [[nodiscard]] Eigen::VectorXd derivative(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& u) const;
    [[nodiscard]] bool fallback_used() const { return fallback_; }
    [[nodiscard]] const StateSpaceSystem& system() const { return sys_; }

private:
    StateSpaceSystem sys_;
    bool fallback_ = false;
    Eigen::MatrixXcd v_;        // eigenvector basis
    Eigen::MatrixXcd w_;        // its inverse
    Eigen::VectorXcd lambda_;
    Eigen::MatrixXd augmented_; // [[A, B], [0, 0]] for the fallback
};

/// Affine guard g(x, tau) = on_state . x(tau) + offset + slope * tau,
/// tau measured from the search window start.
struct AffineGuard {
    Eigen::VectorXd on_state;
    double offset = 0.0;
    double slope = 0.0;
};

struct SwitchEvent {
    bool found = false;
    double t_star = 0.0;     ///< window-relative crossing instant
    double residual = 0.0;   ///< |g| at the located crossing
    int iterations = 0;      ///< root-polish iterations spent
};

/// Locates the first zero crossing of the guard inside [0, window]. A coarse
/// prescan brackets the sign change; a second-order Newton update (curvature
/// corrected) polishes it, falling back to bisection whenever an iterate
/// leaves the bracket. No sign change means no event.
[[nodiscard]] SwitchEvent find_switch_instant(const Propagator& propagator,
                                              const Eigen::VectorXd& x0,
                                              const Eigen::VectorXd& u,
                                              const AffineGuard& guard, double window);

struct ExactResult {
    Trace trace;
    WaveformSet waves;
    std::vector<EngineWarning> warnings;
    RunReport report;
};

/// Exact piecewise-linear transient. Per period: the regulator is clocked
/// once on the period-start samples, the commanded on-time plus the peak
/// comparator and the diode zero crossing split the period into topology
/// segments, each propagated in closed form and sampled points_per_period
/// times. More than 16 topology changes in one period aborts the run.
[[nodiscard]] ExactResult run_exact(const Circuit& circuit, int points_per_period);

/// Per-signal deviation between the engines over a comparison window.
struct SignalDeviation {
    std::string name;
    double max_abs = 0.0;       ///< worst |avg - exact| in the window
    double at_time = 0.0;       ///< when the worst deviation occurs
    double mean_abs = 0.0;      ///< window-mean |avg - exact|
    double scale = 0.0;         ///< steady-state magnitude used to normalize
    double normalized = 0.0;    ///< max_abs / scale
};

struct DeviationReport {
    std::vector<SignalDeviation> signals;         ///< instantaneous waveforms
    std::vector<SignalDeviation> period_signals;  ///< per-period averages
    double worst_normalized = 0.0;
    std::string worst_signal;
};

/// Sample-by-sample deviations between two waveform sets, matched by signal
/// name, for t >= t_start. Scales come from the tail of the second set.
[[nodiscard]] std::vector<SignalDeviation> compare_waveform_sets(const WaveformSet& a,
                                                                 const WaveformSet& b,
                                                                 double t_start);

/// Reconstructs instantaneous waveforms from the averaged trace at the
/// oracle's sampling density and reports deviations from the oracle, both
/// sample-by-sample and on per-period averages, for t >= t_start. Traces
/// over different horizons or grids are rejected.
[[nodiscard]] DeviationReport compare_traces(const Circuit& circuit, const Trace& avg,
                                             const ExactResult& exact, double t_start);

}  // namespace avgsim
