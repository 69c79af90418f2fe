#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "avgsim/circuit.hpp"

namespace avgsim {

/// Trapezoidal companion history of one capacitor: its voltage and current
/// at the end of the previous period.
struct CapacitorHistory {
    double voltage = 0.0;
    double current = 0.0;
};

/// Cell operating point for one linear period solve. The duty pair is fixed
/// before the solve, which is what keeps every period solve linear.
struct AveragedStamp {
    double d = 0.0;
    double d2 = 0.0;
    double i_l0 = 0.0;
};

/// Assembled linear system A x = b with labeled unknowns. Unknown order:
/// node voltages (ground eliminated), source branch currents, the two cell
/// port currents, then capacitor branch currents when capacitors are pinned
/// (operating-point form).
struct MnaSystem {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    std::vector<std::string> labels;
    int port_current_offset = 0;     ///< index of the first cell port unknown
    int cap_current_offset = -1;     ///< index of first capacitor branch, -1 if companion form
    double period = 0.0;
};

/// Builds the averaged period system: resistors and sources stamped
/// directly, capacitors as trapezoidal companions (G = 2C/T plus history
/// injection), the cell as two controlled port-current branches carrying
/// the period-average switch and diode currents.
[[nodiscard]] MnaSystem build_averaged_mna(const Circuit& circuit,
                                           const AveragedStamp& stamp,
                                           const std::vector<CapacitorHistory>& histories,
                                           const std::vector<double>& source_values);

/// Builds the start-up operating point: capacitors pinned to their initial
/// voltages (their branch currents become unknowns) and the cell inert.
[[nodiscard]] MnaSystem build_init_mna(const Circuit& circuit,
                                       const std::vector<double>& source_values);

/// Dense LU solve with partial pivoting. Throws SimulationError when a pivot
/// falls below 1e-13 * ||A||_inf (naming the suspect unknown) or when the
/// residual exceeds 1e-9 * (1 + ||b||_inf).
[[nodiscard]] Eigen::VectorXd solve_mna(const MnaSystem& system);

/// Solution unpacked into circuit terms.
struct AveragedSolution {
    std::vector<double> node_voltages;  ///< indexed by NodeId, ground entry 0.0
    double v1 = 0.0;
    double v2 = 0.0;
    double i_s1 = 0.0;
    double i_s2 = 0.0;
    std::vector<double> cap_voltages;
    std::vector<double> cap_currents;
};

/// For the companion form recovers each capacitor current from its history;
/// the operating-point form reads it from the branch unknown (pass nullptr).
[[nodiscard]] AveragedSolution extract_solution(const Circuit& circuit,
                                                const MnaSystem& system,
                                                const Eigen::VectorXd& x,
                                                const std::vector<CapacitorHistory>* histories);

}  // namespace avgsim
