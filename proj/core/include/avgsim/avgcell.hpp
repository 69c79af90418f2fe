#pragma once

#include "avgsim/circuit.hpp"

namespace avgsim {

/// Tolerance below which an inductor current is treated as zero.
inline constexpr double kCurrentTolerance = 1e-9;

enum class ConductionMode { Ccm, Dcm };

/// Static cell data for one switching period length.
/// gain = period / inductance converts volt-periods to amperes.
struct CellParams {
    double inductance = 0.0;
    double period = 0.0;
    double gain = 0.0;
    bool bidirectional = false;
};

/// Validates L and T and derives the current gain.
[[nodiscard]] CellParams make_cell_params(double inductance, double period,
                                          bool bidirectional);

/// Conduction intervals of one period: the switch conducts for d, the diode
/// for d2, and for a unidirectional cell the remainder idles at zero current.
struct DutyIntervals {
    double d = 0.0;
    double d2 = 0.0;
    ConductionMode mode = ConductionMode::Ccm;
    bool sign_warning = false;
};

/// Decides CCM versus DCM for a commanded duty ratio and the port voltages
/// in effect, and sizes the diode interval accordingly.
///
/// The diode interval candidate comes from the zero crossing of the
/// piecewise-linear inductor current: d2* solves i_l0 + gain*(d*v1 + d2*v2)
/// = 0. If the current survives to the period end (d + d2* >= 1, boundary
/// included) the cell is in CCM with d2 = 1 - d. A bidirectional cell is
/// always CCM.
///
/// The model assumes v1 > 0 and v2 < 0 while conducting. When a transient
/// violates that (v1 <= 0 with the switch on, or v2 >= 0 while the diode
/// interval is evaluated) the zero crossing is undefined; the cell degrades
/// to the CCM description and flags sign_warning.
[[nodiscard]] DutyIntervals compute_d2_and_mode(const CellParams& params, double d,
                                                double v1, double v2, double i_l0);

/// Period-average currents through the two cell ports.
struct PortAverages {
    double s1 = 0.0;
    double s2 = 0.0;
};

/// Averages of the switch and diode currents over the full period, taken
/// over the triangular inductor current they carry in their subintervals.
[[nodiscard]] PortAverages averaged_port_currents(const CellParams& params, double d,
                                                  double d2, double i_l0, double v1,
                                                  double v2);

/// Inductor current at the subinterval boundaries.
struct SubintervalCurrents {
    double i_l1 = 0.0;  ///< at the end of the switch interval
    double i_l2 = 0.0;  ///< at the end of the diode interval
};

[[nodiscard]] SubintervalCurrents subinterval_currents(const CellParams& params,
                                                       double d, double d2,
                                                       double i_l0, double v1,
                                                       double v2);

/// Period-average inductor voltage contributions of the two subintervals.
struct AveragedInductorVoltages {
    double l1 = 0.0;
    double l2 = 0.0;
};

[[nodiscard]] AveragedInductorVoltages averaged_inductor_voltages(double d, double d2,
                                                                  double v1, double v2);

/// Start-of-next-period inductor current.
struct AdvanceResult {
    double next_i_l0 = 0.0;
    bool clamp_warning = false;
};

/// DCM closes the period at zero current. CCM carries i_l2 forward; a
/// unidirectional cell that would carry a negative current past the
/// tolerance clamps to zero and flags the violation (the diode would block).
[[nodiscard]] AdvanceResult advance_inductor_current(const CellParams& params,
                                                     const DutyIntervals& intervals,
                                                     double i_l0, double v1, double v2);

}  // namespace avgsim
