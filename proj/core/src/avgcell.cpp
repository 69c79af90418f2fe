#include "avgsim/avgcell.hpp"

#include <stdexcept>
#include <string>

namespace avgsim {

namespace {

void require(bool condition, const char* what) {
    if (!condition) {
        throw std::invalid_argument(what);
    }
}

constexpr double kDutySlack = 1e-12;

}  // namespace

CellParams make_cell_params(double inductance, double period, bool bidirectional) {
    require(inductance > 0.0, "cell inductance must be positive");
    require(period > 0.0, "switching period must be positive");
    return CellParams{inductance, period, period / inductance, bidirectional};
}

DutyIntervals compute_d2_and_mode(const CellParams& params, double d, double v1,
                                  double v2, double i_l0) {
    require(d >= -kDutySlack && d <= 1.0 + kDutySlack, "duty ratio outside [0, 1]");
    if (d < 0.0) d = 0.0;
    if (d > 1.0) d = 1.0;

    if (params.bidirectional) {
        return DutyIntervals{d, 1.0 - d, ConductionMode::Ccm, false};
    }

    require(i_l0 >= -kCurrentTolerance, "negative start current on a unidirectional cell");
    if (i_l0 < 0.0) i_l0 = 0.0;

    const bool v1_violated = d > 0.0 && v1 <= 0.0;
    if (v1_violated || v2 >= 0.0) {
        // Zero crossing undefined under a sign violation; fall back to the
        // CCM description, which stays well defined for any polarity.
        return DutyIntervals{d, 1.0 - d, ConductionMode::Ccm, true};
    }

    const double i_l1 = i_l0 + params.gain * d * v1;
    const double d2_candidate = -i_l1 / (params.gain * v2);
    if (d + d2_candidate < 1.0) {
        return DutyIntervals{d, d2_candidate, ConductionMode::Dcm, false};
    }
    return DutyIntervals{d, 1.0 - d, ConductionMode::Ccm, false};
}

PortAverages averaged_port_currents(const CellParams& params, double d, double d2,
                                    double i_l0, double v1, double v2) {
    const double g = params.gain;
    PortAverages avg;
    avg.s1 = d * i_l0 + 0.5 * d * d * g * v1;
    avg.s2 = d2 * i_l0 + d * d2 * g * v1 + 0.5 * d2 * d2 * g * v2;
    return avg;
}

SubintervalCurrents subinterval_currents(const CellParams& params, double d, double d2,
                                         double i_l0, double v1, double v2) {
    SubintervalCurrents currents;
    currents.i_l1 = i_l0 + params.gain * d * v1;
    currents.i_l2 = currents.i_l1 + params.gain * d2 * v2;
    return currents;
}

AveragedInductorVoltages averaged_inductor_voltages(double d, double d2, double v1,
                                                    double v2) {
    return AveragedInductorVoltages{d * v1, d2 * v2};
}

AdvanceResult advance_inductor_current(const CellParams& params,
                                       const DutyIntervals& intervals, double i_l0,
                                       double v1, double v2) {
    if (intervals.mode == ConductionMode::Dcm) {
        return AdvanceResult{0.0, false};
    }
    const auto currents =
        subinterval_currents(params, intervals.d, intervals.d2, i_l0, v1, v2);
    double next = currents.i_l2;
    bool warning = false;
    if (!params.bidirectional && next < 0.0) {
        warning = next < -kCurrentTolerance;
        next = 0.0;
    }
    return AdvanceResult{next, warning};
}

}  // namespace avgsim
