#pragma once

#include <vector>

#include "avgsim/circuit.hpp"
#include "avgsim/trace.hpp"

namespace avgsim {

/// How much of each cell port's within-period current deviation flows
/// through each capacitor, one factor pair per capacitor in circuit order.
///
/// The factors come from the ripple deviation network: every voltage source
/// and every capacitor is replaced by a zero-volt branch (their voltages are
/// held fixed over one period to first order), a unit current is injected
/// along a port's route, and the factor is the share arriving in the
/// capacitor branch.
struct RippleRouting {
    std::vector<double> k1;
    std::vector<double> k2;
};

[[nodiscard]] RippleRouting compute_ripple_routing(const Circuit& circuit);

/// Piecewise-linear inductor current through the recorded subinterval
/// boundary values, points_per_period samples per period plus a closing
/// sample at the final period end.
[[nodiscard]] Waveform reconstruct_inductor_current(const Trace& trace,
                                                    int points_per_period);

/// Capacitor voltage with ripple superimposed on the averaged value:
/// v(tau) = v_avg + (Phi(tau) - mean(Phi)) / C, where Phi integrates the
/// routed port-current deviation k1*(i_s1(tau) - avg) + k2*(i_s2(tau) - avg)
/// from the period start. Subtracting the integral's own mean keeps the
/// period mean of the result exactly at the averaged value.
[[nodiscard]] Waveform reconstruct_capacitor_voltage(const Trace& trace,
                                                     const Capacitor& capacitor,
                                                     int cap_index, double k1,
                                                     double k2,
                                                     int points_per_period);

/// Inductor current plus every capacitor voltage, routing factors included.
[[nodiscard]] WaveformSet reconstruct_all(const Circuit& circuit, const Trace& trace,
                                          int points_per_period);

}  // namespace avgsim
