#pragma once

#include <string>
#include <vector>

#include "avgsim/circuit.hpp"
#include "avgsim/trace.hpp"

namespace avgsim {

/// Per-period bookkeeping of the predict/correct scheme.
struct PeriodInstrumentation {
    double d_predicted = 0.0;
    double d_corrected = 0.0;
    int solve_count = 0;
    double cap_prediction_gap = 0.0;   ///< max |predicted - final| capacitor voltage
    double cell_prediction_gap = 0.0;  ///< |predicted - corrected| boundary current
};

/// Aggregated non-fatal diagnostics keyed by condition.
struct EngineWarning {
    std::string code;
    int first_period = 0;
    int count = 0;
    std::string message;
};

struct RunReport {
    std::string engine;
    int periods = 0;
    long solves = 0;              ///< linear period solves (two per period here)
    long newton_iterations = 0;   ///< always zero: fixed duty keeps solves linear
    double wall_seconds = 0.0;    ///< stepping loop only, setup and I/O excluded
    bool exact_fallback_used = false;
};

struct SimulationResult {
    Trace trace;
    std::vector<PeriodInstrumentation> instrumentation;
    std::vector<EngineWarning> warnings;
    RunReport report;
};

// ============================================================================
// Predict / correct formulas
// ============================================================================
// Exposed standalone so their convergence order can be measured on a plain
// linear network without the rest of the engine.

/// Forward-Euler preview of a capacitor voltage one period ahead.
[[nodiscard]] double predict_capacitor_voltage(double v_prev, double i_prev,
                                               double capacitance, double period);

/// Preview of the end-of-on-time inductor current using the previous
/// period's duty and port voltage.
[[nodiscard]] double predict_cell_current(double i_l0, double d_prev, double v1_prev,
                                          double gain);

/// Trapezoidal update using the capacitor current that came back from the
/// predictor-driven period solve.
[[nodiscard]] double correct_capacitor_voltage(double v_prev, double i_prev,
                                               double i_pred, double capacitance,
                                               double period);

/// Trapezoidal update of the boundary inductor current from the old and the
/// predictor-solved volt-duty products.
[[nodiscard]] double correct_cell_current(double i_l0, double d_prev, double v1_prev,
                                          double d_pred, double v1_pred, double gain);

/// Runs the averaged transient. Each period performs exactly two linear
/// circuit solves: one driven by predicted feedback, one by corrected
/// feedback; the second solution is the period's recorded state.
[[nodiscard]] SimulationResult run_transient(const Circuit& circuit);

}  // namespace avgsim
