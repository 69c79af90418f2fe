#include "avgsim/pece.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "avgsim/errors.hpp"
#include "avgsim/mna.hpp"
#include "avgsim/regulator.hpp"

namespace avgsim {

namespace {

/// Nodes whose voltage is known before the period solve: pinned by a
/// grounded source (exact) or a grounded capacitor (predicted). The
/// predictor feedback view overlays these onto the last solved voltages.
struct PinnedNode {
    NodeId node = 0;
    int index = 0;   // source or capacitor index
    double sign = 1.0;
};

std::vector<PinnedNode> grounded_sources(const Circuit& c) {
    std::vector<PinnedNode> pins;
    for (size_t i = 0; i < c.sources.size(); ++i) {
        const auto& s = c.sources[i];
        if (s.neg == kGroundNode && s.pos != kGroundNode) {
            pins.push_back(PinnedNode{s.pos, static_cast<int>(i), 1.0});
        } else if (s.pos == kGroundNode && s.neg != kGroundNode) {
            pins.push_back(PinnedNode{s.neg, static_cast<int>(i), -1.0});
        }
    }
    return pins;
}

std::vector<PinnedNode> grounded_capacitors(const Circuit& c) {
    std::vector<PinnedNode> pins;
    for (size_t i = 0; i < c.capacitors.size(); ++i) {
        const auto& cap = c.capacitors[i];
        if (cap.neg == kGroundNode && cap.pos != kGroundNode) {
            pins.push_back(PinnedNode{cap.pos, static_cast<int>(i), 1.0});
        } else if (cap.pos == kGroundNode && cap.neg != kGroundNode) {
            pins.push_back(PinnedNode{cap.neg, static_cast<int>(i), -1.0});
        }
    }
    return pins;
}

class WarningLog {
public:
    void note(const std::string& code, int period, const std::string& message) {
        auto [it, inserted] = entries_.try_emplace(code, EngineWarning{code, period, 0, message});
        it->second.count++;
    }

    [[nodiscard]] std::vector<EngineWarning> take() {
        std::vector<EngineWarning> out;
        out.reserve(entries_.size());
        for (auto& [code, w] : entries_) out.push_back(std::move(w));
        std::sort(out.begin(), out.end(), [](const EngineWarning& a, const EngineWarning& b) {
            return a.first_period < b.first_period;
        });
        return out;
    }

private:
    std::map<std::string, EngineWarning> entries_;
};

/// Transient of a circuit without a switching cell: every period is one
/// trapezoidal companion step. The period system does not depend on any
/// predicted quantity, so the evaluation is repeated verbatim to keep the
/// engine's period contract (two solves, second one recorded) uniform.
SimulationResult run_plain_transient(const Circuit& c) {
    const double t_s = c.period();
    const int periods = c.period_count();

    const std::vector<double> u0 = c.source_values_at(0.0);
    const MnaSystem init_sys = build_init_mna(c, u0);
    const AveragedSolution init = extract_solution(c, init_sys, solve_mna(init_sys), nullptr);

    std::vector<CapacitorHistory> histories(c.capacitors.size());
    for (size_t j = 0; j < c.capacitors.size(); ++j) {
        histories[j] = CapacitorHistory{c.capacitors[j].initial_voltage, init.cap_currents[j]};
    }

    SimulationResult result;
    result.trace.switching_frequency = c.switching_frequency;
    result.trace.node_labels = c.node_labels;
    for (const auto& cap : c.capacitors) result.trace.cap_names.push_back(cap.name);
    result.trace.rows.reserve(periods);
    result.instrumentation.reserve(periods);

    long solves = 0;
    const auto wall_start = std::chrono::steady_clock::now();
    for (int n = 0; n < periods; ++n) {
        const double t = n * t_s;
        const std::vector<double> u = c.source_values_at(t);
        const MnaSystem sys = build_averaged_mna(c, AveragedStamp{}, histories, u);
        static_cast<void>(solve_mna(sys));
        ++solves;
        const AveragedSolution sol = extract_solution(c, sys, solve_mna(sys), &histories);
        ++solves;

        PeriodRow row;
        row.t = t;
        row.node_voltages = sol.node_voltages;
        row.cap_voltages = sol.cap_voltages;
        row.cap_currents = sol.cap_currents;
        result.trace.rows.push_back(std::move(row));

        PeriodInstrumentation inst;
        inst.solve_count = 2;
        for (size_t j = 0; j < histories.size(); ++j) {
            const double fe = predict_capacitor_voltage(
                histories[j].voltage, histories[j].current, c.capacitors[j].capacitance, t_s);
            inst.cap_prediction_gap =
                std::max(inst.cap_prediction_gap, std::fabs(fe - sol.cap_voltages[j]));
        }
        result.instrumentation.push_back(inst);

        for (size_t j = 0; j < histories.size(); ++j) {
            histories[j] = CapacitorHistory{sol.cap_voltages[j], sol.cap_currents[j]};
        }
    }
    const auto wall_end = std::chrono::steady_clock::now();

    result.report.engine = "avg";
    result.report.periods = periods;
    result.report.solves = solves;
    result.report.wall_seconds =
        std::chrono::duration<double>(wall_end - wall_start).count();
    return result;
}

}  // namespace

double predict_capacitor_voltage(double v_prev, double i_prev, double capacitance,
                                 double period) {
    return v_prev + (period / capacitance) * i_prev;
}

double predict_cell_current(double i_l0, double d_prev, double v1_prev, double gain) {
    return i_l0 + gain * d_prev * v1_prev;
}

double correct_capacitor_voltage(double v_prev, double i_prev, double i_pred,
                                 double capacitance, double period) {
    return v_prev + (period / (2.0 * capacitance)) * (i_prev + i_pred);
}

double correct_cell_current(double i_l0, double d_prev, double v1_prev, double d_pred,
                            double v1_pred, double gain) {
    return i_l0 + 0.5 * gain * (d_prev * v1_prev + d_pred * v1_pred);
}

SimulationResult run_transient(const Circuit& c) {
    if (!c.has_cell) return run_plain_transient(c);

    const double t_s = c.period();
    const CellParams params =
        make_cell_params(c.cell.inductance, t_s, c.cell.bidirectional);
    ControlGraph graph(c.regulator, params, t_s);
    const int periods = c.period_count();

    if (!c.cell.bidirectional && c.cell.initial_current < 0.0) {
        throw SimulationError("negative initial current on a unidirectional cell");
    }

    // Start-up operating point: capacitors pinned to their initial voltages,
    // cell inert. Establishes the period -1 history the first prediction
    // needs. This solve is setup, not part of the per-period count.
    const std::vector<double> u0 = c.source_values_at(0.0);
    const MnaSystem init_sys = build_init_mna(c, u0);
    const AveragedSolution init = extract_solution(c, init_sys, solve_mna(init_sys), nullptr);

    std::vector<CapacitorHistory> histories(c.capacitors.size());
    for (size_t j = 0; j < c.capacitors.size(); ++j) {
        histories[j] = CapacitorHistory{c.capacitors[j].initial_voltage, init.cap_currents[j]};
    }
    std::vector<double> prev_nodes = init.node_voltages;
    double v1_prev = init.v1;
    double v2_prev = init.v2;
    double i_l0 = c.cell.initial_current;

    FeedbackView init_view{&prev_nodes, i_l0, i_l0, v1_prev};
    double d_prev = graph.eval_duty(init_view, 0.0, false).duty;

    const auto source_pins = grounded_sources(c);
    const auto cap_pins = grounded_capacitors(c);

    SimulationResult result;
    result.trace.switching_frequency = c.switching_frequency;
    result.trace.node_labels = c.node_labels;
    for (const auto& cap : c.capacitors) result.trace.cap_names.push_back(cap.name);
    result.trace.rows.reserve(periods);
    result.instrumentation.reserve(periods);

    WarningLog log;
    long solves = 0;
    std::vector<double> predicted_caps(c.capacitors.size());
    std::vector<double> view(prev_nodes.size());

    const auto wall_start = std::chrono::steady_clock::now();
    for (int n = 0; n < periods; ++n) {
        const double t = n * t_s;
        const std::vector<double> u = c.source_values_at(t);

        // --- predict ------------------------------------------------------
        for (size_t j = 0; j < histories.size(); ++j) {
            predicted_caps[j] = predict_capacitor_voltage(
                histories[j].voltage, histories[j].current, c.capacitors[j].capacitance, t_s);
        }
        const double i_l1_pred = predict_cell_current(i_l0, d_prev, v1_prev, params.gain);

        view = prev_nodes;
        for (const auto& pin : source_pins) view[pin.node] = pin.sign * u[pin.index];
        for (const auto& pin : cap_pins) view[pin.node] = pin.sign * predicted_caps[pin.index];

        const FeedbackView predicted_view{&view, i_l1_pred, i_l0, v1_prev};
        const DutyDecision dec_p = graph.eval_duty(predicted_view, t, false);
        const DutyIntervals di_p = compute_d2_and_mode(params, dec_p.duty, v1_prev, v2_prev, i_l0);

        // --- evaluate on predicted duty -----------------------------------
        const MnaSystem sys_p =
            build_averaged_mna(c, AveragedStamp{di_p.d, di_p.d2, i_l0}, histories, u);
        const AveragedSolution sol_p = extract_solution(c, sys_p, solve_mna(sys_p), &histories);
        ++solves;

        // --- correct ------------------------------------------------------
        const double i_l1_corr =
            correct_cell_current(i_l0, d_prev, v1_prev, di_p.d, sol_p.v1, params.gain);
        view = sol_p.node_voltages;
        for (const auto& pin : cap_pins) {
            view[pin.node] =
                pin.sign * correct_capacitor_voltage(histories[pin.index].voltage,
                                                     histories[pin.index].current,
                                                     sol_p.cap_currents[pin.index],
                                                     c.capacitors[pin.index].capacitance, t_s);
        }

        const FeedbackView corrected_view{&view, i_l1_corr, i_l0, sol_p.v1};
        const DutyDecision dec_c = graph.eval_duty(corrected_view, t, true);
        const DutyIntervals di_c = compute_d2_and_mode(params, dec_c.duty, sol_p.v1, sol_p.v2, i_l0);

        // --- evaluate on corrected duty -----------------------------------
        const MnaSystem sys_c =
            build_averaged_mna(c, AveragedStamp{di_c.d, di_c.d2, i_l0}, histories, u);
        const AveragedSolution sol = extract_solution(c, sys_c, solve_mna(sys_c), &histories);
        ++solves;

        // --- record -------------------------------------------------------
        // Intervals re-derived from the final port voltages keep the record
        // self-consistent: in DCM the waveform closes at zero exactly.
        const DutyIntervals di =
            compute_d2_and_mode(params, di_c.d, sol.v1, sol.v2, i_l0);
        const SubintervalCurrents sub =
            subinterval_currents(params, di.d, di.d2, i_l0, sol.v1, sol.v2);
        const PortAverages avg =
            averaged_port_currents(params, di.d, di.d2, i_l0, sol.v1, sol.v2);

        PeriodRow row;
        row.t = t;
        row.node_voltages = sol.node_voltages;
        row.cell = CellRecord{i_l0,   sub.i_l1, sub.i_l2, di.d,    di.d2,
                              di.mode, sol.v1,   sol.v2,   avg.s1, avg.s2};
        row.cap_voltages = sol.cap_voltages;
        row.cap_currents = sol.cap_currents;
        result.trace.rows.push_back(std::move(row));

        PeriodInstrumentation inst;
        inst.d_predicted = di_p.d;
        inst.d_corrected = di_c.d;
        inst.solve_count = 2;
        for (size_t j = 0; j < histories.size(); ++j) {
            inst.cap_prediction_gap = std::max(
                inst.cap_prediction_gap, std::fabs(predicted_caps[j] - sol.cap_voltages[j]));
        }
        inst.cell_prediction_gap = std::fabs(i_l1_pred - i_l1_corr);
        result.instrumentation.push_back(inst);

        if (di_c.sign_warning || di.sign_warning) {
            log.note("sign-degrade", n,
                     "port voltage sign assumption violated; cell degraded to CCM");
        }
        if (dec_p.peak_guard_warning || dec_c.peak_guard_warning) {
            log.note("peak-guard", n,
                     "peak limit denominator not positive; candidate disabled for the period");
        }

        const AdvanceResult adv = advance_inductor_current(params, di, i_l0, sol.v1, sol.v2);
        if (adv.clamp_warning) {
            log.note("reverse-clamp", n,
                     "unidirectional cell computed a negative next current; clamped to zero");
        }

        // --- commit -------------------------------------------------------
        i_l0 = adv.next_i_l0;
        for (size_t j = 0; j < histories.size(); ++j) {
            histories[j] = CapacitorHistory{sol.cap_voltages[j], sol.cap_currents[j]};
        }
        d_prev = di_c.d;
        v1_prev = sol.v1;
        v2_prev = sol.v2;
        prev_nodes = sol.node_voltages;
    }
    const auto wall_end = std::chrono::steady_clock::now();

    result.warnings = log.take();
    result.report.engine = "avg";
    result.report.periods = periods;
    result.report.solves = solves;
    result.report.newton_iterations = 0;
    result.report.wall_seconds =
        std::chrono::duration<double>(wall_end - wall_start).count();
    return result;
}

}  // namespace avgsim
