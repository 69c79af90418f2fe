#include "avgsim/exact.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>

#include "avgsim/avgcell.hpp"
#include "avgsim/errors.hpp"
#include "avgsim/mna.hpp"
#include "avgsim/regulator.hpp"
#include "avgsim/ripple.hpp"

namespace avgsim {

namespace {

constexpr int kMaxTopologyChanges = 16;
constexpr int kScanIntervals = 32;
constexpr int kMaxEventIterations = 50;
constexpr double kEventResidualRel = 1e-10;

/// Route of the conducting inductor through the external network for a
/// topology, or nothing when the cell idles.
struct ConductionRoute {
    bool conducting = false;
    NodeId from = 0;
    NodeId to = 0;
};

ConductionRoute route_for(const Circuit& c, Topology topo) {
    if (!c.has_cell || topo == Topology::Idle) return {};
    if (topo == Topology::On) return {true, c.cell.port1_from(), c.cell.port1_to()};
    return {true, c.cell.port2_from(), c.cell.port2_to()};
}

}  // namespace

StateSpaceSystem build_state_space(const Circuit& c, Topology topo) {
    const int nodes = c.node_count() - 1;
    const int ns = static_cast<int>(c.sources.size());
    const int nc = static_cast<int>(c.capacitors.size());
    const int n_states = (c.has_cell ? 1 : 0) + nc;
    const int n_out = nodes + nc;
    const int dim = nodes + ns + nc;
    const ConductionRoute route = route_for(c, topo);

    // Resistive probe network: sources and capacitors as voltage branches,
    // the conducting inductor as a current source along its route. One
    // solve per unit state and per unit input fills the matrix columns.
    MnaSystem probe;
    probe.a = Eigen::MatrixXd::Zero(dim, dim);
    probe.b = Eigen::VectorXd::Zero(dim);
    probe.period = c.period();
    probe.port_current_offset = dim;
    probe.cap_current_offset = nodes + ns;
    for (int n = 1; n <= nodes; ++n) probe.labels.push_back("v(" + c.node_labels[n] + ")");
    for (const auto& s : c.sources) probe.labels.push_back("i(" + s.name + ")");
    for (const auto& cap : c.capacitors) probe.labels.push_back("i(" + cap.name + ")");

    const auto unknown = [](NodeId n) { return n - 1; };
    const auto add = [&](int r, int col, double g) {
        if (r >= 0 && col >= 0) probe.a(r, col) += g;
    };
    for (const auto& r : c.resistors) {
        const double g = 1.0 / r.resistance;
        const int p = r.pos == kGroundNode ? -1 : unknown(r.pos);
        const int n = r.neg == kGroundNode ? -1 : unknown(r.neg);
        add(p, p, g);
        add(n, n, g);
        add(p, n, -g);
        add(n, p, -g);
    }
    const auto stamp_branch = [&](int row, NodeId pos, NodeId neg) {
        const int p = pos == kGroundNode ? -1 : unknown(pos);
        const int n = neg == kGroundNode ? -1 : unknown(neg);
        add(p, row, 1.0);
        add(n, row, -1.0);
        add(row, p, 1.0);
        add(row, n, -1.0);
    };
    for (int j = 0; j < ns; ++j) stamp_branch(nodes + j, c.sources[j].pos, c.sources[j].neg);
    for (int j = 0; j < nc; ++j) {
        stamp_branch(nodes + ns + j, c.capacitors[j].pos, c.capacitors[j].neg);
    }

    StateSpaceSystem sys;
    sys.topology = topo;
    sys.a = Eigen::MatrixXd::Zero(n_states, n_states);
    sys.b = Eigen::MatrixXd::Zero(n_states, ns);
    sys.c = Eigen::MatrixXd::Zero(n_out, n_states);
    sys.d = Eigen::MatrixXd::Zero(n_out, ns);
    sys.inductor_state = c.has_cell ? 0 : -1;
    sys.output_cap_offset = nodes;
    const int cap_state = c.has_cell ? 1 : 0;
    if (c.has_cell) sys.state_labels.push_back("i_L(" + c.cell.name + ")");
    for (const auto& cap : c.capacitors) sys.state_labels.push_back("v(" + cap.name + ")");

    // Derivatives and outputs of one probe solve land in one column.
    const auto fill_column = [&](Eigen::Ref<Eigen::VectorXd> deriv_col,
                                 Eigen::Ref<Eigen::VectorXd> out_col,
                                 const Eigen::VectorXd& x) {
        const auto node_v = [&](NodeId node) {
            return node == kGroundNode ? 0.0 : x(unknown(node));
        };
        if (c.has_cell) {
            deriv_col(0) = route.conducting
                               ? (node_v(route.from) - node_v(route.to)) / c.cell.inductance
                               : 0.0;
        }
        for (int j = 0; j < nc; ++j) {
            deriv_col(cap_state + j) = x(nodes + ns + j) / c.capacitors[j].capacitance;
        }
        for (int nn = 0; nn < nodes; ++nn) out_col(nn) = x(nn);
        for (int j = 0; j < nc; ++j) out_col(nodes + j) = x(nodes + ns + j);
    };

    // State probes: inductor current first, then each capacitor voltage.
    if (c.has_cell) {
        probe.b.setZero();
        if (route.conducting) {
            if (route.to != kGroundNode) probe.b(unknown(route.to)) += 1.0;
            if (route.from != kGroundNode) probe.b(unknown(route.from)) -= 1.0;
        }
        fill_column(sys.a.col(0), sys.c.col(0), solve_mna(probe));
    }
    for (int j = 0; j < nc; ++j) {
        probe.b.setZero();
        probe.b(nodes + ns + j) = 1.0;
        fill_column(sys.a.col(cap_state + j), sys.c.col(cap_state + j), solve_mna(probe));
    }
    for (int j = 0; j < ns; ++j) {
        probe.b.setZero();
        probe.b(nodes + j) = 1.0;
        fill_column(sys.b.col(j), sys.d.col(j), solve_mna(probe));
    }
    return sys;
}

// ============================================================================
// Propagator
// ============================================================================

Propagator::Propagator(StateSpaceSystem system) : sys_(std::move(system)) {
    const int n = static_cast<int>(sys_.a.rows());
    const int m = static_cast<int>(sys_.b.cols());
    augmented_ = Eigen::MatrixXd::Zero(n + m, n + m);
    augmented_.topLeftCorner(n, n) = sys_.a;
    augmented_.topRightCorner(n, m) = sys_.b;
    if (n == 0) return;

    Eigen::EigenSolver<Eigen::MatrixXd> es(sys_.a);
    if (es.info() != Eigen::Success) {
        fallback_ = true;
        return;
    }
    lambda_ = es.eigenvalues();
    v_ = es.eigenvectors();

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(v_);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 0.0) || smax / smin > 1e10) {
        fallback_ = true;
        return;
    }
    w_ = v_.fullPivLu().inverse();
    const Eigen::MatrixXd recon = (v_ * lambda_.asDiagonal() * w_).real();
    const double defect = (recon - sys_.a).cwiseAbs().maxCoeff();
    if (!(defect <= 1e-11 * (1.0 + sys_.a.cwiseAbs().maxCoeff()))) fallback_ = true;
}

TransitionPair Propagator::transition(double dt) const {
    const int n = static_cast<int>(sys_.a.rows());
    const int m = static_cast<int>(sys_.b.cols());
    TransitionPair tp;
    if (n == 0) {
        tp.e.resize(0, 0);
        tp.f.resize(0, m);
        return tp;
    }
    if (!fallback_) {
        Eigen::VectorXcd grow(n);
        Eigen::VectorXcd forced(n);
        for (int i = 0; i < n; ++i) {
            const std::complex<double> z = lambda_(i) * dt;
            grow(i) = std::exp(z);
            if (std::abs(z) < 1e-3) {
                // series for (e^z - 1)/lambda, safe against cancellation
                forced(i) = dt * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 +
                                                                         z / 120.0))));
            } else {
                forced(i) = (grow(i) - 1.0) / lambda_(i);
            }
        }
        tp.e = (v_ * grow.asDiagonal() * w_).real();
        tp.f = (v_ * forced.asDiagonal() * w_).real() * sys_.b;
        return tp;
    }
    const Eigen::MatrixXd big = (augmented_ * dt).exp();
    tp.e = big.topLeftCorner(n, n);
    tp.f = big.topRightCorner(n, m);
    return tp;
}

Eigen::VectorXd Propagator::propagate(const Eigen::VectorXd& x0, const Eigen::VectorXd& u,
                                      double dt) const {
    if (sys_.a.rows() == 0) return x0;
    const TransitionPair tp = transition(dt);
    return tp.e * x0 + tp.f * u;
}

Eigen::VectorXd Propagator::derivative(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& u) const {
    return sys_.a * x + sys_.b * u;
}

// ============================================================================
// Event location
// ============================================================================

SwitchEvent find_switch_instant(const Propagator& prop, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& u, const AffineGuard& guard,
                                double window) {
    SwitchEvent ev;
    if (!(window > 0.0)) return ev;

    const auto h_at = [&](double tau) {
        return guard.on_state.dot(prop.propagate(x0, u, tau)) + guard.offset +
               guard.slope * tau;
    };

    // Coarse bracket scan. The grid states are chained with one fixed-step
    // transition; candidate cells are re-verified pointwise before polishing.
    const double step = window / kScanIntervals;
    const TransitionPair tp = prop.transition(step);
    Eigen::VectorXd x = x0;
    double scale = 0.0;
    double h_grid[kScanIntervals + 1];
    for (int i = 0; i <= kScanIntervals; ++i) {
        if (i > 0) x = tp.e * x + tp.f * u;
        h_grid[i] = guard.on_state.dot(x) + guard.offset + guard.slope * (step * i);
        scale = std::max(scale, std::abs(h_grid[i]));
    }
    const double tol = kEventResidualRel * std::max(scale, 1e-300);

    double lo = 0.0;
    double hi = 0.0;
    double h_lo = 0.0;
    double h_hi = 0.0;
    bool bracketed = false;
    for (int i = 0; i < kScanIntervals; ++i) {
        if (!(h_grid[i] * h_grid[i + 1] <= 0.0)) continue;
        if (h_grid[i] == 0.0 && h_grid[i + 1] == 0.0) continue;
        lo = step * i;
        hi = step * (i + 1);
        h_lo = h_at(lo);
        h_hi = h_at(hi);
        if (h_lo * h_hi > 0.0) continue;  // grazing artifact of the chained scan
        bracketed = true;
        break;
    }
    if (!bracketed) return ev;

    if (std::abs(h_lo) <= tol) {
        ev.found = true;
        ev.t_star = lo;
        ev.residual = std::abs(h_lo);
        return ev;
    }
    if (std::abs(h_hi) <= tol) {
        ev.found = true;
        ev.t_star = hi;
        ev.residual = std::abs(h_hi);
        return ev;
    }

    // iterations counts refinement steps applied; the evaluation that lands
    // inside the tolerance is not itself a step, so a linear guard reports 1.
    double t = 0.5 * (lo + hi);
    for (int iter = 0; iter < kMaxEventIterations; ++iter) {
        const Eigen::VectorXd xt = prop.propagate(x0, u, t);
        const double h = guard.on_state.dot(xt) + guard.offset + guard.slope * t;
        ev.iterations = iter;
        if (std::abs(h) <= tol || hi - lo <= 1e-16 * window) {
            ev.found = true;
            ev.t_star = t;
            ev.residual = std::abs(h);
            return ev;
        }
        if ((h > 0.0) == (h_hi > 0.0)) {
            hi = t;
            h_hi = h;
        } else {
            lo = t;
            h_lo = h;
        }

        // Second-order Newton step: the plain step h/h' scaled by the
        // curvature factor 1/(1 - h h''/(2 h'^2)), guarded into the bracket.
        const Eigen::VectorXd xdot = prop.derivative(xt, u);
        const double hd = guard.on_state.dot(xdot) + guard.slope;
        double next = 0.5 * (lo + hi);
        if (hd != 0.0) {
            const double hdd = guard.on_state.dot(prop.system().a * xdot);
            const double newton = h / hd;
            double factor = 1.0 - 0.5 * newton * (hdd / hd);
            if (!(factor > 0.5)) factor = 1.0;  // curvature too strong, trust Newton
            const double cand = t - newton / factor;
            if (cand > lo && cand < hi) next = cand;
        }
        t = next;
    }
    // Iteration cap reached: the bisection half of the loop has still pinned
    // the bracket down, report its midpoint.
    ev.iterations = kMaxEventIterations;
    ev.found = true;
    ev.t_star = 0.5 * (lo + hi);
    ev.residual = std::abs(h_at(ev.t_star));
    return ev;
}

// ============================================================================
// Exact transient
// ============================================================================

namespace {

/// One conduction interval of a period, with the state at its start.
struct Segment {
    Topology topology = Topology::Idle;
    double begin = 0.0;
    double end = 0.0;
    Eigen::VectorXd x_begin;
};

struct PeriodAccumulator {
    Eigen::VectorXd state_sum;   // trapezoid-weighted states
    Eigen::VectorXd output_sum;  // trapezoid-weighted outputs
    double s1_integral = 0.0;    // integral of i_L while On
    double s2_integral = 0.0;    // integral of i_L while Off
};

}  // namespace

ExactResult run_exact(const Circuit& c, int ppp) {
    if (ppp < 2) throw std::invalid_argument("points per period must be at least 2");
    const double t_s = c.period();
    const int periods = c.period_count();
    const int nodes = c.node_count() - 1;
    const int nc = static_cast<int>(c.capacitors.size());
    const bool unidir = c.has_cell && !c.cell.bidirectional;

    if (unidir && c.cell.initial_current < 0.0) {
        throw SimulationError("negative initial current on a unidirectional cell");
    }

    // Topology systems. Idle doubles as the quiet pre-start view; its
    // propagator only matters when the cell can actually idle.
    StateSpaceSystem idle_sys = build_state_space(c, Topology::Idle);
    const int n_states = static_cast<int>(idle_sys.a.rows());
    const int i_l_state = idle_sys.inductor_state;
    const int cap_state = c.has_cell ? 1 : 0;

    std::optional<Propagator> on;
    std::optional<Propagator> off;
    if (c.has_cell) {
        on.emplace(build_state_space(c, Topology::On));
        off.emplace(build_state_space(c, Topology::Off));
    }
    Propagator idle(std::move(idle_sys));

    const auto propagator_for = [&](Topology topo) -> const Propagator& {
        if (topo == Topology::On) return *on;
        if (topo == Topology::Off) return *off;
        return idle;
    };

    std::optional<ControlGraph> graph;
    double islope = 0.0;
    if (c.has_cell) {
        graph.emplace(c.regulator,
                      make_cell_params(c.cell.inductance, t_s, c.cell.bidirectional), t_s);
        islope = graph->peak_islope();
    }

    Eigen::VectorXd x(n_states);
    if (c.has_cell) x(0) = c.cell.initial_current;
    for (int j = 0; j < nc; ++j) x(cap_state + j) = c.capacitors[j].initial_voltage;

    ExactResult result;
    result.trace.switching_frequency = c.switching_frequency;
    result.trace.node_labels = c.node_labels;
    for (const auto& cap : c.capacitors) result.trace.cap_names.push_back(cap.name);
    result.trace.rows.reserve(periods);

    result.waves.signals.reserve(1 + nc);
    if (c.has_cell) result.waves.signals.push_back(Waveform{"i_L", "A", {}, {}});
    for (const auto& cap : c.capacitors) {
        result.waves.signals.push_back(Waveform{"v(" + cap.name + ")", "V", {}, {}});
    }
    for (auto& w : result.waves.signals) {
        w.times.reserve(static_cast<size_t>(periods) * ppp + 1);
        w.values.reserve(static_cast<size_t>(periods) * ppp + 1);
    }

    long segments_total = 0;
    long newton_total = 0;
    std::vector<double> probe_voltages(c.node_count(), 0.0);
    const StateSpaceSystem* view_sys = &idle.system();

    const auto wall_start = std::chrono::steady_clock::now();
    for (int n = 0; n < periods; ++n) {
        const double t0 = n * t_s;
        const std::vector<double> u_std = c.source_values_at(t0);
        const Eigen::VectorXd u =
            Eigen::Map<const Eigen::VectorXd>(u_std.data(), u_std.size());

        // ------------------------------------------------------------------
        // Clock the regulator once, on samples taken through the topology
        // that was live just before the period boundary.
        // ------------------------------------------------------------------
        double t_on = 0.0;
        double peak_iref = 0.0;
        bool peak_active = false;
        if (c.has_cell) {
            const Eigen::VectorXd y = view_sys->c * x + view_sys->d * u;
            for (int nn = 0; nn < nodes; ++nn) probe_voltages[nn + 1] = y(nn);
            const double i_l_now = x(i_l_state);
            const double v1_now =
                probe_voltages[c.cell.port1_from()] - probe_voltages[c.cell.port1_to()];
            const FeedbackView view{&probe_voltages, i_l_now, i_l_now, v1_now};
            const DutyDecision decision = graph->eval_duty(view, t0, true);

            // The duty edge is clock-driven; the peak limit acts through its
            // comparator on the instantaneous current instead of through the
            // averaged candidate.
            double d_time = graph->duty_max();
            for (const auto& cand : decision.candidates) {
                if (cand.kind == DutyCandidate::Kind::PeakLimit) continue;
                d_time = std::min(d_time, cand.value);
            }
            d_time = std::clamp(d_time, 0.0, graph->duty_max());
            t_on = d_time * t_s;
            if (decision.peak_iref.has_value()) {
                peak_active = true;
                peak_iref = *decision.peak_iref;
            }
        }

        // ------------------------------------------------------------------
        // Chain topology segments across the period.
        // ------------------------------------------------------------------
        std::vector<Segment> segs;
        double tau = 0.0;
        Topology topo;
        if (!c.has_cell) {
            topo = Topology::Idle;
        } else if (t_on > 0.0) {
            topo = Topology::On;
            if (unidir && x(i_l_state) <= kCurrentTolerance &&
                on->derivative(x, u)(i_l_state) <= 0.0) {
                topo = Topology::Idle;  // switch closed onto a blocked current
            }
            if (topo == Topology::On && peak_active &&
                x(i_l_state) >= peak_iref) {
                topo = (unidir && x(i_l_state) <= kCurrentTolerance) ? Topology::Idle
                                                                     : Topology::Off;
            }
        } else {
            topo = (!unidir || x(i_l_state) > kCurrentTolerance) ? Topology::Off
                                                                 : Topology::Idle;
        }

        int changes = 0;
        while (tau < t_s) {
            if (++changes > kMaxTopologyChanges) {
                throw SimulationError("more than 16 topology changes in period " +
                                      std::to_string(n) + "; event cascade aborted");
            }
            const Propagator& prop = propagator_for(topo);
            double seg_end = t_s;
            Topology next = topo;

            if (topo == Topology::On) {
                seg_end = std::min(t_on, t_s);
                next = Topology::Off;
                if (peak_active) {
                    AffineGuard guard;
                    guard.on_state = Eigen::VectorXd::Zero(n_states);
                    guard.on_state(i_l_state) = 1.0;
                    guard.offset = -peak_iref;
                    guard.slope = islope / t_s;
                    const SwitchEvent ev = find_switch_instant(prop, x, u, guard, seg_end - tau);
                    newton_total += ev.iterations;
                    if (ev.found && tau + ev.t_star < seg_end) {
                        seg_end = tau + ev.t_star;
                    }
                }
                if (unidir) {
                    AffineGuard guard;
                    guard.on_state = Eigen::VectorXd::Zero(n_states);
                    guard.on_state(i_l_state) = 1.0;
                    const SwitchEvent ev = find_switch_instant(prop, x, u, guard, seg_end - tau);
                    newton_total += ev.iterations;
                    if (ev.found && ev.t_star > 0.0 && tau + ev.t_star < seg_end) {
                        seg_end = tau + ev.t_star;
                        next = Topology::Idle;
                    }
                }
            } else if (topo == Topology::Off && unidir) {
                AffineGuard guard;
                guard.on_state = Eigen::VectorXd::Zero(n_states);
                guard.on_state(i_l_state) = 1.0;
                const SwitchEvent ev = find_switch_instant(prop, x, u, guard, seg_end - tau);
                newton_total += ev.iterations;
                if (ev.found && tau + ev.t_star < seg_end) {
                    seg_end = tau + ev.t_star;
                    next = Topology::Idle;
                }
            }

            Segment seg;
            seg.topology = topo;
            seg.begin = tau;
            seg.end = seg_end;
            seg.x_begin = x;
            segs.push_back(std::move(seg));
            ++segments_total;

            x = prop.propagate(segs.back().x_begin, u, seg_end - tau);
            if (topo == Topology::On && seg_end >= t_on && next == Topology::Off &&
                unidir && x(i_l_state) <= kCurrentTolerance) {
                next = Topology::Idle;
            }
            if (next == Topology::Idle && i_l_state >= 0) {
                // entering idle pins the blocked current at exactly zero
                if (std::abs(x(i_l_state)) <= kCurrentTolerance) x(i_l_state) = 0.0;
            }
            tau = seg_end;
            topo = next;
            view_sys = &prop.system();
        }

        // ------------------------------------------------------------------
        // Sample the period on the uniform grid and accumulate averages.
        // ------------------------------------------------------------------
        const double h = t_s / ppp;
        PeriodAccumulator acc;
        acc.state_sum = Eigen::VectorXd::Zero(n_states);
        acc.output_sum = Eigen::VectorXd::Zero(nodes + nc);
        int j = 0;
        double i_l1 = c.has_cell ? segs.front().x_begin(i_l_state) : 0.0;
        double i_l2 = i_l1;
        double on_duration = 0.0;
        double off_duration = 0.0;
        bool idled = !c.has_cell;

        for (size_t s = 0; s < segs.size(); ++s) {
            const Segment& seg = segs[s];
            const Eigen::VectorXd& x_end = s + 1 < segs.size() ? segs[s + 1].x_begin : x;
            const Propagator& prop = propagator_for(seg.topology);
            const StateSpaceSystem& ss = prop.system();

            if (seg.topology == Topology::On) on_duration += seg.end - seg.begin;
            if (seg.topology == Topology::Off) off_duration += seg.end - seg.begin;
            if (seg.topology == Topology::Idle && c.has_cell) idled = true;
            if (c.has_cell) {
                if (seg.topology == Topology::On) i_l1 = x_end(i_l_state);
                if (seg.topology != Topology::Idle) i_l2 = x_end(i_l_state);
            }

            // March the grid points inside [begin, end) from the segment
            // start state; trapezoid pieces use the exact boundary states.
            Eigen::VectorXd xs = seg.x_begin;
            double prev_tau = seg.begin;
            double prev_i_l = c.has_cell ? xs(i_l_state) : 0.0;
            double* conduction = seg.topology == Topology::On    ? &acc.s1_integral
                                 : seg.topology == Topology::Off ? &acc.s2_integral
                                                                 : nullptr;
            bool stepped = false;
            TransitionPair tp;
            while (j < ppp && (t_s * j) / ppp < seg.end) {
                const double tau_j = (t_s * j) / ppp;
                if (!stepped) {
                    xs = prop.propagate(seg.x_begin, u, tau_j - seg.begin);
                    tp = prop.transition(h);
                    stepped = true;
                } else {
                    xs = tp.e * xs + tp.f * u;
                }
                const Eigen::VectorXd ys = ss.c * xs + ss.d * u;
                const double w_trap = (j == 0 || j == ppp) ? 0.5 : 1.0;
                acc.state_sum += (w_trap * h) * xs;
                acc.output_sum += (w_trap * h) * ys;
                for (size_t k = 0; k < result.waves.signals.size(); ++k) {
                    result.waves.signals[k].times.push_back(t0 + tau_j);
                    result.waves.signals[k].values.push_back(
                        i_l_state >= 0 && k == 0 ? xs(i_l_state)
                                                 : xs(cap_state + (k - (i_l_state >= 0))));
                }
                if (conduction) {
                    *conduction +=
                        0.5 * (tau_j - prev_tau) * (prev_i_l + xs(i_l_state));
                    prev_i_l = xs(i_l_state);
                }
                prev_tau = tau_j;
                ++j;
            }
            if (conduction) {
                *conduction += 0.5 * (seg.end - prev_tau) * (prev_i_l + x_end(i_l_state));
            }
        }

        // closing trapezoid weight at the period end state
        {
            const StateSpaceSystem& ss = *view_sys;
            const Eigen::VectorXd ye = ss.c * x + ss.d * u;
            acc.state_sum += (0.5 * h) * x;
            acc.output_sum += (0.5 * h) * ye;
        }

        PeriodRow row;
        row.t = t0;
        row.node_voltages.assign(c.node_count(), 0.0);
        for (int nn = 0; nn < nodes; ++nn) {
            row.node_voltages[nn + 1] = acc.output_sum(nn) / t_s;
        }
        row.cap_voltages.resize(nc);
        row.cap_currents.resize(nc);
        for (int jj = 0; jj < nc; ++jj) {
            row.cap_voltages[jj] = acc.state_sum(cap_state + jj) / t_s;
            row.cap_currents[jj] = acc.output_sum(nodes + jj) / t_s;
        }
        if (c.has_cell) {
            CellRecord& cell = row.cell;
            cell.i_l0 = segs.front().x_begin(i_l_state);
            cell.i_l1 = i_l1;
            cell.i_l2 = i_l2;
            cell.d = on_duration / t_s;
            cell.d2 = off_duration / t_s;
            cell.mode = idled ? ConductionMode::Dcm : ConductionMode::Ccm;
            cell.v1 = row.node_voltages[c.cell.port1_from()] -
                      row.node_voltages[c.cell.port1_to()];
            cell.v2 = row.node_voltages[c.cell.port2_from()] -
                      row.node_voltages[c.cell.port2_to()];
            cell.i_s1 = acc.s1_integral / t_s;
            cell.i_s2 = acc.s2_integral / t_s;
        }
        result.trace.rows.push_back(std::move(row));
    }
    const auto wall_end = std::chrono::steady_clock::now();

    // closing sample of the final state
    for (size_t k = 0; k < result.waves.signals.size(); ++k) {
        result.waves.signals[k].times.push_back(periods * t_s);
        result.waves.signals[k].values.push_back(
            i_l_state >= 0 && k == 0 ? x(i_l_state)
                                     : x(cap_state + (k - (i_l_state >= 0))));
    }

    result.report.engine = "exact";
    result.report.periods = periods;
    result.report.solves = segments_total;
    result.report.newton_iterations = newton_total;
    result.report.wall_seconds =
        std::chrono::duration<double>(wall_end - wall_start).count();
    result.report.exact_fallback_used =
        (on && on->fallback_used()) || (off && off->fallback_used()) ||
        idle.fallback_used();
    return result;
}

// ============================================================================
// Comparison
// ============================================================================

namespace {

SignalDeviation deviation_of(const std::string& name, const std::vector<double>& times,
                             const std::vector<double>& a, const std::vector<double>& b,
                             double t_start) {
    SignalDeviation dev;
    dev.name = name;

    const size_t count = a.size();
    const size_t tail = std::max<size_t>(1, count / 10);
    double tail_sum = 0.0;
    for (size_t i = count - tail; i < count; ++i) tail_sum += std::abs(b[i]);
    dev.scale = tail_sum / tail;

    size_t in_window = 0;
    double sum_abs = 0.0;
    for (size_t i = 0; i < count; ++i) {
        if (times[i] < t_start) continue;
        const double d = std::abs(a[i] - b[i]);
        sum_abs += d;
        ++in_window;
        if (d > dev.max_abs) {
            dev.max_abs = d;
            dev.at_time = times[i];
        }
    }
    dev.mean_abs = in_window > 0 ? sum_abs / in_window : 0.0;
    dev.normalized = dev.scale > 1e-12 ? dev.max_abs / dev.scale : dev.max_abs;
    return dev;
}

}  // namespace

std::vector<SignalDeviation> compare_waveform_sets(const WaveformSet& a,
                                                   const WaveformSet& b,
                                                   double t_start) {
    std::vector<SignalDeviation> devs;
    for (const auto& wa : a.signals) {
        const Waveform* wb = b.find(wa.name);
        if (wb == nullptr) continue;
        if (wa.times.size() != wb->times.size()) {
            throw SimulationError("waveform grids for " + wa.name + " do not align");
        }
        devs.push_back(deviation_of(wa.name, wa.times, wa.values, wb->values, t_start));
    }
    return devs;
}

DeviationReport compare_traces(const Circuit& c, const Trace& avg,
                               const ExactResult& exact, double t_start) {
    const Trace& ex = exact.trace;
    if (avg.rows.size() != ex.rows.size() ||
        avg.switching_frequency != ex.switching_frequency) {
        throw SimulationError("traces cover different horizons and are not comparable");
    }
    if (avg.rows.empty() || exact.waves.signals.empty()) {
        throw SimulationError("empty traces are not comparable");
    }

    const int periods = static_cast<int>(avg.rows.size());
    const size_t samples = exact.waves.signals.front().times.size();
    const int ppp = static_cast<int>((samples - 1) / periods);
    const WaveformSet avg_waves = reconstruct_all(c, avg, ppp);

    for (const auto& wa : avg_waves.signals) {
        const Waveform* wb = exact.waves.find(wa.name);
        if (wb != nullptr && !wa.times.empty() && !wb->times.empty() &&
            std::abs(wa.times.back() - wb->times.back()) > 1e-9 * avg.period()) {
            throw SimulationError("waveform grids for " + wa.name + " do not align");
        }
    }
    DeviationReport report;
    report.signals = compare_waveform_sets(avg_waves, exact.waves, t_start);

    // Per-period averages: node voltages, and the averaged inductor current
    // through the port-current identity i_s1 + i_s2.
    std::vector<double> row_times(periods);
    for (int n = 0; n < periods; ++n) row_times[n] = avg.rows[n].t;
    for (size_t node = 1; node < avg.node_labels.size(); ++node) {
        std::vector<double> a(periods);
        std::vector<double> b(periods);
        for (int n = 0; n < periods; ++n) {
            a[n] = avg.rows[n].node_voltages[node];
            b[n] = ex.rows[n].node_voltages[node];
        }
        report.period_signals.push_back(deviation_of("v(" + avg.node_labels[node] + ")",
                                                     row_times, a, b, t_start));
    }
    if (c.has_cell) {
        std::vector<double> a(periods);
        std::vector<double> b(periods);
        for (int n = 0; n < periods; ++n) {
            a[n] = avg.rows[n].cell.i_s1 + avg.rows[n].cell.i_s2;
            b[n] = ex.rows[n].cell.i_s1 + ex.rows[n].cell.i_s2;
        }
        report.period_signals.push_back(deviation_of("i_L", row_times, a, b, t_start));
    }

    for (const auto& dev : report.signals) {
        if (dev.normalized > report.worst_normalized) {
            report.worst_normalized = dev.normalized;
            report.worst_signal = dev.name;
        }
    }
    return report;
}

}  // namespace avgsim
