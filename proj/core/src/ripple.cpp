#include "avgsim/ripple.hpp"

#include <Eigen/Dense>
#include <stdexcept>

#include "avgsim/errors.hpp"
#include "avgsim/mna.hpp"

namespace avgsim {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

/// Linear segment of the routed deviation current, offsets relative to the
/// period start. phi_start is the accumulated integral at the segment start.
struct DeviationSegment {
    double start = 0.0;
    double length = 0.0;
    double delta_start = 0.0;
    double delta_end = 0.0;
    double phi_start = 0.0;
};

struct DeviationProfile {
    DeviationSegment segments[3];
    double phi_mean = 0.0;
};

DeviationProfile make_profile(const CellRecord& cell, double period, double k1,
                              double k2) {
    const double t1 = cell.d * period;
    const double t2 = (cell.d + cell.d2) * period;
    const double base = -k1 * cell.i_s1 - k2 * cell.i_s2;

    DeviationProfile p;
    p.segments[0] = DeviationSegment{0.0, t1, base + k1 * cell.i_l0,
                                     base + k1 * cell.i_l1, 0.0};
    p.segments[1] = DeviationSegment{t1, t2 - t1, base + k2 * cell.i_l1,
                                     base + k2 * cell.i_l2, 0.0};
    p.segments[2] = DeviationSegment{t2, period - t2, base, base, 0.0};

    double phi = 0.0;
    double phi_integral = 0.0;
    for (auto& seg : p.segments) {
        seg.phi_start = phi;
        const double h = seg.length;
        if (h <= 0.0) continue;
        phi_integral += phi * h + h * h * (2.0 * seg.delta_start + seg.delta_end) / 6.0;
        phi += h * 0.5 * (seg.delta_start + seg.delta_end);
    }
    p.phi_mean = phi_integral / period;
    return p;
}

double profile_phi(const DeviationProfile& p, double tau) {
    const DeviationSegment* seg = &p.segments[0];
    for (int s = 2; s > 0; --s) {
        if (tau >= p.segments[s].start && p.segments[s].length > 0.0) {
            seg = &p.segments[s];
            break;
        }
    }
    const double x = tau - seg->start;
    double slope_term = 0.0;
    if (seg->length > 0.0) {
        slope_term = (seg->delta_end - seg->delta_start) * x * x / (2.0 * seg->length);
    }
    return seg->phi_start + seg->delta_start * x + slope_term;
}

double inductor_at(const CellRecord& cell, double tau, double period) {
    const double t1 = cell.d * period;
    const double t2 = (cell.d + cell.d2) * period;
    if (tau < t1) return cell.i_l0 + (cell.i_l1 - cell.i_l0) * (tau / t1);
    if (tau < t2) return cell.i_l1 + (cell.i_l2 - cell.i_l1) * ((tau - t1) / (t2 - t1));
    return cell.i_l2;
}

}  // namespace

RippleRouting compute_ripple_routing(const Circuit& c) {
    const int nodes = c.node_count() - 1;  // ground eliminated
    const int ns = static_cast<int>(c.sources.size());
    const int nc = static_cast<int>(c.capacitors.size());
    const int dim = nodes + ns + nc;

    MnaSystem sys;
    sys.a = Eigen::MatrixXd::Zero(dim, dim);
    sys.b = Eigen::VectorXd::Zero(dim);
    sys.period = c.period();
    sys.port_current_offset = dim;
    sys.cap_current_offset = nodes + ns;
    for (int n = 1; n <= nodes; ++n) sys.labels.push_back("v(" + c.node_labels[n] + ")");
    for (const auto& s : c.sources) sys.labels.push_back("i(" + s.name + ")");
    for (const auto& cap : c.capacitors) sys.labels.push_back("i(" + cap.name + ")");

    const auto unknown = [](NodeId n) { return n - 1; };
    const auto add = [&](int r, int col, double g) {
        if (r >= 0 && col >= 0) sys.a(r, col) += g;
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

    // Zero-volt branches: KCL incidence for the branch current plus the
    // constraint v_pos - v_neg = 0.
    const auto stamp_short = [&](int row, NodeId pos, NodeId neg) {
        const int p = pos == kGroundNode ? -1 : unknown(pos);
        const int n = neg == kGroundNode ? -1 : unknown(neg);
        add(p, row, 1.0);
        add(n, row, -1.0);
        add(row, p, 1.0);
        add(row, n, -1.0);
    };
    for (int j = 0; j < ns; ++j) {
        stamp_short(nodes + j, c.sources[j].pos, c.sources[j].neg);
    }
    for (int j = 0; j < nc; ++j) {
        stamp_short(nodes + ns + j, c.capacitors[j].pos, c.capacitors[j].neg);
    }

    const auto inject = [&](NodeId from, NodeId to) {
        sys.b.setZero();
        if (to != kGroundNode) sys.b(unknown(to)) += 1.0;
        if (from != kGroundNode) sys.b(unknown(from)) -= 1.0;
    };

    RippleRouting routing;
    routing.k1.resize(nc);
    routing.k2.resize(nc);
    if (nc == 0 || !c.has_cell) return routing;

    inject(c.cell.port1_from(), c.cell.port1_to());
    const Eigen::VectorXd x1 = solve_mna(sys);
    inject(c.cell.port2_from(), c.cell.port2_to());
    const Eigen::VectorXd x2 = solve_mna(sys);
    for (int j = 0; j < nc; ++j) {
        routing.k1[j] = x1(nodes + ns + j);
        routing.k2[j] = x2(nodes + ns + j);
    }
    return routing;
}

Waveform reconstruct_inductor_current(const Trace& trace, int ppp) {
    require(ppp >= 2, "points per period must be at least 2");
    require(!trace.rows.empty(), "trace has no periods");
    const double period = trace.period();

    Waveform w;
    w.name = "i_L";
    w.unit = "A";
    w.times.reserve(trace.rows.size() * ppp + 1);
    w.values.reserve(trace.rows.size() * ppp + 1);
    for (const auto& row : trace.rows) {
        for (int j = 0; j < ppp; ++j) {
            const double tau = (period * j) / ppp;
            w.times.push_back(row.t + tau);
            w.values.push_back(inductor_at(row.cell, tau, period));
        }
    }
    const auto& last = trace.rows.back();
    w.times.push_back(last.t + period);
    w.values.push_back(inductor_at(last.cell, period, period));
    return w;
}

Waveform reconstruct_capacitor_voltage(const Trace& trace, const Capacitor& capacitor,
                                       int cap_index, double k1, double k2, int ppp) {
    require(ppp >= 2, "points per period must be at least 2");
    require(!trace.rows.empty(), "trace has no periods");
    require(cap_index >= 0 &&
                cap_index < static_cast<int>(trace.rows.front().cap_voltages.size()),
            "capacitor index out of range");
    const double period = trace.period();

    Waveform w;
    w.name = "v(" + capacitor.name + ")";
    w.unit = "V";
    w.times.reserve(trace.rows.size() * ppp + 1);
    w.values.reserve(trace.rows.size() * ppp + 1);
    for (const auto& row : trace.rows) {
        const DeviationProfile profile = make_profile(row.cell, period, k1, k2);
        const double v_avg = row.cap_voltages[cap_index];
        for (int j = 0; j < ppp; ++j) {
            const double tau = (period * j) / ppp;
            w.times.push_back(row.t + tau);
            w.values.push_back(v_avg + (profile_phi(profile, tau) - profile.phi_mean) /
                                           capacitor.capacitance);
        }
    }
    const auto& last = trace.rows.back();
    const DeviationProfile profile = make_profile(last.cell, period, k1, k2);
    w.times.push_back(last.t + period);
    w.values.push_back(last.cap_voltages[cap_index] +
                       (profile_phi(profile, period) - profile.phi_mean) /
                           capacitor.capacitance);
    return w;
}

WaveformSet reconstruct_all(const Circuit& circuit, const Trace& trace, int ppp) {
    const RippleRouting routing = compute_ripple_routing(circuit);
    WaveformSet set;
    if (circuit.has_cell) {
        set.signals.push_back(reconstruct_inductor_current(trace, ppp));
    }
    for (size_t j = 0; j < circuit.capacitors.size(); ++j) {
        set.signals.push_back(reconstruct_capacitor_voltage(
            trace, circuit.capacitors[j], static_cast<int>(j), routing.k1[j],
            routing.k2[j], ppp));
    }
    return set;
}

}  // namespace avgsim
