#include "avgsim/mna.hpp"

#include "avgsim/errors.hpp"

namespace avgsim {

namespace {

constexpr double kPivotRelThreshold = 1e-13;
constexpr double kResidualRelThreshold = 1e-9;

/// Shared assembly scaffolding. Row/column -1 stands for ground and is
/// silently dropped, the usual reduced-MNA trick.
struct Assembler {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;

    explicit Assembler(int n) : a(Eigen::MatrixXd::Zero(n, n)), b(Eigen::VectorXd::Zero(n)) {}

    void add(int row, int col, double value) {
        if (row >= 0 && col >= 0) a(row, col) += value;
    }
    void rhs(int row, double value) {
        if (row >= 0) b(row) += value;
    }
    void conductance(int n_pos, int n_neg, double g) {
        add(n_pos, n_pos, g);
        add(n_neg, n_neg, g);
        add(n_pos, n_neg, -g);
        add(n_neg, n_pos, -g);
    }
};

int unknown_of(NodeId node) { return node == kGroundNode ? -1 : node - 1; }

struct Layout {
    int node_count;       // unknown node voltages
    int source_offset;
    int port_offset;
    int cap_offset;       // -1 when capacitors use companions
    int total;
};

Layout make_layout(const Circuit& c, bool pin_capacitors) {
    Layout l{};
    l.node_count = c.node_count() - 1;
    l.source_offset = l.node_count;
    l.port_offset = l.source_offset + static_cast<int>(c.sources.size());
    const int ports = c.has_cell ? 2 : 0;
    if (pin_capacitors) {
        l.cap_offset = l.port_offset + ports;
        l.total = l.cap_offset + static_cast<int>(c.capacitors.size());
    } else {
        l.cap_offset = -1;
        l.total = l.port_offset + ports;
    }
    return l;
}

std::vector<std::string> make_labels(const Circuit& c, const Layout& l) {
    std::vector<std::string> labels;
    labels.reserve(l.total);
    for (int n = 1; n < c.node_count(); ++n) {
        labels.push_back("v(" + c.node_labels[n] + ")");
    }
    for (const auto& s : c.sources) labels.push_back("i(" + s.name + ")");
    if (c.has_cell) {
        labels.push_back("i_s1(" + c.cell.name + ")");
        labels.push_back("i_s2(" + c.cell.name + ")");
    }
    if (l.cap_offset >= 0) {
        for (const auto& cap : c.capacitors) labels.push_back("i(" + cap.name + ")");
    }
    return labels;
}

/// Ideal branch pinned to a voltage: used for sources always and for
/// capacitors in the operating-point form. The branch current unknown flows
/// from pos through the element to neg.
void stamp_voltage_branch(Assembler& asmb, int row, NodeId pos, NodeId neg, double volts) {
    const int up = unknown_of(pos);
    const int un = unknown_of(neg);
    asmb.add(up, row, 1.0);
    asmb.add(un, row, -1.0);
    asmb.add(row, up, 1.0);
    asmb.add(row, un, -1.0);
    asmb.rhs(row, volts);
}

/// Cell port branches. Port currents are explicit unknowns so the solution
/// reports them without any post-processing:
///   i_s1 = d*i_l0 + (d^2 g/2) v1
///   i_s2 = d2*i_l0 + d d2 g v1 + (d2^2 g/2) v2
/// with v1, v2 the directed port voltages.
void stamp_cell(Assembler& asmb, const Circuit& c, const Layout& l,
                const AveragedStamp& stamp, double gain) {
    const auto& cell = c.cell;
    const int s1 = l.port_offset;
    const int s2 = l.port_offset + 1;
    const int a1 = unknown_of(cell.port1_from());
    const int b1 = unknown_of(cell.port1_to());
    const int a2 = unknown_of(cell.port2_from());
    const int b2 = unknown_of(cell.port2_to());

    // KCL: each port current leaves its from node and enters its to node.
    asmb.add(a1, s1, 1.0);
    asmb.add(b1, s1, -1.0);
    asmb.add(a2, s2, 1.0);
    asmb.add(b2, s2, -1.0);

    const double g1 = 0.5 * stamp.d * stamp.d * gain;
    const double gm = stamp.d * stamp.d2 * gain;
    const double g2 = 0.5 * stamp.d2 * stamp.d2 * gain;

    asmb.add(s1, s1, 1.0);
    asmb.add(s1, a1, -g1);
    asmb.add(s1, b1, g1);
    asmb.rhs(s1, stamp.d * stamp.i_l0);

    asmb.add(s2, s2, 1.0);
    asmb.add(s2, a1, -gm);
    asmb.add(s2, b1, gm);
    asmb.add(s2, a2, -g2);
    asmb.add(s2, b2, g2);
    asmb.rhs(s2, stamp.d2 * stamp.i_l0);
}

void stamp_common(Assembler& asmb, const Circuit& c, const Layout& l,
                  const std::vector<double>& source_values) {
    for (const auto& r : c.resistors) {
        asmb.conductance(unknown_of(r.pos), unknown_of(r.neg), 1.0 / r.resistance);
    }
    for (size_t i = 0; i < c.sources.size(); ++i) {
        stamp_voltage_branch(asmb, l.source_offset + static_cast<int>(i),
                             c.sources[i].pos, c.sources[i].neg, source_values[i]);
    }
}

}  // namespace

MnaSystem build_averaged_mna(const Circuit& c, const AveragedStamp& stamp,
                             const std::vector<CapacitorHistory>& histories,
                             const std::vector<double>& source_values) {
    const Layout l = make_layout(c, false);
    Assembler asmb(l.total);
    stamp_common(asmb, c, l, source_values);

    const double t_s = c.period();
    for (size_t i = 0; i < c.capacitors.size(); ++i) {
        const auto& cap = c.capacitors[i];
        const double g_eq = 2.0 * cap.capacitance / t_s;
        const double i_hist = g_eq * histories[i].voltage + histories[i].current;
        const int up = unknown_of(cap.pos);
        const int un = unknown_of(cap.neg);
        asmb.conductance(up, un, g_eq);
        asmb.rhs(up, i_hist);
        asmb.rhs(un, -i_hist);
    }

    if (c.has_cell) stamp_cell(asmb, c, l, stamp, t_s / c.cell.inductance);

    MnaSystem sys;
    sys.a = std::move(asmb.a);
    sys.b = std::move(asmb.b);
    sys.labels = make_labels(c, l);
    sys.port_current_offset = l.port_offset;
    sys.cap_current_offset = -1;
    sys.period = t_s;
    return sys;
}

MnaSystem build_init_mna(const Circuit& c, const std::vector<double>& source_values) {
    const Layout l = make_layout(c, true);
    Assembler asmb(l.total);
    stamp_common(asmb, c, l, source_values);

    for (size_t i = 0; i < c.capacitors.size(); ++i) {
        stamp_voltage_branch(asmb, l.cap_offset + static_cast<int>(i), c.capacitors[i].pos,
                             c.capacitors[i].neg, c.capacitors[i].initial_voltage);
    }

    if (c.has_cell) {
        stamp_cell(asmb, c, l, AveragedStamp{0.0, 0.0, c.cell.initial_current},
                   c.period() / c.cell.inductance);
    }

    MnaSystem sys;
    sys.a = std::move(asmb.a);
    sys.b = std::move(asmb.b);
    sys.labels = make_labels(c, l);
    sys.port_current_offset = l.port_offset;
    sys.cap_current_offset = l.cap_offset;
    sys.period = c.period();
    return sys;
}

Eigen::VectorXd solve_mna(const MnaSystem& sys) {
    const double norm_a = sys.a.cwiseAbs().rowwise().sum().maxCoeff();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.a);

    const auto diag = lu.matrixLU().diagonal();
    const double pivot_floor = kPivotRelThreshold * norm_a;
    for (int k = 0; k < diag.size(); ++k) {
        if (std::abs(diag(k)) < pivot_floor) {
            throw SimulationError("singular system: no independent equation for unknown " +
                                  sys.labels[k] + " (pivot " + std::to_string(diag(k)) +
                                  ")");
        }
    }

    Eigen::VectorXd x = lu.solve(sys.b);
    const double residual = (sys.a * x - sys.b).cwiseAbs().maxCoeff();
    const double bound = kResidualRelThreshold * (1.0 + sys.b.cwiseAbs().maxCoeff());
    if (!(residual <= bound)) {
        throw SimulationError("period solve residual " + std::to_string(residual) +
                              " exceeds bound " + std::to_string(bound));
    }
    return x;
}

AveragedSolution extract_solution(const Circuit& c, const MnaSystem& sys,
                                  const Eigen::VectorXd& x,
                                  const std::vector<CapacitorHistory>* histories) {
    AveragedSolution sol;
    sol.node_voltages.assign(c.node_count(), 0.0);
    for (int n = 1; n < c.node_count(); ++n) sol.node_voltages[n] = x(n - 1);

    if (c.has_cell) {
        const auto& cell = c.cell;
        sol.v1 = sol.node_voltages[cell.port1_from()] - sol.node_voltages[cell.port1_to()];
        sol.v2 = sol.node_voltages[cell.port2_from()] - sol.node_voltages[cell.port2_to()];
        sol.i_s1 = x(sys.port_current_offset);
        sol.i_s2 = x(sys.port_current_offset + 1);
    }

    sol.cap_voltages.resize(c.capacitors.size());
    sol.cap_currents.resize(c.capacitors.size());
    for (size_t i = 0; i < c.capacitors.size(); ++i) {
        const auto& cap = c.capacitors[i];
        const double v = sol.node_voltages[cap.pos] - sol.node_voltages[cap.neg];
        sol.cap_voltages[i] = v;
        if (sys.cap_current_offset >= 0) {
            sol.cap_currents[i] = x(sys.cap_current_offset + static_cast<int>(i));
        } else {
            const double g_eq = 2.0 * cap.capacitance / sys.period;
            const auto& h = (*histories)[i];
            sol.cap_currents[i] = g_eq * (v - h.voltage) - h.current;
        }
    }
    return sol;
}

}  // namespace avgsim
