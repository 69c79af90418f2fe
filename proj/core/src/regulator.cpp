#include "avgsim/regulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "avgsim/errors.hpp"

namespace avgsim {

namespace {

constexpr double kPeakDenominatorGuard = 1e-12;

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

/// Multiplies polynomial p (ascending powers) by (1 + sign*x).
std::vector<double> mul_binomial(const std::vector<double>& p, double sign) {
    std::vector<double> out(p.size() + 1, 0.0);
    for (size_t i = 0; i < p.size(); ++i) {
        out[i] += p[i];
        out[i + 1] += sign * p[i];
    }
    return out;
}

/// Expands sum_k c[k] (2/T)^k (1-x)^k (1+x)^(n-k) where x = z^-1.
std::vector<double> substitute(const std::vector<double>& coeffs, size_t n, double period) {
    std::vector<double> acc(n + 1, 0.0);
    const double two_over_t = 2.0 / period;
    for (size_t k = 0; k < coeffs.size(); ++k) {
        std::vector<double> term{coeffs[k] * std::pow(two_over_t, static_cast<double>(k))};
        for (size_t j = 0; j < k; ++j) term = mul_binomial(term, -1.0);
        for (size_t j = k; j < n; ++j) term = mul_binomial(term, 1.0);
        for (size_t i = 0; i < term.size(); ++i) acc[i] += term[i];
    }
    return acc;
}

}  // namespace

DiscreteTf bilinear_discretize(const std::vector<double>& num,
                               const std::vector<double>& den, double period) {
    if (num.empty() || den.empty()) {
        throw SimulationError("transfer function needs numerator and denominator");
    }
    if (num.size() > den.size()) {
        throw SimulationError("improper transfer function (deg num > deg den)");
    }
    if (period <= 0.0) throw SimulationError("nonpositive discretization period");

    const size_t n = den.size() - 1;
    DiscreteTf tf;
    tf.b = substitute(num, n, period);
    tf.a = substitute(den, n, period);
    const double a0 = tf.a[0];
    if (std::fabs(a0) < 1e-300) {
        throw SimulationError("denominator vanishes at the bilinear mapping point 2/T");
    }
    for (auto& v : tf.b) v /= a0;
    for (auto& v : tf.a) v /= a0;
    return tf;
}

ControlGraph::ControlGraph(const RegulatorSpec& spec, const CellParams& cell,
                           double period) {
    peak_ = spec.peak;
    duty_max_ = spec.has_duty_max ? spec.duty_max : 1.0;
    soft_start_duration_ = spec.has_soft_start ? spec.soft_start_duration : 0.0;
    cell_gain_ = cell.gain;

    std::map<std::string, int> index;  // uppercase name -> declaration index
    for (size_t i = 0; i < spec.blocks.size(); ++i) {
        const auto key = upper(spec.blocks[i].name);
        if (!index.emplace(key, static_cast<int>(i)).second) {
            throw SimulationError("duplicate regulator signal '" + spec.blocks[i].name + "'");
        }
    }
    auto resolve = [&](const std::string& name) {
        auto it = index.find(upper(name));
        if (it == index.end()) {
            throw SimulationError("regulator references unknown signal '" + name + "'");
        }
        return it->second;
    };

    // Topological order via depth-first sweep; a back edge means the block
    // diagram feeds itself combinationally within one period.
    std::vector<Node> declared(spec.blocks.size());
    for (size_t i = 0; i < spec.blocks.size(); ++i) {
        declared[i].spec = spec.blocks[i];
        const auto& b = spec.blocks[i];
        if (b.kind == BlockKind::Gain || b.kind == BlockKind::Sum ||
            b.kind == BlockKind::Mult || b.kind == BlockKind::Tf ||
            b.kind == BlockKind::Pwm) {
            declared[i].in1 = resolve(b.in1);
        }
        if (b.kind == BlockKind::Sum || b.kind == BlockKind::Mult) {
            declared[i].in2 = resolve(b.in2);
        }
        if (b.kind == BlockKind::Tf) {
            declared[i].tf = bilinear_discretize(b.num, b.den, period);
            const size_t order = declared[i].tf.a.size() - 1;
            declared[i].state.assign(order, 0.0);
        }
    }

    std::vector<int> mark(declared.size(), 0);  // 0 new, 1 visiting, 2 done
    std::vector<int> order;
    auto visit = [&](auto&& self, int i) -> void {
        if (mark[i] == 2) return;
        if (mark[i] == 1) {
            throw SimulationError("regulator signal cycle through '" +
                                  declared[i].spec.name + "'");
        }
        mark[i] = 1;
        if (declared[i].in1 >= 0) self(self, declared[i].in1);
        if (declared[i].in2 >= 0) self(self, declared[i].in2);
        mark[i] = 2;
        order.push_back(i);
    };
    for (size_t i = 0; i < declared.size(); ++i) visit(visit, static_cast<int>(i));

    std::vector<int> position(declared.size());
    for (size_t pos = 0; pos < order.size(); ++pos) position[order[pos]] = static_cast<int>(pos);
    nodes_.resize(declared.size());
    for (size_t i = 0; i < declared.size(); ++i) {
        Node node = std::move(declared[i]);
        if (node.in1 >= 0) node.in1 = position[node.in1];
        if (node.in2 >= 0) node.in2 = position[node.in2];
        nodes_[position[i]] = std::move(node);
    }
    values_.assign(nodes_.size(), 0.0);

    if (peak_.present && peak_.iref_is_signal) {
        peak_iref_index_ = position[resolve(peak_.iref_signal)];
    }
    // The duty_max clamp doubles as a candidate, so even an empty block list
    // yields a defined (if unregulated) duty.
}

double ControlGraph::eval_tf(Node& node, double u, bool commit) {
    const auto& b = node.tf.b;
    const auto& a = node.tf.a;
    const size_t order = node.state.size();
    const auto coeff = [](const std::vector<double>& v, size_t i) {
        return i < v.size() ? v[i] : 0.0;
    };
    const double y = coeff(b, 0) * u + (order ? node.state[0] : 0.0);
    if (commit) {
        for (size_t i = 0; i < order; ++i) {
            const double next = (i + 1 < order) ? node.state[i + 1] : 0.0;
            node.state[i] = coeff(b, i + 1) * u - coeff(a, i + 1) * y + next;
        }
    }
    return y;
}

DutyDecision ControlGraph::eval_duty(const FeedbackView& feedback, double t, bool commit) {
    DutyDecision decision;

    for (size_t i = 0; i < nodes_.size(); ++i) {
        Node& node = nodes_[i];
        double y = 0.0;
        switch (node.spec.kind) {
            case BlockKind::Probe:
                y = node.spec.cell_current ? feedback.cell_current
                                           : (*feedback.node_voltages)[node.spec.node];
                break;
            case BlockKind::Const:
                y = node.spec.value;
                break;
            case BlockKind::Gain:
                y = node.spec.value * values_[node.in1];
                break;
            case BlockKind::Sum:
                y = values_[node.in1] +
                    (node.spec.negate_in2 ? -values_[node.in2] : values_[node.in2]);
                break;
            case BlockKind::Mult:
                y = values_[node.in1] * values_[node.in2];
                break;
            case BlockKind::Tf:
                y = eval_tf(node, values_[node.in1], commit);
                break;
            case BlockKind::Pwm: {
                y = std::clamp(values_[node.in1] / node.spec.value, 0.0, 1.0);
                decision.candidates.push_back(
                    DutyCandidate{DutyCandidate::Kind::Pwm, y, node.spec.name});
                break;
            }
        }
        values_[i] = y;
    }

    if (peak_.present) {
        const double iref =
            peak_iref_index_ >= 0 ? values_[peak_iref_index_] : peak_.iref_value;
        decision.peak_iref = iref;
        const double denominator = peak_.islope + cell_gain_ * feedback.v1;
        double candidate = 1.0;
        if (denominator <= kPeakDenominatorGuard) {
            decision.peak_guard_warning = true;
        } else {
            candidate = std::clamp((iref - feedback.i_l0) / denominator, 0.0, 1.0);
        }
        decision.candidates.push_back(
            DutyCandidate{DutyCandidate::Kind::PeakLimit, candidate, "peaklimit"});
    }
    if (soft_start_duration_ > 0.0) {
        const double ramp = std::min(1.0, std::max(0.0, t) / soft_start_duration_);
        decision.candidates.push_back(DutyCandidate{DutyCandidate::Kind::SoftStart,
                                                    duty_max_ * ramp, "softstart"});
    }
    decision.candidates.push_back(
        DutyCandidate{DutyCandidate::Kind::DutyMax, duty_max_, "dutymax"});

    double duty = decision.candidates.front().value;
    for (const auto& cand : decision.candidates) duty = std::min(duty, cand.value);
    decision.duty = std::clamp(duty, 0.0, duty_max_);
    return decision;
}

}  // namespace avgsim
