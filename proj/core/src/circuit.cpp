#include "avgsim/circuit.hpp"

#include <cmath>

namespace avgsim {

double VoltageSource::value_at(double t) const {
    switch (kind) {
        case SourceKind::Dc:
            return dc_value;
        case SourceKind::Sin: {
            const double v = amplitude * std::sin(2.0 * M_PI * frequency * t);
            return rectified ? std::fabs(v) : v;
        }
        case SourceKind::Step: {
            double value = steps.front().value;
            for (const auto& point : steps) {
                if (t >= point.time) {
                    value = point.value;
                } else {
                    break;
                }
            }
            return value;
        }
    }
    return 0.0;
}

NodeId SwitchingCell::port1_from() const {
    return t1;
}

NodeId SwitchingCell::port1_to() const {
    switch (topology) {
        case CellTopology::Buck:
            return t2;
        case CellTopology::Boost:
        case CellTopology::BuckBoost:
            return common;
    }
    return common;
}

NodeId SwitchingCell::port2_from() const {
    switch (topology) {
        case CellTopology::Buck:
            return common;
        case CellTopology::Boost:
            return t1;
        case CellTopology::BuckBoost:
            return t2;
    }
    return common;
}

NodeId SwitchingCell::port2_to() const {
    switch (topology) {
        case CellTopology::Buck:
            return t2;
        case CellTopology::Boost:
            return t2;
        case CellTopology::BuckBoost:
            return common;
    }
    return t2;
}

int Circuit::period_count() const {
    return static_cast<int>(std::llround(tran.t_stop * switching_frequency));
}

std::vector<double> Circuit::source_values_at(double t) const {
    std::vector<double> values;
    values.reserve(sources.size());
    for (const auto& source : sources) {
        values.push_back(source.value_at(t));
    }
    return values;
}

}  // namespace avgsim
