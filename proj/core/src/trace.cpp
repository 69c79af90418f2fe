#include "avgsim/trace.hpp"

#include <cstdio>

#include "avgsim/errors.hpp"

namespace avgsim {

const Waveform* WaveformSet::find(const std::string& name) const {
    for (const auto& w : signals) {
        if (w.name == name) return &w;
    }
    return nullptr;
}

std::string csv_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
    out << "# units: s";
    for (size_t n = 1; n < trace.node_labels.size(); ++n) out << ",V";
    out << ",A,1,1,-\n";

    out << "t";
    for (size_t n = 1; n < trace.node_labels.size(); ++n) {
        out << ",v(" << trace.node_labels[n] << ")";
    }
    out << ",iL0,d,d2,mode\n";

    for (const auto& row : trace.rows) {
        out << csv_double(row.t);
        for (size_t n = 1; n < trace.node_labels.size(); ++n) {
            out << ',' << csv_double(row.node_voltages[n]);
        }
        out << ',' << csv_double(row.cell.i_l0);
        out << ',' << csv_double(row.cell.d);
        out << ',' << csv_double(row.cell.d2);
        out << ',' << (row.cell.mode == ConductionMode::Ccm ? "CCM" : "DCM");
        out << '\n';
    }
}

void write_waves_csv(std::ostream& out, const WaveformSet& waves) {
    if (waves.signals.empty()) return;
    const size_t count = waves.signals.front().times.size();
    for (const auto& w : waves.signals) {
        if (w.times.size() != count || w.values.size() != count) {
            throw SimulationError("waveforms have mismatched sample counts");
        }
    }

    out << "# units: s";
    for (const auto& w : waves.signals) out << ',' << w.unit;
    out << '\n';

    out << "t";
    for (const auto& w : waves.signals) out << ',' << w.name;
    out << '\n';

    const auto& times = waves.signals.front().times;
    for (size_t i = 0; i < count; ++i) {
        out << csv_double(times[i]);
        for (const auto& w : waves.signals) out << ',' << csv_double(w.values[i]);
        out << '\n';
    }
}

}  // namespace avgsim
