#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "avgsim/avgcell.hpp"

namespace avgsim {

/// Cell quantities recorded for one period, mutually consistent: the
/// subinterval currents and port averages are evaluated from the same duty
/// pair and port voltages, so the reconstructed waveform integrates back to
/// the recorded averages.
struct CellRecord {
    double i_l0 = 0.0;
    double i_l1 = 0.0;
    double i_l2 = 0.0;
    double d = 0.0;
    double d2 = 0.0;
    ConductionMode mode = ConductionMode::Ccm;
    double v1 = 0.0;
    double v2 = 0.0;
    double i_s1 = 0.0;
    double i_s2 = 0.0;
};

/// One period of averaged results.
struct PeriodRow {
    double t = 0.0;
    std::vector<double> node_voltages;  ///< indexed by NodeId, ground entry 0.0
    CellRecord cell;
    std::vector<double> cap_voltages;
    std::vector<double> cap_currents;
};

/// Period-grid result of either engine.
struct Trace {
    double switching_frequency = 0.0;
    std::vector<std::string> node_labels;
    std::vector<std::string> cap_names;
    std::vector<PeriodRow> rows;

    [[nodiscard]] double period() const { return 1.0 / switching_frequency; }
};

/// Uniformly sampled instantaneous signal.
struct Waveform {
    std::string name;
    std::string unit;
    std::vector<double> times;
    std::vector<double> values;
};

struct WaveformSet {
    std::vector<Waveform> signals;

    [[nodiscard]] const Waveform* find(const std::string& name) const;
};

/// Writes the period trace: a units comment line, a header row
/// (t, node voltages, i_l0, d, d2, mode), then one row per period.
/// Doubles are printed with 17 significant digits so repeated runs and
/// round trips are bit-identical.
void write_trace_csv(std::ostream& out, const Trace& trace);

/// Writes aligned instantaneous samples, one column per signal.
void write_waves_csv(std::ostream& out, const WaveformSet& waves);

/// Shared float formatting for all CSV output.
[[nodiscard]] std::string csv_double(double v);

}  // namespace avgsim
