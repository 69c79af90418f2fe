// Command line frontend: run one engine on a netlist and write CSV results,
// or benchmark both engines against each other on the same netlist.
//
// Exit codes: 0 success, 2 netlist problem, 3 simulation failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avgsim/exact.hpp"
#include "avgsim/netlist.hpp"
#include "avgsim/pece.hpp"
#include "avgsim/ripple.hpp"

namespace {

constexpr int kExitNetlist = 2;
constexpr int kExitSimulation = 3;

struct NetlistProblem : std::runtime_error {
    using std::runtime_error::runtime_error;
};

avgsim::Circuit load_netlist(const std::string& path, bool warnings_to_stderr) {
    std::ifstream in(path);
    if (!in) throw NetlistProblem(path + ": cannot open netlist");
    std::stringstream buffer;
    buffer << in.rdbuf();
    avgsim::ParsedNetlist parsed;
    try {
        parsed = avgsim::parse_netlist(buffer.str());
    } catch (const avgsim::ParseError& e) {
        throw NetlistProblem(path + ": " + e.what());
    }
    if (warnings_to_stderr) {
        for (const auto& w : parsed.warnings) {
            std::cerr << path << ": warning: " << w << '\n';
        }
    }
    return parsed.circuit;
}

void report_engine_warnings(const std::vector<avgsim::EngineWarning>& warnings) {
    for (const auto& w : warnings) {
        std::cerr << "warning [" << w.code << "] first in period " << w.first_period
                  << ", " << w.count << " period(s): " << w.message << '\n';
    }
}

void write_file(const std::filesystem::path& path, const auto& writer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw avgsim::SimulationError("cannot write " + path.string());
    writer(out);
}

/// Median over an odd or even number of repetitions.
double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_run(const std::string& netlist, const std::string& engine,
            const std::string& out_dir, int ppp_override) {
    const avgsim::Circuit circuit = load_netlist(netlist, true);
    const int ppp =
        ppp_override > 0 ? ppp_override : circuit.tran.points_per_period;

    avgsim::Trace trace;
    avgsim::WaveformSet waves;
    avgsim::RunReport report;
    if (engine == "avg") {
        avgsim::SimulationResult res = avgsim::run_transient(circuit);
        report_engine_warnings(res.warnings);
        waves = avgsim::reconstruct_all(circuit, res.trace, ppp);
        trace = std::move(res.trace);
        report = res.report;
    } else {
        avgsim::ExactResult res = avgsim::run_exact(circuit, ppp);
        report_engine_warnings(res.warnings);
        waves = std::move(res.waves);
        trace = std::move(res.trace);
        report = res.report;
    }

    const std::filesystem::path dir{out_dir};
    std::filesystem::create_directories(dir);
    const auto trace_path = dir / "trace.csv";
    const auto waves_path = dir / "waves.csv";
    write_file(trace_path, [&](std::ostream& o) { avgsim::write_trace_csv(o, trace); });
    write_file(waves_path, [&](std::ostream& o) { avgsim::write_waves_csv(o, waves); });

    std::cout << "engine=" << report.engine << " periods=" << report.periods
              << " solves=" << report.solves << " wall=" << avgsim::csv_double(report.wall_seconds)
              << "s\n";
    std::cout << "trace=" << trace_path.string() << " waves=" << waves_path.string()
              << '\n';
    return 0;
}

int cmd_bench(const std::string& netlist, int reps, const std::string& out_dir,
              bool self_check) {
    const avgsim::Circuit circuit = load_netlist(netlist, true);
    const int ppp = circuit.tran.points_per_period;

    std::vector<double> avg_walls;
    avgsim::SimulationResult avg;
    for (int r = 0; r < reps; ++r) {
        avg = avgsim::run_transient(circuit);
        avg_walls.push_back(avg.report.wall_seconds);
    }
    const avgsim::WaveformSet avg_waves =
        avgsim::reconstruct_all(circuit, avg.trace, ppp);

    std::vector<double> ref_walls;
    std::vector<avgsim::SignalDeviation> signals;
    std::string ref_name;
    long ref_solves = 0;
    if (self_check) {
        // Debug mode: the averaged engine against itself. Deviations must
        // come out exactly zero and the speedup close to one.
        ref_name = "avg";
        avgsim::SimulationResult again;
        for (int r = 0; r < reps; ++r) {
            again = avgsim::run_transient(circuit);
            ref_walls.push_back(again.report.wall_seconds);
        }
        ref_solves = again.report.solves;
        const avgsim::WaveformSet again_waves =
            avgsim::reconstruct_all(circuit, again.trace, ppp);
        signals = avgsim::compare_waveform_sets(avg_waves, again_waves, 0.0);
    } else {
        ref_name = "exact";
        avgsim::ExactResult exact;
        for (int r = 0; r < reps; ++r) {
            exact = avgsim::run_exact(circuit, ppp);
            ref_walls.push_back(exact.report.wall_seconds);
        }
        report_engine_warnings(exact.warnings);
        ref_solves = exact.report.solves;
        signals = avgsim::compare_traces(circuit, avg.trace, exact, 0.0).signals;
    }

    const double avg_med = median(avg_walls);
    const double ref_med = median(ref_walls);
    const double speedup = avg_med > 0.0 ? ref_med / avg_med : 0.0;

    std::ostringstream csv;
    csv << "# units: -,s,s,1\n";
    csv << "quantity,avg," << ref_name << ",ratio\n";
    csv << "median_wall," << avgsim::csv_double(avg_med) << ','
        << avgsim::csv_double(ref_med) << ',' << avgsim::csv_double(speedup) << '\n';
    csv << "solves," << avg.report.solves << ',' << ref_solves << ",\n";
    for (const auto& s : signals) {
        csv << "max_deviation(" << s.name << "),,," << avgsim::csv_double(s.max_abs)
            << '\n';
        csv << "normalized_deviation(" << s.name << "),,,"
            << avgsim::csv_double(s.normalized) << '\n';
    }

    const std::filesystem::path dir{out_dir};
    std::filesystem::create_directories(dir);
    write_file(dir / "bench.csv", [&](std::ostream& o) { o << csv.str(); });

    std::cout << "netlist: " << netlist << "  (" << reps << " repetition(s), "
              << avg.report.periods << " periods)\n";
    std::printf("  %-10s median wall %12.6f s   solves %ld\n", "avg", avg_med,
                avg.report.solves);
    std::printf("  %-10s median wall %12.6f s   solves %ld\n", ref_name.c_str(),
                ref_med, ref_solves);
    std::printf("  speedup    %.2fx\n", speedup);
    for (const auto& s : signals) {
        std::printf("  %-14s max deviation %.3e  normalized %.4f\n", s.name.c_str(),
                    s.max_abs, s.normalized);
    }
    std::cout << "bench=" << (dir / "bench.csv").string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Averaged-model transient simulator for regulated DC-DC converters"};
    app.require_subcommand(1);

    std::string netlist;
    std::string engine = "avg";
    std::string out_dir = ".";
    int ppp = 0;
    int reps = 5;
    bool self_check = false;

    CLI::App* run = app.add_subcommand("run", "Simulate one netlist and write CSVs");
    run->add_option("netlist", netlist, "Netlist file")->required();
    run->add_option("--engine", engine, "Engine: avg or exact")
        ->check(CLI::IsMember({"avg", "exact"}))
        ->capture_default_str();
    run->add_option("--out", out_dir, "Output directory")->capture_default_str();
    run->add_option("--ppp", ppp, "Waveform samples per period (default: netlist PPP)");

    CLI::App* bench = app.add_subcommand("bench", "Benchmark both engines");
    bench->add_option("netlist", netlist, "Netlist file")->required();
    bench->add_option("--reps", reps, "Repetitions per engine")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    bench->add_option("--out", out_dir, "Output directory")->capture_default_str();
    bench->add_flag("--self", self_check,
                    "Debug: benchmark the averaged engine against itself");

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(netlist, engine, out_dir, ppp);
        return cmd_bench(netlist, reps, out_dir, self_check);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const NetlistProblem& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNetlist;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSimulation;
    }
}
