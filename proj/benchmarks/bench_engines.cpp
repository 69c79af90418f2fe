// Micro benchmarks for the hot paths of both engines: whole-run period
// throughput, the single averaged period solve, and the exact-engine
// propagation and event-location kernels.

#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "avgsim/exact.hpp"
#include "avgsim/mna.hpp"
#include "avgsim/netlist.hpp"
#include "avgsim/pece.hpp"

using namespace avgsim;

namespace {

std::string read_netlist_text(const std::string& name) {
    std::ifstream in(std::string(AVGSIM_NETLIST_DIR) + "/" + name);
    if (!in) throw std::runtime_error("cannot open netlist " + name);
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

Circuit load_circuit(const std::string& name) {
    return parse_netlist(read_netlist_text(name)).circuit;
}

void bm_averaged_transient(benchmark::State& state) {
    const Circuit c = load_circuit("buck.cir");
    long periods = 0;
    for (auto _ : state) {
        const SimulationResult res = run_transient(c);
        periods = res.report.periods;
        benchmark::DoNotOptimize(res.trace.rows.back().node_voltages[2]);
    }
    state.SetItemsProcessed(state.iterations() * periods);
    state.SetLabel("items = periods");
}

void bm_exact_transient(benchmark::State& state) {
    const Circuit c = load_circuit("buck.cir");
    const int ppp = static_cast<int>(state.range(0));
    long periods = 0;
    for (auto _ : state) {
        const ExactResult res = run_exact(c, ppp);
        periods = res.report.periods;
        benchmark::DoNotOptimize(res.trace.rows.back().node_voltages[2]);
    }
    state.SetItemsProcessed(state.iterations() * periods);
    state.SetLabel("items = periods");
}

void bm_averaged_period_solve(benchmark::State& state) {
    const Circuit c = load_circuit("buck.cir");
    const AveragedStamp stamp{0.5, 0.5, 1.0};
    const std::vector<CapacitorHistory> histories{{10.0, 0.0}};
    const std::vector<double> sources{20.0};
    for (auto _ : state) {
        const MnaSystem sys = build_averaged_mna(c, stamp, histories, sources);
        const Eigen::VectorXd x = solve_mna(sys);
        benchmark::DoNotOptimize(x(0));
    }
}

void bm_propagator_transition(benchmark::State& state) {
    const Circuit c = load_circuit("buck.cir");
    const Propagator prop(build_state_space(c, Topology::On));
    for (auto _ : state) {
        const TransitionPair tp = prop.transition(50e-6);
        benchmark::DoNotOptimize(tp.e(0, 0));
    }
}

void bm_switch_event_location(benchmark::State& state) {
    const Circuit c = load_circuit("buck.cir");
    const Propagator prop(build_state_space(c, Topology::Off));
    Eigen::VectorXd x0(2);
    x0 << 0.4, 10.0;  // diode current reaches zero inside the window
    Eigen::VectorXd u(1);
    u << 20.0;
    AffineGuard guard;
    guard.on_state = Eigen::VectorXd::Zero(2);
    guard.on_state(0) = 1.0;
    for (auto _ : state) {
        const SwitchEvent ev = find_switch_instant(prop, x0, u, guard, 50e-6);
        benchmark::DoNotOptimize(ev.t_star);
    }
}

void bm_netlist_parse(benchmark::State& state) {
    const std::string text = read_netlist_text("buck.cir");
    for (auto _ : state) {
        const ParsedNetlist res = parse_netlist(text);
        benchmark::DoNotOptimize(res.circuit.node_labels.size());
    }
}

}  // namespace

BENCHMARK(bm_averaged_transient)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_exact_transient)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_averaged_period_solve);
BENCHMARK(bm_propagator_transition);
BENCHMARK(bm_switch_event_location);
BENCHMARK(bm_netlist_parse);

BENCHMARK_MAIN();
