#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "avgsim/errors.hpp"
#include "avgsim/mna.hpp"
#include "common.hpp"

using namespace avgsim;

TEST_CASE("dense solve reproduces a hand-solved system") {
    MnaSystem sys;
    sys.a.resize(2, 2);
    sys.a << 2.0, 1.0, 1.0, 3.0;
    sys.b.resize(2);
    sys.b << 3.0, 5.0;
    sys.labels = {"v(a)", "v(b)"};

    const Eigen::VectorXd x = solve_mna(sys);
    CHECK(x(0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(x(1) == doctest::Approx(1.4).epsilon(1e-12));
}

TEST_CASE("a singular system names the unknown without an equation") {
    MnaSystem sys;
    sys.a.resize(2, 2);
    sys.a << 1.0, 1.0, 1.0, 1.0;
    sys.b.resize(2);
    sys.b << 1.0, 2.0;
    sys.labels = {"v(a)", "v(b)"};

    try {
        (void)solve_mna(sys);
        FAIL("expected a singularity error");
    } catch (const SimulationError& e) {
        const std::string what = e.what();
        CHECK(what.find("singular") != std::string::npos);
        CHECK(what.find("v(b)") != std::string::npos);
    }
}

TEST_CASE("averaged period system satisfies node current balance") {
    const Circuit circuit = test_common::load_netlist("buck.cir");
    REQUIRE(circuit.capacitors.size() == 1);

    const AveragedStamp stamp{0.4, 0.6, 1.2};
    const std::vector<CapacitorHistory> histories{{9.5, 0.3}};
    const auto sources = circuit.source_values_at(0.0);

    const MnaSystem sys = build_averaged_mna(circuit, stamp, histories, sources);
    const Eigen::VectorXd x = solve_mna(sys);
    const AveragedSolution sol = extract_solution(circuit, sys, x, &histories);

    const double g = circuit.period() / circuit.cell.inductance;

    // port currents obey the controlled-source relations at the solved voltages
    const double s1_expect = stamp.d * stamp.i_l0 + 0.5 * stamp.d * stamp.d * g * sol.v1;
    const double s2_expect = stamp.d2 * stamp.i_l0 + stamp.d * stamp.d2 * g * sol.v1 +
                             0.5 * stamp.d2 * stamp.d2 * g * sol.v2;
    CHECK(sol.i_s1 == doctest::Approx(s1_expect).epsilon(1e-9));
    CHECK(sol.i_s2 == doctest::Approx(s2_expect).epsilon(1e-9));

    // input node: the source current returns through the first cell port
    const double i_vin = x(sys.port_current_offset - 1);
    CHECK(std::abs(i_vin + sol.i_s1) <= 1e-9 * (1.0 + std::abs(sol.i_s1)));

    // output node: both ports feed the capacitor and the load
    const double v_out = sol.node_voltages[2];
    const double i_load = v_out / circuit.resistors[0].resistance;
    const double balance = sol.i_s1 + sol.i_s2 - sol.cap_currents[0] - i_load;
    CHECK(std::abs(balance) <= 1e-9 * (1.0 + std::abs(i_load)));
}

TEST_CASE("averaged system labels follow the unknown layout") {
    const Circuit circuit = test_common::load_netlist("buck.cir");
    const MnaSystem sys = build_averaged_mna(circuit, AveragedStamp{}, {{0.0, 0.0}},
                                             circuit.source_values_at(0.0));
    REQUIRE(sys.labels.size() == 5);
    CHECK(sys.labels[0] == "v(1)");
    CHECK(sys.labels[1] == "v(2)");
    CHECK(sys.labels[2] == "i(VIN)");
    CHECK(sys.labels[3] == "i_s1(XCELL)");
    CHECK(sys.labels[4] == "i_s2(XCELL)");
    CHECK(sys.port_current_offset == 3);
    CHECK(sys.cap_current_offset == -1);
}

TEST_CASE("start-up operating point pins capacitors and idles the cell") {
    const Circuit circuit = test_common::load_netlist("buck_open.cir");
    const MnaSystem sys = build_init_mna(circuit, circuit.source_values_at(0.0));
    REQUIRE(sys.cap_current_offset >= 0);

    const Eigen::VectorXd x = solve_mna(sys);
    const AveragedSolution sol = extract_solution(circuit, sys, x, nullptr);

    CHECK(sol.node_voltages[1] == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(sol.cap_voltages[0] == doctest::Approx(10.0).epsilon(1e-12));
    // an inert cell carries nothing, so the source sees an open input
    CHECK(std::abs(sol.i_s1) <= 1e-12);
    CHECK(std::abs(sol.i_s2) <= 1e-12);
    CHECK(std::abs(x(sys.port_current_offset - 1)) <= 1e-12);
    // the pinned capacitor supplies the load alone: 10 V over 10 ohm
    CHECK(sol.cap_currents[0] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("trapezoidal companion injects the history current") {
    // single capacitor straight across a source through a resistor:
    // G_eq = 2C/T stamps like a conductance with a history source
    const Circuit circuit = test_common::load_netlist("rc.cir");
    REQUIRE_FALSE(circuit.has_cell);
    const std::vector<CapacitorHistory> histories{{2.0, 0.5}};
    const MnaSystem sys = build_averaged_mna(circuit, AveragedStamp{}, histories,
                                             circuit.source_values_at(0.0));
    const Eigen::VectorXd x = solve_mna(sys);
    const AveragedSolution sol = extract_solution(circuit, sys, x, &histories);

    // hand solve: v = (v_in/R + G_eq v_h + i_h) / (1/R + G_eq)
    const double g_eq = 2.0 * circuit.capacitors[0].capacitance / circuit.period();
    const double r = circuit.resistors[0].resistance;
    const double v_expect = (10.0 / r + g_eq * 2.0 + 0.5) / (1.0 / r + g_eq);
    CHECK(sol.cap_voltages[0] == doctest::Approx(v_expect).epsilon(1e-12));
    // companion current recovered from the history pair
    const double i_expect = g_eq * (sol.cap_voltages[0] - 2.0) - 0.5;
    CHECK(sol.cap_currents[0] == doctest::Approx(i_expect).epsilon(1e-12));
}
