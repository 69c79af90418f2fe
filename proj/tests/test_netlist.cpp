#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "avgsim/netlist.hpp"
#include "common.hpp"

using namespace avgsim;

namespace {

/// Expects a ParseError and hands it to the probe for location checks.
template <typename Fn>
ParseError capture_parse_error(Fn&& fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e;
    }
    FAIL("expected a ParseError");
    return ParseError(0, 0, "unreachable");
}

constexpr const char* kMinimalTail = ".fs 20k\n.tran 1m\n";

}  // namespace

TEST_CASE("numeric tokens accept engineering suffixes and unit letters") {
    CHECK(parse_value("1m") == doctest::Approx(1e-3));
    CHECK(parse_value("1M") == doctest::Approx(1e-3));  // m is always milli
    CHECK(parse_value("100u") == doctest::Approx(1e-4));
    CHECK(parse_value("2MEG") == doctest::Approx(2e6));
    CHECK(parse_value("2meg") == doctest::Approx(2e6));
    CHECK(parse_value("1.5k") == doctest::Approx(1500.0));
    CHECK(parse_value("10V") == doctest::Approx(10.0));
    CHECK(parse_value("50uF") == doctest::Approx(50e-6));
    CHECK(parse_value("-3.3") == doctest::Approx(-3.3));
    CHECK(parse_value("1e3") == doctest::Approx(1000.0));
    CHECK(parse_value("0.5m") == doctest::Approx(5e-4));
    CHECK_THROWS_AS((void)parse_value("abc"), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_value(""), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_value("1x2"), std::invalid_argument);
}

TEST_CASE("shipped netlists survive a parse, serialize, parse round trip") {
    const char* files[] = {"buck.cir",      "buck_step.cir",
                           "buck_open.cir", "rectifier.cir",
                           "rectifier_nofilter.cir", "rc.cir"};
    for (const char* file : files) {
        CAPTURE(file);
        const Circuit first = test_common::load_netlist(file);
        const std::string text = serialize_netlist(first);
        const Circuit second = parse_netlist(text).circuit;
        CHECK(first == second);
        CHECK(serialize_netlist(second) == text);
    }
}

TEST_CASE("nodes are numbered by first appearance, case folded") {
    const auto parsed = parse_netlist(
        "V1 IN 0 DC 5\n"
        "R1 IN MID 10\n"
        "R2 MID 0 10\n"
        "R3 in 0 5\n"
        ".fs 20k\n"
        ".tran 1m\n");
    const Circuit& c = parsed.circuit;
    REQUIRE(c.node_labels.size() == 3);
    CHECK(c.node_labels[0] == "0");
    CHECK(c.node_labels[1] == "IN");  // first spelling wins
    CHECK(c.node_labels[2] == "MID");
    CHECK(c.resistors[2].pos == 1);
    CHECK_FALSE(c.has_cell);
}

TEST_CASE("cell statement parses terminals, kind and parameters") {
    const auto parsed = parse_netlist(
        "V1 1 0 DC 5\n"
        "XC 1 2 0 BUCKBOOSTCELL L=2m BIDIR IC=0.5\n"
        "R1 2 0 10\n"
        ".fs 20k\n"
        ".tran 1m\n");
    const SwitchingCell& cell = parsed.circuit.cell;
    CHECK(parsed.circuit.has_cell);
    CHECK(cell.topology == CellTopology::BuckBoost);
    CHECK(cell.t1 == 1);
    CHECK(cell.t2 == 2);
    CHECK(cell.common == 0);
    CHECK(cell.inductance == doctest::Approx(2e-3));
    CHECK(cell.bidirectional);
    CHECK(cell.initial_current == doctest::Approx(0.5));
}

TEST_CASE("sources parse their waveform kinds") {
    const auto parsed = parse_netlist(
        "V1 1 0 SIN 300 50 RECT\n"
        "V2 2 0 STEP 0:20 100m:40\n"
        "R1 1 0 10\n"
        "R2 2 0 10\n"
        ".fs 20k\n"
        ".tran 1m\n");
    const auto& sin = parsed.circuit.sources[0];
    CHECK(sin.kind == SourceKind::Sin);
    CHECK(sin.amplitude == doctest::Approx(300.0));
    CHECK(sin.frequency == doctest::Approx(50.0));
    CHECK(sin.rectified);
    const auto& step = parsed.circuit.sources[1];
    REQUIRE(step.steps.size() == 2);
    CHECK(step.steps[0].time == 0.0);
    CHECK(step.steps[0].value == doctest::Approx(20.0));
    CHECK(step.steps[1].time == doctest::Approx(0.1));
    CHECK(step.steps[1].value == doctest::Approx(40.0));
    // piecewise-constant evaluation
    CHECK(step.value_at(0.05) == doctest::Approx(20.0));
    CHECK(step.value_at(0.1) == doctest::Approx(40.0));
    CHECK(step.value_at(0.5) == doctest::Approx(40.0));
}

TEST_CASE("transient directive carries an optional sampling override") {
    const std::string base = "V1 1 0 DC 5\nR1 1 0 10\n.fs 20k\n";
    CHECK(parse_netlist(base + ".tran 1m\n").circuit.tran.points_per_period == 100);
    CHECK(parse_netlist(base + ".tran 1m PPP=500\n").circuit.tran.points_per_period == 500);
    CHECK_THROWS_AS((void)parse_netlist(base + ".tran 1m PPP=1\n"), ParseError);
    CHECK_THROWS_AS((void)parse_netlist(base + ".tran 1m PPP=2.5\n"), ParseError);
}

TEST_CASE("fast sine sources draw a sampling warning") {
    const auto parsed = parse_netlist(
        "V1 1 0 SIN 10 2k\n"
        "R1 1 0 10\n"
        ".fs 20k\n"
        ".tran 1m\n");
    REQUIRE(parsed.warnings.size() == 1);
    CHECK(parsed.warnings[0].find("alias") != std::string::npos);

    const auto slow = parse_netlist(
        "V1 1 0 SIN 10 50\n"
        "R1 1 0 10\n"
        ".fs 20k\n"
        ".tran 1m\n");
    CHECK(slow.warnings.empty());
}

TEST_CASE("parse errors carry the offending source location") {
    SUBCASE("duplicate element name") {
        const ParseError e = capture_parse_error([] {
            (void)parse_netlist("R1 1 0 10\nR1 2 0 5\n.fs 20k\n.tran 1m\n");
        });
        CHECK(e.line() == 2);
        CHECK(e.column() == 1);
        CHECK(std::string(e.what()).find("duplicate element") != std::string::npos);
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
    SUBCASE("malformed value points at the token") {
        const ParseError e = capture_parse_error([] {
            (void)parse_netlist("R1 1 0 bogus\n.fs 20k\n.tran 1m\n");
        });
        CHECK(e.line() == 1);
        CHECK(e.column() == 8);
    }
    SUBCASE("unknown element kind") {
        const ParseError e = capture_parse_error(
            [] { (void)parse_netlist("Q1 1 0 10\n.fs 20k\n.tran 1m\n"); });
        CHECK(e.line() == 1);
        CHECK(std::string(e.what()).find("unknown element") != std::string::npos);
    }
}

TEST_CASE("structural validation rejects broken circuits") {
    SUBCASE("missing switching frequency") {
        CHECK_THROWS_WITH_AS((void)parse_netlist("V1 1 0 DC 5\nR1 1 0 10\n.tran 1m\n"),
                             doctest::Contains("missing .fs"), ParseError);
    }
    SUBCASE("missing transient directive") {
        CHECK_THROWS_WITH_AS((void)parse_netlist("V1 1 0 DC 5\nR1 1 0 10\n.fs 20k\n"),
                             doctest::Contains("missing .tran"), ParseError);
    }
    SUBCASE("horizon shorter than a period") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist("V1 1 0 DC 5\nR1 1 0 10\n.fs 20k\n.tran 10u\n"),
            doctest::Contains("shorter than one switching period"), ParseError);
    }
    SUBCASE("dangling node") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(std::string("V1 1 0 DC 5\nR1 1 2 10\n") + kMinimalTail),
            doctest::Contains("dangling"), ParseError);
    }
    SUBCASE("island without a ground path") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(
                std::string("V1 1 0 DC 5\nR1 1 0 10\nR2 2 3 10\nR3 2 3 5\n") +
                kMinimalTail),
            doctest::Contains("not connected to ground"), ParseError);
    }
    SUBCASE("unused ground") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(std::string("V1 1 2 DC 5\nR1 1 2 10\n") + kMinimalTail),
            doctest::Contains("ground node 0"), ParseError);
    }
    SUBCASE("second switching cell") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(std::string("V1 1 0 DC 5\n"
                                            "X1 1 2 0 BUCKCELL L=1m\n"
                                            "X2 1 2 0 BUCKCELL L=1m\n"
                                            "R1 2 0 10\n") +
                                kMinimalTail),
            doctest::Contains("one switching cell"), ParseError);
    }
    SUBCASE("cell without inductance") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(
                std::string("V1 1 0 DC 5\nX1 1 2 0 BUCKCELL\nR1 2 0 10\n") + kMinimalTail),
            doctest::Contains("three terminals"), ParseError);
    }
}

TEST_CASE("source statement syntax is validated") {
    SUBCASE("step must start at zero") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(std::string("V1 1 0 STEP 1m:5\nR1 1 0 10\n") + kMinimalTail),
            doctest::Contains("first step time"), ParseError);
    }
    SUBCASE("step times must increase") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(std::string("V1 1 0 STEP 0:5 0:7\nR1 1 0 10\n") +
                                kMinimalTail),
            doctest::Contains("strictly increasing"), ParseError);
    }
    SUBCASE("sine frequency must be positive") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(std::string("V1 1 0 SIN 10 0\nR1 1 0 10\n") + kMinimalTail),
            doctest::Contains("frequency must be positive"), ParseError);
    }
    SUBCASE("unknown source kind") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(std::string("V1 1 0 PULSE 10\nR1 1 0 10\n") + kMinimalTail),
            doctest::Contains("unknown source kind"), ParseError);
    }
}

TEST_CASE("regulator block statements are validated") {
    const std::string plant =
        "VIN 1 0 DC 20\n"
        "XCELL 1 2 0 BUCKCELL L=1m\n"
        "COUT 2 0 100u\n"
        "RLOAD 2 0 10\n"
        ".fs 20k\n"
        ".tran 1m\n";

    SUBCASE("probe must reference a declared node") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(plant + ".reg\nprobe vout node 7\n.endreg\n"),
            doctest::Contains("unknown node"), ParseError);
    }
    SUBCASE("blocks must reference declared signals") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(plant + ".reg\ngain g ghost 2\n.endreg\n"),
            doctest::Contains("unknown signal"), ParseError);
    }
    SUBCASE("dutymax must stay inside the unit interval") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(plant + ".reg\ndutymax 1.5\n.endreg\n"),
            doctest::Contains("dutymax"), ParseError);
    }
    SUBCASE("improper transfer function") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(plant +
                                ".reg\nconst u 1\ntf h u num=0,0,1 den=1,1\n.endreg\n"),
            doctest::Contains("proper"), ParseError);
    }
    SUBCASE("vanishing leading denominator coefficient") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(plant + ".reg\nconst u 1\ntf h u num=1 den=1,0\n.endreg\n"),
            doctest::Contains("denominator"), ParseError);
    }
    SUBCASE("unterminated block") {
        CHECK_THROWS_WITH_AS((void)parse_netlist(plant + ".reg\ndutymax 0.5\n"),
                             doctest::Contains("unterminated"), ParseError);
    }
    SUBCASE("endreg without reg") {
        CHECK_THROWS_WITH_AS((void)parse_netlist(plant + ".endreg\n"),
                             doctest::Contains(".endreg without"), ParseError);
    }
    SUBCASE("unknown directive") {
        CHECK_THROWS_WITH_AS((void)parse_netlist(plant + ".options reltol=1e-3\n"),
                             doctest::Contains("unknown directive"), ParseError);
    }
    SUBCASE("peak limit needs a cell") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(std::string("V1 1 0 DC 5\nR1 1 0 10\n") + kMinimalTail +
                                ".reg\npeaklimit iref=4 islope=0\n.endreg\n"),
            doctest::Contains("peaklimit needs a switching cell"), ParseError);
    }
    SUBCASE("cell current probe needs a cell") {
        CHECK_THROWS_WITH_AS(
            (void)parse_netlist(std::string("V1 1 0 DC 5\nR1 1 0 10\n") + kMinimalTail +
                                ".reg\nprobe il cellcurrent\n.endreg\n"),
            doctest::Contains("no cell"), ParseError);
    }
}

TEST_CASE("comments and case-insensitive keywords are accepted") {
    const auto parsed = parse_netlist(
        "* top comment\n"
        "v1 1 0 dc 5\n"
        "\n"
        "r1 1 0 10\n"
        ".FS 20K\n"
        "* trailing comment\n"
        ".Tran 1M\n");
    CHECK(parsed.circuit.switching_frequency == doctest::Approx(20e3));
    CHECK(parsed.circuit.tran.t_stop == doctest::Approx(1e-3));
    CHECK(parsed.circuit.sources[0].dc_value == doctest::Approx(5.0));
}
