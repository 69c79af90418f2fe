#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "avgsim/circuit.hpp"
#include "avgsim/errors.hpp"

namespace avgsim {

/// Parse result: the circuit plus non-fatal findings (for example a sine
/// source too fast for the switching-period sampling to represent well).
struct ParsedNetlist {
    Circuit circuit;
    std::vector<std::string> warnings;
};

/// Parses netlist text. Lines starting with '*' are comments, keywords are
/// case-insensitive, values accept the engineering suffixes p n u m k meg.
/// Throws ParseError with a 1-based line/column on malformed input and on
/// failed validation (missing ground, dangling node, duplicate name, ...).
[[nodiscard]] ParsedNetlist parse_netlist(std::string_view text);

/// Renders a circuit back to netlist text. Feeding the output to
/// parse_netlist reproduces the identical in-memory representation,
/// including node numbering.
[[nodiscard]] std::string serialize_netlist(const Circuit& circuit);

/// Parses one numeric token (suffix and unit letters allowed).
/// Exposed for tests; throws std::invalid_argument on garbage.
[[nodiscard]] double parse_value(std::string_view token);

}  // namespace avgsim
