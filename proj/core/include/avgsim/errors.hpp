#pragma once

#include <stdexcept>
#include <string>

namespace avgsim {

/// Raised for malformed netlist input. Carries the 1-based source location.
class ParseError : public std::runtime_error {
public:
    ParseError(int line, int column, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ": " + message),
          line_(line),
          column_(column) {}

    [[nodiscard]] int line() const noexcept { return line_; }
    [[nodiscard]] int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

/// Raised when a simulation cannot proceed (singular system, contract
/// violation, inconsistent inputs). The message names the offending unknown
/// or period where that is known.
class SimulationError : public std::runtime_error {
public:
    explicit SimulationError(const std::string& message)
        : std::runtime_error(message) {}
};

}  // namespace avgsim
