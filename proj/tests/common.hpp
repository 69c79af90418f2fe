#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "avgsim/netlist.hpp"

namespace test_common {

/// Reads and parses one of the shipped netlists.
inline avgsim::Circuit load_netlist(const std::string& name) {
    const std::string path = std::string(AVGSIM_NETLIST_DIR) + "/" + name;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return avgsim::parse_netlist(ss.str()).circuit;
}

}  // namespace test_common
