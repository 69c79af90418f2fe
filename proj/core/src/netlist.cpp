#include "avgsim/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace avgsim {

namespace {

// ============================================================================
// Lexing helpers
// ============================================================================

std::string to_upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

struct Token {
    std::string text;
    int column = 0;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
    std::vector<Token> tokens;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        const size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        tokens.push_back(Token{std::string(line.substr(start, i - start)),
                               static_cast<int>(start) + 1});
    }
    return tokens;
}

/// Formats a double so that parsing it back recovers the identical value.
std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ============================================================================
// Parser state
// ============================================================================

struct Parser {
    ParsedNetlist result;
    std::map<std::string, NodeId> node_index;       // uppercase label -> id
    std::map<std::string, int> element_lines;       // uppercase element name -> line
    std::map<std::string, int> signal_lines;        // uppercase block name -> line
    bool seen_fs = false;
    bool seen_tran = false;
    int line_no = 0;

    Parser() { node_index["0"] = kGroundNode; }

    [[noreturn]] void fail(int column, const std::string& message) const {
        throw ParseError(line_no, column, message);
    }

    double value(const Token& token) const {
        try {
            return parse_value(token.text);
        } catch (const std::invalid_argument& e) {
            fail(token.column, std::string(e.what()) + ": '" + token.text + "'");
        }
    }

    NodeId node(const Token& token) {
        const std::string key = to_upper(token.text);
        auto it = node_index.find(key);
        if (it != node_index.end()) return it->second;
        const NodeId id = static_cast<NodeId>(result.circuit.node_labels.size());
        node_index.emplace(key, id);
        result.circuit.node_labels.push_back(token.text);
        return id;
    }

    /// Node lookup that refuses to create; used by .reg probes.
    NodeId existing_node(const Token& token) const {
        auto it = node_index.find(to_upper(token.text));
        if (it == node_index.end()) {
            fail(token.column, "unknown node '" + token.text + "'");
        }
        return it->second;
    }

    void register_element(const Token& name_token) {
        const std::string key = to_upper(name_token.text);
        auto [it, inserted] = element_lines.emplace(key, line_no);
        if (!inserted) {
            fail(name_token.column, "duplicate element name '" + name_token.text +
                                        "' (first declared on line " +
                                        std::to_string(it->second) + ")");
        }
    }

    void register_signal(const Token& name_token) {
        const std::string key = to_upper(name_token.text);
        auto [it, inserted] = signal_lines.emplace(key, line_no);
        if (!inserted) {
            fail(name_token.column, "duplicate signal name '" + name_token.text +
                                        "' (first declared on line " +
                                        std::to_string(it->second) + ")");
        }
    }

    void require_signal(const Token& token) const {
        std::string ref = token.text;
        if (!ref.empty() && (ref.front() == '+' || ref.front() == '-')) ref.erase(0, 1);
        if (signal_lines.find(to_upper(ref)) == signal_lines.end()) {
            fail(token.column, "unknown signal '" + ref + "'");
        }
    }
};

/// Splits "key=value"; returns nullopt when '=' is absent.
std::optional<std::pair<std::string, std::string>> split_assignment(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) return std::nullopt;
    return std::make_pair(to_upper(text.substr(0, eq)), text.substr(eq + 1));
}

std::vector<double> parse_coefficient_list(Parser& p, const Token& token,
                                           const std::string& list_text) {
    std::vector<double> coeffs;
    std::stringstream ss(list_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            coeffs.push_back(parse_value(item));
        } catch (const std::invalid_argument&) {
            p.fail(token.column, "bad coefficient '" + item + "' in '" + token.text + "'");
        }
    }
    if (coeffs.empty()) {
        p.fail(token.column, "empty coefficient list in '" + token.text + "'");
    }
    return coeffs;
}

// ============================================================================
// Element statements
// ============================================================================

void parse_source(Parser& p, const std::vector<Token>& t) {
    if (t.size() < 4) p.fail(t[0].column, "source needs nodes and a kind");
    VoltageSource src;
    src.name = t[0].text;
    p.register_element(t[0]);
    src.pos = p.node(t[1]);
    src.neg = p.node(t[2]);
    const std::string kind = to_upper(t[3].text);
    if (kind == "DC") {
        if (t.size() != 5) p.fail(t[3].column, "DC source takes one value");
        src.kind = SourceKind::Dc;
        src.dc_value = p.value(t[4]);
    } else if (kind == "SIN") {
        if (t.size() != 6 && t.size() != 7) {
            p.fail(t[3].column, "SIN source takes amplitude and frequency");
        }
        src.kind = SourceKind::Sin;
        src.amplitude = p.value(t[4]);
        src.frequency = p.value(t[5]);
        if (src.frequency <= 0.0) p.fail(t[5].column, "sine frequency must be positive");
        if (t.size() == 7) {
            if (to_upper(t[6].text) != "RECT") {
                p.fail(t[6].column, "expected RECT, got '" + t[6].text + "'");
            }
            src.rectified = true;
        }
    } else if (kind == "STEP") {
        if (t.size() < 5) p.fail(t[3].column, "STEP source needs at least one t:v pair");
        src.kind = SourceKind::Step;
        for (size_t i = 4; i < t.size(); ++i) {
            const auto colon = t[i].text.find(':');
            if (colon == std::string::npos) {
                p.fail(t[i].column, "expected t:v pair, got '" + t[i].text + "'");
            }
            StepPoint point;
            try {
                point.time = parse_value(t[i].text.substr(0, colon));
                point.value = parse_value(t[i].text.substr(colon + 1));
            } catch (const std::invalid_argument&) {
                p.fail(t[i].column, "bad t:v pair '" + t[i].text + "'");
            }
            if (!src.steps.empty() && point.time <= src.steps.back().time) {
                p.fail(t[i].column, "step times must be strictly increasing");
            }
            src.steps.push_back(point);
        }
        if (src.steps.front().time > 0.0) {
            p.fail(t[4].column, "first step time must be 0 (initial value)");
        }
    } else {
        p.fail(t[3].column, "unknown source kind '" + t[3].text + "'");
    }
    p.result.circuit.statements.push_back(
        StatementRef{'V', static_cast<int>(p.result.circuit.sources.size())});
    p.result.circuit.sources.push_back(std::move(src));
}

void parse_resistor(Parser& p, const std::vector<Token>& t) {
    if (t.size() != 4) p.fail(t[0].column, "resistor takes two nodes and a value");
    Resistor r;
    r.name = t[0].text;
    p.register_element(t[0]);
    r.pos = p.node(t[1]);
    r.neg = p.node(t[2]);
    r.resistance = p.value(t[3]);
    if (r.resistance <= 0.0) p.fail(t[3].column, "resistance must be positive");
    p.result.circuit.statements.push_back(
        StatementRef{'R', static_cast<int>(p.result.circuit.resistors.size())});
    p.result.circuit.resistors.push_back(std::move(r));
}

void parse_capacitor(Parser& p, const std::vector<Token>& t) {
    if (t.size() != 4 && t.size() != 5) {
        p.fail(t[0].column, "capacitor takes two nodes, a value and optional IC=");
    }
    Capacitor c;
    c.name = t[0].text;
    p.register_element(t[0]);
    c.pos = p.node(t[1]);
    c.neg = p.node(t[2]);
    c.capacitance = p.value(t[3]);
    if (c.capacitance <= 0.0) p.fail(t[3].column, "capacitance must be positive");
    if (t.size() == 5) {
        const auto kv = split_assignment(t[4].text);
        if (!kv || kv->first != "IC") {
            p.fail(t[4].column, "expected IC=<v>, got '" + t[4].text + "'");
        }
        try {
            c.initial_voltage = parse_value(kv->second);
        } catch (const std::invalid_argument&) {
            p.fail(t[4].column, "bad IC value '" + kv->second + "'");
        }
    }
    p.result.circuit.statements.push_back(
        StatementRef{'C', static_cast<int>(p.result.circuit.capacitors.size())});
    p.result.circuit.capacitors.push_back(std::move(c));
}

void parse_cell(Parser& p, const std::vector<Token>& t, bool have_cell) {
    if (have_cell) p.fail(t[0].column, "only one switching cell is supported");
    if (t.size() < 6) {
        p.fail(t[0].column, "cell takes three terminals, a kind and L=<val>");
    }
    SwitchingCell cell;
    cell.name = t[0].text;
    p.register_element(t[0]);
    cell.t1 = p.node(t[1]);
    cell.t2 = p.node(t[2]);
    cell.common = p.node(t[3]);
    const std::string kind = to_upper(t[4].text);
    if (kind == "BUCKCELL") {
        cell.topology = CellTopology::Buck;
    } else if (kind == "BOOSTCELL") {
        cell.topology = CellTopology::Boost;
    } else if (kind == "BUCKBOOSTCELL") {
        cell.topology = CellTopology::BuckBoost;
    } else {
        p.fail(t[4].column, "unknown cell kind '" + t[4].text + "'");
    }
    bool have_l = false;
    for (size_t i = 5; i < t.size(); ++i) {
        if (to_upper(t[i].text) == "BIDIR") {
            cell.bidirectional = true;
            continue;
        }
        const auto kv = split_assignment(t[i].text);
        if (!kv) p.fail(t[i].column, "expected L=, IC= or BIDIR, got '" + t[i].text + "'");
        double v = 0.0;
        try {
            v = parse_value(kv->second);
        } catch (const std::invalid_argument&) {
            p.fail(t[i].column, "bad value '" + kv->second + "'");
        }
        if (kv->first == "L") {
            if (v <= 0.0) p.fail(t[i].column, "cell inductance must be positive");
            cell.inductance = v;
            have_l = true;
        } else if (kv->first == "IC") {
            cell.initial_current = v;
        } else {
            p.fail(t[i].column, "unknown cell parameter '" + t[i].text + "'");
        }
    }
    if (!have_l) p.fail(t[0].column, "cell is missing L=<val>");
    p.result.circuit.statements.push_back(StatementRef{'X', 0});
    p.result.circuit.has_cell = true;
    p.result.circuit.cell = std::move(cell);
}

// ============================================================================
// Regulator statements
// ============================================================================

void parse_reg_statement(Parser& p, const std::vector<Token>& t) {
    RegulatorSpec& reg = p.result.circuit.regulator;
    const std::string kw = to_upper(t[0].text);

    auto expect_args = [&](size_t n, const char* usage) {
        if (t.size() != n) p.fail(t[0].column, std::string("usage: ") + usage);
    };

    if (kw == "PROBE") {
        if (t.size() == 3 && to_upper(t[2].text) == "CELLCURRENT") {
            BlockSpec b;
            b.kind = BlockKind::Probe;
            b.name = t[1].text;
            b.cell_current = true;
            p.register_signal(t[1]);
            reg.blocks.push_back(std::move(b));
            return;
        }
        expect_args(4, "probe <name> node <id> | probe <name> cellcurrent");
        if (to_upper(t[2].text) != "NODE") {
            p.fail(t[2].column, "expected 'node' or 'cellcurrent'");
        }
        BlockSpec b;
        b.kind = BlockKind::Probe;
        b.name = t[1].text;
        b.node = p.existing_node(t[3]);
        p.register_signal(t[1]);
        reg.blocks.push_back(std::move(b));
    } else if (kw == "CONST") {
        expect_args(3, "const <name> <value>");
        BlockSpec b;
        b.kind = BlockKind::Const;
        b.name = t[1].text;
        b.value = p.value(t[2]);
        p.register_signal(t[1]);
        reg.blocks.push_back(std::move(b));
    } else if (kw == "GAIN") {
        expect_args(4, "gain <name> <in> <k>");
        p.require_signal(t[2]);
        BlockSpec b;
        b.kind = BlockKind::Gain;
        b.name = t[1].text;
        b.in1 = t[2].text;
        b.value = p.value(t[3]);
        p.register_signal(t[1]);
        reg.blocks.push_back(std::move(b));
    } else if (kw == "SUM") {
        expect_args(4, "sum <name> <in1> <+/-in2>");
        p.require_signal(t[2]);
        p.require_signal(t[3]);
        BlockSpec b;
        b.kind = BlockKind::Sum;
        b.name = t[1].text;
        b.in1 = t[2].text;
        b.in2 = t[3].text;
        if (!b.in2.empty() && (b.in2.front() == '-' || b.in2.front() == '+')) {
            b.negate_in2 = b.in2.front() == '-';
            b.in2.erase(0, 1);
        }
        p.register_signal(t[1]);
        reg.blocks.push_back(std::move(b));
    } else if (kw == "MULT") {
        expect_args(4, "mult <name> <in1> <in2>");
        p.require_signal(t[2]);
        p.require_signal(t[3]);
        BlockSpec b;
        b.kind = BlockKind::Mult;
        b.name = t[1].text;
        b.in1 = t[2].text;
        b.in2 = t[3].text;
        p.register_signal(t[1]);
        reg.blocks.push_back(std::move(b));
    } else if (kw == "TF") {
        expect_args(5, "tf <name> <in> num=<c0,..> den=<c0,..>");
        p.require_signal(t[2]);
        BlockSpec b;
        b.kind = BlockKind::Tf;
        b.name = t[1].text;
        b.in1 = t[2].text;
        for (size_t i = 3; i < 5; ++i) {
            const auto kv = split_assignment(t[i].text);
            if (!kv) p.fail(t[i].column, "expected num= or den=");
            if (kv->first == "NUM") {
                b.num = parse_coefficient_list(p, t[i], kv->second);
            } else if (kv->first == "DEN") {
                b.den = parse_coefficient_list(p, t[i], kv->second);
            } else {
                p.fail(t[i].column, "expected num= or den=");
            }
        }
        if (b.num.empty() || b.den.empty()) p.fail(t[0].column, "tf needs num= and den=");
        if (b.num.size() > b.den.size()) {
            p.fail(t[0].column, "transfer function must be proper (deg num <= deg den)");
        }
        if (b.den.back() == 0.0) p.fail(t[4].column, "leading denominator coefficient is zero");
        p.register_signal(t[1]);
        reg.blocks.push_back(std::move(b));
    } else if (kw == "PWM") {
        expect_args(4, "pwm <name> <in> ramp=<V>");
        p.require_signal(t[2]);
        BlockSpec b;
        b.kind = BlockKind::Pwm;
        b.name = t[1].text;
        b.in1 = t[2].text;
        const auto kv = split_assignment(t[3].text);
        if (!kv || kv->first != "RAMP") p.fail(t[3].column, "expected ramp=<V>");
        try {
            b.value = parse_value(kv->second);
        } catch (const std::invalid_argument&) {
            p.fail(t[3].column, "bad ramp value '" + kv->second + "'");
        }
        if (b.value <= 0.0) p.fail(t[3].column, "pwm ramp amplitude must be positive");
        p.register_signal(t[1]);
        reg.blocks.push_back(std::move(b));
    } else if (kw == "PEAKLIMIT") {
        expect_args(3, "peaklimit iref=<expr> islope=<A>");
        if (reg.peak.present) p.fail(t[0].column, "duplicate peaklimit");
        reg.peak.present = true;
        for (size_t i = 1; i < 3; ++i) {
            const auto kv = split_assignment(t[i].text);
            if (!kv) p.fail(t[i].column, "expected iref= or islope=");
            if (kv->first == "IREF") {
                try {
                    reg.peak.iref_value = parse_value(kv->second);
                    reg.peak.iref_is_signal = false;
                } catch (const std::invalid_argument&) {
                    reg.peak.iref_is_signal = true;
                    reg.peak.iref_signal = kv->second;
                    Token ref{kv->second, t[i].column};
                    p.require_signal(ref);
                }
            } else if (kv->first == "ISLOPE") {
                try {
                    reg.peak.islope = parse_value(kv->second);
                } catch (const std::invalid_argument&) {
                    p.fail(t[i].column, "bad islope value '" + kv->second + "'");
                }
                if (reg.peak.islope < 0.0) p.fail(t[i].column, "islope must be >= 0");
            } else {
                p.fail(t[i].column, "expected iref= or islope=");
            }
        }
    } else if (kw == "DUTYMAX") {
        expect_args(2, "dutymax <d>");
        if (reg.has_duty_max) p.fail(t[0].column, "duplicate dutymax");
        reg.duty_max = p.value(t[1]);
        if (reg.duty_max <= 0.0 || reg.duty_max > 1.0) {
            p.fail(t[1].column, "dutymax must lie in (0, 1]");
        }
        reg.has_duty_max = true;
    } else if (kw == "SOFTSTART") {
        expect_args(2, "softstart <seconds>");
        if (reg.has_soft_start) p.fail(t[0].column, "duplicate softstart");
        reg.soft_start_duration = p.value(t[1]);
        if (reg.soft_start_duration <= 0.0) {
            p.fail(t[1].column, "softstart duration must be positive");
        }
        reg.has_soft_start = true;
    } else {
        p.fail(t[0].column, "unknown regulator statement '" + t[0].text + "'");
    }
}

// ============================================================================
// Validation
// ============================================================================

void validate(Parser& p, bool have_cell) {
    Circuit& c = p.result.circuit;
    auto fail = [&](const std::string& message) { throw ParseError(p.line_no, 1, message); };

    if (!p.seen_fs) fail("missing .fs directive");
    if (!p.seen_tran) fail("missing .tran directive");
    if (c.tran.t_stop < c.period()) {
        fail("transient horizon shorter than one switching period");
    }
    if (!have_cell) {
        if (c.regulator.peak.present) {
            fail("peaklimit needs a switching cell and the netlist has none");
        }
        for (const auto& block : c.regulator.blocks) {
            if (block.kind == BlockKind::Probe && block.cell_current) {
                fail("probe '" + block.name +
                     "' reads the cell current and the netlist has no cell");
            }
        }
    }

    // Attachment census. Every non-ground node must be touched by at least
    // two element terminals, and ground must appear at all.
    std::vector<int> attachments(c.node_labels.size(), 0);
    std::vector<std::string> first_user(c.node_labels.size());
    auto touch = [&](NodeId n, const std::string& name) {
        attachments[n]++;
        if (first_user[n].empty()) first_user[n] = name;
    };
    for (const auto& s : c.sources) {
        touch(s.pos, s.name);
        touch(s.neg, s.name);
    }
    for (const auto& r : c.resistors) {
        touch(r.pos, r.name);
        touch(r.neg, r.name);
    }
    for (const auto& cap : c.capacitors) {
        touch(cap.pos, cap.name);
        touch(cap.neg, cap.name);
    }
    if (have_cell) {
        touch(c.cell.t1, c.cell.name);
        touch(c.cell.t2, c.cell.name);
        touch(c.cell.common, c.cell.name);
    }

    if (attachments[kGroundNode] == 0) fail("ground node 0 is not connected");
    for (size_t n = 1; n < attachments.size(); ++n) {
        if (attachments[n] < 2) {
            fail("node '" + c.node_labels[n] + "' is dangling (only " + first_user[n] +
                 " connects to it)");
        }
    }

    // Connectivity sweep from ground.
    std::vector<char> reached(c.node_labels.size(), 0);
    std::vector<NodeId> stack{kGroundNode};
    reached[kGroundNode] = 1;
    auto edge = [&](NodeId a, NodeId b, std::vector<NodeId>& st) {
        if (reached[a] && !reached[b]) {
            reached[b] = 1;
            st.push_back(b);
        }
    };
    while (!stack.empty()) {
        stack.pop_back();
        std::vector<NodeId> next;
        for (const auto& s : c.sources) {
            edge(s.pos, s.neg, next);
            edge(s.neg, s.pos, next);
        }
        for (const auto& r : c.resistors) {
            edge(r.pos, r.neg, next);
            edge(r.neg, r.pos, next);
        }
        for (const auto& cap : c.capacitors) {
            edge(cap.pos, cap.neg, next);
            edge(cap.neg, cap.pos, next);
        }
        if (have_cell) {
            const NodeId cn[3] = {c.cell.t1, c.cell.t2, c.cell.common};
            for (NodeId a : cn) {
                for (NodeId b : cn) {
                    edge(a, b, next);
                }
            }
        }
        for (NodeId n : next) stack.push_back(n);
    }
    for (size_t n = 0; n < reached.size(); ++n) {
        if (!reached[n]) {
            fail("node '" + c.node_labels[n] + "' is not connected to ground");
        }
    }

    // Sampling fidelity warning: holding the source constant over a period
    // assumes it moves slowly against the switching clock.
    for (const auto& s : c.sources) {
        if (s.kind == SourceKind::Sin && s.frequency > c.switching_frequency / 20.0) {
            p.result.warnings.push_back(
                "source " + s.name + " frequency " + format_double(s.frequency) +
                " Hz is above fs/20; period-sampled values will alias");
        }
    }
}

}  // namespace

// ============================================================================
// Public entry points
// ============================================================================

double parse_value(std::string_view token) {
    std::string text(token);
    if (text.empty()) throw std::invalid_argument("empty numeric value");
    const char* begin = text.c_str();
    char* end = nullptr;
    const double base = std::strtod(begin, &end);
    if (end == begin) throw std::invalid_argument("malformed numeric value");
    std::string rest = to_upper(std::string(end));
    double scale = 1.0;
    if (rest.rfind("MEG", 0) == 0) {
        scale = 1e6;
        rest.erase(0, 3);
    } else if (!rest.empty()) {
        switch (rest.front()) {
            case 'P': scale = 1e-12; rest.erase(0, 1); break;
            case 'N': scale = 1e-9;  rest.erase(0, 1); break;
            case 'U': scale = 1e-6;  rest.erase(0, 1); break;
            case 'M': scale = 1e-3;  rest.erase(0, 1); break;
            case 'K': scale = 1e3;   rest.erase(0, 1); break;
            default: break;
        }
    }
    // Whatever remains may only be a unit annotation such as V, A, F, H.
    for (char ch : rest) {
        if (!std::isalpha(static_cast<unsigned char>(ch))) {
            throw std::invalid_argument("malformed numeric value");
        }
    }
    return base * scale;
}

ParsedNetlist parse_netlist(std::string_view text) {
    Parser p;
    bool have_cell = false;
    bool in_reg = false;

    std::stringstream stream{std::string(text)};
    std::string line;
    while (std::getline(stream, line)) {
        ++p.line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tokens = tokenize(line);
        if (tokens.empty() || tokens[0].text.front() == '*') continue;

        const std::string first = to_upper(tokens[0].text);

        if (in_reg) {
            if (first == ".ENDREG") {
                in_reg = false;
            } else {
                parse_reg_statement(p, tokens);
            }
            continue;
        }

        if (first[0] == '.') {
            if (first == ".FS") {
                if (tokens.size() != 2) p.fail(tokens[0].column, "usage: .fs <frequency>");
                p.result.circuit.switching_frequency = p.value(tokens[1]);
                if (p.result.circuit.switching_frequency <= 0.0) {
                    p.fail(tokens[1].column, "switching frequency must be positive");
                }
                p.seen_fs = true;
            } else if (first == ".TRAN") {
                if (tokens.size() != 2 && tokens.size() != 3) {
                    p.fail(tokens[0].column, "usage: .tran <t_stop> [PPP=<n>]");
                }
                p.result.circuit.tran.t_stop = p.value(tokens[1]);
                if (p.result.circuit.tran.t_stop <= 0.0) {
                    p.fail(tokens[1].column, "transient horizon must be positive");
                }
                if (tokens.size() == 3) {
                    const auto kv = split_assignment(tokens[2].text);
                    if (!kv || kv->first != "PPP") {
                        p.fail(tokens[2].column, "expected PPP=<n>");
                    }
                    const double n = parse_value(kv->second);
                    if (n < 2.0 || n != std::floor(n)) {
                        p.fail(tokens[2].column, "PPP must be an integer >= 2");
                    }
                    p.result.circuit.tran.points_per_period = static_cast<int>(n);
                }
                p.seen_tran = true;
            } else if (first == ".REG") {
                in_reg = true;
            } else if (first == ".ENDREG") {
                p.fail(tokens[0].column, ".endreg without .reg");
            } else {
                p.fail(tokens[0].column, "unknown directive '" + tokens[0].text + "'");
            }
            continue;
        }

        switch (first[0]) {
            case 'V': parse_source(p, tokens); break;
            case 'R': parse_resistor(p, tokens); break;
            case 'C': parse_capacitor(p, tokens); break;
            case 'X':
                parse_cell(p, tokens, have_cell);
                have_cell = true;
                break;
            default:
                p.fail(tokens[0].column,
                       "unknown element '" + tokens[0].text + "' (expected V/R/C/X)");
        }
    }
    if (in_reg) throw ParseError(p.line_no, 1, "unterminated .reg block");

    validate(p, have_cell);
    return p.result;
}

std::string serialize_netlist(const Circuit& c) {
    std::ostringstream out;
    auto node = [&](NodeId n) { return c.node_labels[n]; };

    for (const auto& stmt : c.statements) {
        switch (stmt.kind) {
            case 'V': {
                const auto& s = c.sources[stmt.index];
                out << s.name << ' ' << node(s.pos) << ' ' << node(s.neg);
                switch (s.kind) {
                    case SourceKind::Dc:
                        out << " DC " << format_double(s.dc_value);
                        break;
                    case SourceKind::Sin:
                        out << " SIN " << format_double(s.amplitude) << ' '
                            << format_double(s.frequency);
                        if (s.rectified) out << " RECT";
                        break;
                    case SourceKind::Step:
                        out << " STEP";
                        for (const auto& pt : s.steps) {
                            out << ' ' << format_double(pt.time) << ':'
                                << format_double(pt.value);
                        }
                        break;
                }
                out << '\n';
                break;
            }
            case 'R': {
                const auto& r = c.resistors[stmt.index];
                out << r.name << ' ' << node(r.pos) << ' ' << node(r.neg) << ' '
                    << format_double(r.resistance) << '\n';
                break;
            }
            case 'C': {
                const auto& cap = c.capacitors[stmt.index];
                out << cap.name << ' ' << node(cap.pos) << ' ' << node(cap.neg) << ' '
                    << format_double(cap.capacitance);
                if (cap.initial_voltage != 0.0) {
                    out << " IC=" << format_double(cap.initial_voltage);
                }
                out << '\n';
                break;
            }
            case 'X': {
                const auto& cell = c.cell;
                out << cell.name << ' ' << node(cell.t1) << ' ' << node(cell.t2) << ' '
                    << node(cell.common) << ' ';
                switch (cell.topology) {
                    case CellTopology::Buck: out << "BUCKCELL"; break;
                    case CellTopology::Boost: out << "BOOSTCELL"; break;
                    case CellTopology::BuckBoost: out << "BUCKBOOSTCELL"; break;
                }
                out << " L=" << format_double(cell.inductance);
                if (cell.bidirectional) out << " BIDIR";
                if (cell.initial_current != 0.0) {
                    out << " IC=" << format_double(cell.initial_current);
                }
                out << '\n';
                break;
            }
            default:
                break;
        }
    }

    out << ".fs " << format_double(c.switching_frequency) << '\n';
    out << ".tran " << format_double(c.tran.t_stop);
    if (c.tran.points_per_period != 100) out << " PPP=" << c.tran.points_per_period;
    out << '\n';

    const auto& reg = c.regulator;
    const bool reg_used = !reg.blocks.empty() || reg.peak.present || reg.has_duty_max ||
                          reg.has_soft_start;
    if (reg_used) {
        out << ".reg\n";
        for (const auto& b : reg.blocks) {
            switch (b.kind) {
                case BlockKind::Probe:
                    out << "  probe " << b.name;
                    if (b.cell_current) {
                        out << " cellcurrent";
                    } else {
                        out << " node " << node(b.node);
                    }
                    break;
                case BlockKind::Const:
                    out << "  const " << b.name << ' ' << format_double(b.value);
                    break;
                case BlockKind::Gain:
                    out << "  gain " << b.name << ' ' << b.in1 << ' '
                        << format_double(b.value);
                    break;
                case BlockKind::Sum:
                    out << "  sum " << b.name << ' ' << b.in1 << ' '
                        << (b.negate_in2 ? "-" : "") << b.in2;
                    break;
                case BlockKind::Mult:
                    out << "  mult " << b.name << ' ' << b.in1 << ' ' << b.in2;
                    break;
                case BlockKind::Tf: {
                    out << "  tf " << b.name << ' ' << b.in1 << " num=";
                    for (size_t i = 0; i < b.num.size(); ++i) {
                        out << (i ? "," : "") << format_double(b.num[i]);
                    }
                    out << " den=";
                    for (size_t i = 0; i < b.den.size(); ++i) {
                        out << (i ? "," : "") << format_double(b.den[i]);
                    }
                    break;
                }
                case BlockKind::Pwm:
                    out << "  pwm " << b.name << ' ' << b.in1 << " ramp="
                        << format_double(b.value);
                    break;
            }
            out << '\n';
        }
        if (reg.peak.present) {
            out << "  peaklimit iref=";
            if (reg.peak.iref_is_signal) {
                out << reg.peak.iref_signal;
            } else {
                out << format_double(reg.peak.iref_value);
            }
            out << " islope=" << format_double(reg.peak.islope) << '\n';
        }
        if (reg.has_duty_max) out << "  dutymax " << format_double(reg.duty_max) << '\n';
        if (reg.has_soft_start) {
            out << "  softstart " << format_double(reg.soft_start_duration) << '\n';
        }
        out << ".endreg\n";
    }
    return out.str();
}

}  // namespace avgsim
