#pragma once

// Scenario description and its flat "section.key = value" text format.
//
//   # comment
//   name = proposed
//   dab.l_e = 22 uH
//   strategy.kind = variable_ramp
//   strategy.t_ramp = 150 ms
//
// Numbers accept an SI prefix (p n u µ m k M G) and the key's unit, with or
// without a space: "600n", "600 ns", "32kHz". Unknown and repeated keys are
// errors. Keys that are not given take the Table I defaults.

#include "dabsim/circuit.hpp"
#include "dabsim/pwm.hpp"
#include "dabsim/softstart.hpp"
#include "dabsim/solver.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dabsim {

struct OutputOptions {
    double trace_from = 0.0;  // trace.csv rows before this time are omitted
    bool plots = true;

    friend bool operator==(const OutputOptions&, const OutputOptions&) = default;
};

struct Scenario {
    std::string name = "default";
    DabParams dab{};
    PwmConfig pwm{};
    StartupStrategy strategy{};
    SolverConfig solver{};
    double t_end = 2.0;
    ConverterState init{};
    std::string output_dir = "out";
    OutputOptions output{};

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Malformed or invalid configuration. `line` is 0 for whole-scenario rules.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, int line = 0, std::string key = {})
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + (key.empty() ? "" : " (" + key + ")") +
                                            ": " + what
                                      : (key.empty() ? what : key + ": " + what)),
          line_(line),
          key_(std::move(key)) {}

    [[nodiscard]] int line() const { return line_; }
    [[nodiscard]] const std::string& key() const { return key_; }

private:
    int line_;
    std::string key_;
};

[[nodiscard]] inline bool filesystem_safe(std::string_view name) {
    if (name.empty() || name == "." || name == ".." || name.size() > 128) {
        return false;
    }
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
               c == '.';
    });
}

/// Schedule implied by the strategy and the PWM settings.
[[nodiscard]] inline DeadTimeSchedule schedule_of(const Scenario& s) { return make_schedule(s.strategy, s.pwm); }

/// Checks every sub-configuration; throws ConfigError naming the violated rule.
inline void validate(const Scenario& s) {
    auto wrap = [](auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("invalid scenario: ") + e.what());
        }
    };
    if (!filesystem_safe(s.name)) {
        throw ConfigError("name must be nonempty and use only [A-Za-z0-9._-]", 0, "name");
    }
    if (s.output_dir.empty()) {
        throw ConfigError("must be nonempty", 0, "output_dir");
    }
    wrap([&] { validate(s.dab); });
    wrap([&] { validate(s.pwm); });
    if (s.dab.f_sw != s.pwm.f_sw) {
        throw ConfigError("dab.f_sw and pwm.f_sw disagree");
    }
    if (s.pwm.phase_ratio != s.strategy.d_cmd) {
        throw ConfigError("pwm.phase_ratio and strategy.d_cmd disagree");
    }
    wrap([&] { (void)schedule_of(s); });
    wrap([&] { validate(s.solver, s.pwm.period()); });
    if (!(s.t_end > s.init.t) || !std::isfinite(s.t_end)) {
        throw ConfigError("must be > 0", 0, "sim.t_end");
    }
    if (!std::isfinite(s.init.i_l) || !std::isfinite(s.init.v_dc) || s.init.v_dc < 0.0) {
        throw ConfigError("init.i_l must be finite and init.v_dc >= 0");
    }
}

namespace config_detail {

enum class Kind { real, integer, text, boolean, strategy, load, method };

struct Key {
    const char* name;
    Kind kind;
    const char* unit;  // expected SI unit for reals, "" for dimensionless
    std::function<void*(Scenario&)> field;
};

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        {"name", Kind::text, "", [](Scenario& s) -> void* { return &s.name; }},
        {"output_dir", Kind::text, "", [](Scenario& s) -> void* { return &s.output_dir; }},
        {"dab.v_bat", Kind::real, "V", [](Scenario& s) -> void* { return &s.dab.v_bat; }},
        {"dab.c_out", Kind::real, "F", [](Scenario& s) -> void* { return &s.dab.c_out; }},
        {"dab.n", Kind::real, "", [](Scenario& s) -> void* { return &s.dab.n; }},
        {"dab.l_e", Kind::real, "H", [](Scenario& s) -> void* { return &s.dab.l_e; }},
        {"load.kind", Kind::load, "", [](Scenario& s) -> void* { return &s.dab.load.kind; }},
        {"load.r", Kind::real, "Ohm", [](Scenario& s) -> void* { return &s.dab.load.r; }},
        {"load.i_o", Kind::real, "A", [](Scenario& s) -> void* { return &s.dab.load.i_o; }},
        {"pwm.f_sw", Kind::real, "Hz", [](Scenario& s) -> void* { return &s.pwm.f_sw; }},
        {"pwm.clk", Kind::real, "Hz", [](Scenario& s) -> void* { return &s.pwm.clk; }},
        {"pwm.gate_mask", Kind::integer, "", [](Scenario& s) -> void* { return &s.pwm.gate_enable; }},
        {"strategy.kind", Kind::strategy, "", [](Scenario& s) -> void* { return &s.strategy.kind; }},
        {"strategy.d_cmd", Kind::real, "", [](Scenario& s) -> void* { return &s.strategy.d_cmd; }},
        {"strategy.t_enable", Kind::real, "s", [](Scenario& s) -> void* { return &s.strategy.t_enable; }},
        {"strategy.t_ramp", Kind::real, "s", [](Scenario& s) -> void* { return &s.strategy.t_ramp; }},
        {"strategy.t_d_final", Kind::real, "s", [](Scenario& s) -> void* { return &s.strategy.t_d_final; }},
        {"strategy.t_d_start", Kind::real, "s", [](Scenario& s) -> void* { return &s.strategy.t_d_start; }},
        {"strategy.t_d_large", Kind::real, "s", [](Scenario& s) -> void* { return &s.strategy.t_d_large; }},
        {"strategy.hold", Kind::real, "s", [](Scenario& s) -> void* { return &s.strategy.hold; }},
        {"solver.dt_max", Kind::real, "s", [](Scenario& s) -> void* { return &s.solver.dt_max; }},
        {"solver.zc_tol", Kind::real, "s", [](Scenario& s) -> void* { return &s.solver.zc_tol; }},
        {"solver.record_stride", Kind::integer, "", [](Scenario& s) -> void* { return &s.solver.record_stride; }},
        {"solver.method", Kind::method, "", [](Scenario& s) -> void* { return &s.solver.method; }},
        {"solver.full_rate", Kind::boolean, "", [](Scenario& s) -> void* { return &s.solver.full_rate; }},
        {"sim.t_end", Kind::real, "s", [](Scenario& s) -> void* { return &s.t_end; }},
        {"init.i_l", Kind::real, "A", [](Scenario& s) -> void* { return &s.init.i_l; }},
        {"init.v_dc", Kind::real, "V", [](Scenario& s) -> void* { return &s.init.v_dc; }},
        {"output.trace_from", Kind::real, "s", [](Scenario& s) -> void* { return &s.output.trace_from; }},
        {"output.plots", Kind::boolean, "", [](Scenario& s) -> void* { return &s.output.plots; }},
    };
    return table;
}

inline const Key* find_key(std::string_view name) {
    for (const auto& k : keys()) {
        if (name == k.name) {
            return &k;
        }
    }
    return nullptr;
}

inline std::optional<double> prefix_scale(std::string_view p) {
    if (p.empty()) {
        return 1.0;
    }
    if (p == "p") return 1e-12;
    if (p == "n") return 1e-9;
    if (p == "u" || p == "\xC2\xB5" || p == "\xCE\xBC") return 1e-6;
    if (p == "m") return 1e-3;
    if (p == "k") return 1e3;
    if (p == "M") return 1e6;
    if (p == "G") return 1e9;
    return std::nullopt;
}

/// Parses "<number>[ ][prefix][unit]".
inline double parse_quantity(std::string_view text, std::string_view unit) {
    text = trim(text);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr == text.data()) {
        throw std::invalid_argument("expected a number, got '" + std::string(text) + "'");
    }
    if (!std::isfinite(value)) {
        throw std::invalid_argument("value must be finite");
    }
    std::string_view suffix = trim(std::string_view(ptr, static_cast<std::size_t>(text.data() + text.size() - ptr)));
    if (suffix.empty()) {
        return value;
    }
    std::vector<std::string_view> units;
    if (!unit.empty()) {
        units.push_back(unit);
        if (unit == "Ohm") {
            units.push_back("ohm");
            units.push_back("\xCE\xA9");
        }
    }
    for (auto u : units) {
        if (suffix.size() >= u.size() && suffix.substr(suffix.size() - u.size()) == u) {
            if (auto k = prefix_scale(suffix.substr(0, suffix.size() - u.size()))) {
                return value * *k;
            }
        }
    }
    if (auto k = prefix_scale(suffix)) {
        return value * *k;
    }
    throw std::invalid_argument("unrecognized unit suffix '" + std::string(suffix) + "'" +
                                (unit.empty() ? std::string(" (dimensionless)") : " (expected " + std::string(unit) + ")"));
}

inline long long parse_integer(std::string_view text) {
    text = trim(text);
    int base = 10;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
        text.remove_prefix(2);
        base = 16;
    }
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, base);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw std::invalid_argument("expected an integer, got '" + std::string(text) + "'");
    }
    return v;
}

inline void assign(const Key& key, Scenario& s, std::string_view raw) {
    void* f = key.field(s);
    switch (key.kind) {
        case Kind::real:
            *static_cast<double*>(f) = parse_quantity(raw, key.unit);
            return;
        case Kind::integer: {
            const long long v = parse_integer(raw);
            if (std::string_view(key.name) == "pwm.gate_mask") {
                if (v < 0 || v > 0xFF) {
                    throw std::invalid_argument("gate mask must be in [0, 0xFF]");
                }
                *static_cast<std::uint8_t*>(f) = static_cast<std::uint8_t>(v);
            } else {
                if (v < 0 || v > 1'000'000) {
                    throw std::invalid_argument("out of range");
                }
                *static_cast<int*>(f) = static_cast<int>(v);
            }
            return;
        }
        case Kind::text:
            *static_cast<std::string*>(f) = std::string(raw);
            return;
        case Kind::boolean:
            if (raw == "on" || raw == "true" || raw == "1") {
                *static_cast<bool*>(f) = true;
            } else if (raw == "off" || raw == "false" || raw == "0") {
                *static_cast<bool*>(f) = false;
            } else {
                throw std::invalid_argument("expected on/off, got '" + std::string(raw) + "'");
            }
            return;
        case Kind::strategy: {
            auto& k = *static_cast<StrategyKind*>(f);
            if (raw == "hard") {
                k = StrategyKind::hard;
            } else if (raw == "fixed_large") {
                k = StrategyKind::fixed_large_dead_time;
            } else if (raw == "variable_ramp") {
                k = StrategyKind::variable_ramp;
            } else {
                throw std::invalid_argument("expected hard, fixed_large or variable_ramp, got '" + std::string(raw) +
                                            "'");
            }
            return;
        }
        case Kind::load: {
            auto& k = *static_cast<LoadKind*>(f);
            if (raw == "none") {
                k = LoadKind::none;
            } else if (raw == "resistive") {
                k = LoadKind::resistive;
            } else if (raw == "constant_current") {
                k = LoadKind::constant_current;
            } else {
                throw std::invalid_argument("expected none, resistive or constant_current, got '" +
                                            std::string(raw) + "'");
            }
            return;
        }
        case Kind::method: {
            auto& m = *static_cast<Integrator*>(f);
            if (raw == "exact") {
                m = Integrator::exact;
            } else if (raw == "rk4") {
                m = Integrator::rk4;
            } else {
                throw std::invalid_argument("expected exact or rk4, got '" + std::string(raw) + "'");
            }
            return;
        }
    }
}

inline std::string format_real(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, r.ptr};
}

inline std::string render(const Key& key, Scenario& s) {
    void* f = key.field(s);
    switch (key.kind) {
        case Kind::real:
            return format_real(*static_cast<double*>(f));
        case Kind::integer:
            if (std::string_view(key.name) == "pwm.gate_mask") {
                char buf[8];
                std::snprintf(buf, sizeof buf, "0x%02X", *static_cast<std::uint8_t*>(f));
                return buf;
            }
            return std::to_string(*static_cast<int*>(f));
        case Kind::text:
            return *static_cast<std::string*>(f);
        case Kind::boolean:
            return *static_cast<bool*>(f) ? "on" : "off";
        case Kind::strategy:
            return std::string(to_string(*static_cast<StrategyKind*>(f)));
        case Kind::load:
            return std::string(to_string(*static_cast<LoadKind*>(f)));
        case Kind::method:
            return *static_cast<Integrator*>(f) == Integrator::exact ? "exact" : "rk4";
    }
    return {};
}

}  // namespace config_detail

/// Names of all accepted keys, in serialization order.
[[nodiscard]] inline std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : config_detail::keys()) {
        out.emplace_back(k.name);
    }
    return out;
}

/// Sets one key on an existing scenario (no validation, no derived defaults).
inline void set_key(Scenario& s, std::string_view key, std::string_view value) {
    const auto* k = config_detail::find_key(key);
    if (k == nullptr) {
        throw ConfigError("unknown key", 0, std::string(key));
    }
    try {
        config_detail::assign(*k, s, config_detail::trim(value));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what(), 0, std::string(key));
    }
}

[[nodiscard]] inline Scenario parse_config(std::string_view text) {
    Scenario s;
    std::set<std::string, std::less<>> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = config_detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("expected 'key = value'", line_no);
        }
        const std::string key(config_detail::trim(line.substr(0, eq)));
        const std::string_view value = config_detail::trim(line.substr(eq + 1));
        const auto* k = config_detail::find_key(key);
        if (k == nullptr) {
            throw ConfigError("unknown key", line_no, key);
        }
        if (!seen.insert(key).second) {
            throw ConfigError("duplicate key", line_no, key);
        }
        if (value.empty()) {
            throw ConfigError("missing value", line_no, key);
        }
        try {
            config_detail::assign(*k, s, value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what(), line_no, key);
        }
    }

    // defaults that depend on other keys
    if (!seen.contains("strategy.t_d_large")) {
        s.strategy.t_d_large = s.pwm.f_sw > 0.0 ? dead_time_for_duty(s.pwm, 0.15) : s.strategy.t_d_large;
    }
    if (!seen.contains("solver.dt_max") && s.pwm.f_sw > 0.0) {
        s.solver.dt_max = 1.0 / s.pwm.f_sw / 200.0;
    }
    if (!seen.contains("solver.zc_tol")) {
        s.solver.zc_tol = std::min(1e-10, s.solver.dt_max / 100.0);
    }
    s.dab.f_sw = s.pwm.f_sw;
    s.pwm.phase_ratio = s.strategy.d_cmd;
    if (s.dab.f_sw <= 0.0 || !std::isfinite(s.dab.f_sw)) {
        throw ConfigError("must be > 0", 0, "pwm.f_sw");
    }
    validate(s);
    return s;
}

[[nodiscard]] inline Scenario load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Every key with its exact value in base SI units.
[[nodiscard]] inline std::string serialize(const Scenario& s) {
    Scenario copy = s;
    std::string out;
    for (const auto& k : config_detail::keys()) {
        out += k.name;
        out += " = ";
        out += config_detail::render(k, copy);
        out += '\n';
    }
    return out;
}

}  // namespace dabsim
