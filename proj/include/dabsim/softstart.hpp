#pragma once

// Startup strategies expressed as dead-time schedules plus a held phase
// command.

#include "dabsim/deadtime.hpp"
#include "dabsim/pwm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dabsim {

enum class StrategyKind { hard, fixed_large_dead_time, variable_ramp };

[[nodiscard]] inline std::string_view to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::hard:
            return "hard";
        case StrategyKind::fixed_large_dead_time:
            return "fixed_large";
        case StrategyKind::variable_ramp:
            return "variable_ramp";
    }
    return "?";
}

struct StartupStrategy {
    StrategyKind kind = StrategyKind::variable_ramp;
    double d_cmd = 0.0;       // phase ratio held for the whole run
    double t_enable = 1.5;
    double t_ramp = 150e-3;   // variable_ramp only
    double t_d_final = 600e-9;
    double t_d_large = 21.875e-6;  // fixed_large only, 15 % per-switch duty at 32 kHz
    double hold = 100e-3;     // fixed_large only
    double t_d_start = 0.0;   // variable_ramp override, 0 selects the largest representable value

    friend bool operator==(const StartupStrategy&, const StartupStrategy&) = default;
};

/// Enforces 0 < t_d_final <= t_d_start < T_sw and non-negative times.
inline void validate(const DeadTimeSchedule& s, double t_sw) {
    if (!(s.t_d_final > 0.0)) {
        throw std::invalid_argument("t_d_final must be > 0");
    }
    if (!(s.t_d_final <= s.t_d_start)) {
        throw std::invalid_argument("dead times must satisfy t_d_final <= t_d_start");
    }
    if (!(s.t_d_start < t_sw)) {
        throw std::invalid_argument("t_d_start must be below one switching period");
    }
    if (!(s.t_ramp >= 0.0) || !(s.t_enable >= 0.0) || !(s.t_hold >= 0.0)) {
        throw std::invalid_argument("t_enable, t_ramp and hold must be >= 0");
    }
}

/// Largest total dead time below T_sw whose per-edge half sits on the clock grid.
[[nodiscard]] inline double max_start_dead_time(const PwmConfig& pwm) {
    const double half_ticks = 0.5 * pwm.period() * pwm.clk;
    auto d = static_cast<std::int64_t>(std::ceil(half_ticks - 1e-9)) - 1;
    if (d < 0) {
        d = 0;
    }
    return 2.0 * static_cast<double>(d) / pwm.clk;
}

[[nodiscard]] inline DeadTimeSchedule strategy_hard(const PwmConfig& pwm, double t_enable, double t_d_final) {
    if (!(t_d_final < pwm.period())) {
        throw std::invalid_argument("t_d_final must be below one switching period");
    }
    DeadTimeSchedule s{t_d_final, t_d_final, t_enable, 0.0, 0.0};
    validate(s, pwm.period());
    return s;
}

[[nodiscard]] inline DeadTimeSchedule strategy_variable_ramp(const PwmConfig& pwm, double t_enable, double t_ramp,
                                                             double t_d_final, double t_d_start = 0.0) {
    if (!(t_d_final < pwm.period())) {
        throw std::invalid_argument("t_d_final must be below one switching period");
    }
    if (t_ramp == 0.0) {
        return strategy_hard(pwm, t_enable, t_d_final);
    }
    DeadTimeSchedule s{t_d_start > 0.0 ? t_d_start : max_start_dead_time(pwm), t_d_final, t_enable, t_ramp, 0.0};
    validate(s, pwm.period());
    return s;
}

/// Holds `t_d_large` for `hold` seconds after enable, then steps to `t_d_final`.
[[nodiscard]] inline DeadTimeSchedule strategy_fixed_large(const PwmConfig& pwm, double t_enable, double hold,
                                                           double t_d_large, double t_d_final) {
    if (!(t_d_final <= t_d_large && t_d_large < pwm.period())) {
        throw std::invalid_argument("fixed_large requires t_d_final <= t_d_large < T_sw");
    }
    if (!(hold > 0.0)) {
        throw std::invalid_argument("fixed_large hold must be > 0");
    }
    DeadTimeSchedule s{t_d_large, t_d_final, t_enable, 0.0, hold};
    validate(s, pwm.period());
    return s;
}

/// Total dead time that leaves each switch on for `duty` of a full period
/// (0.15 duty = 30 % of each half period = 10.9375 us per edge at 32 kHz).
[[nodiscard]] inline double dead_time_for_duty(const PwmConfig& pwm, double duty) {
    return pwm.period() * (1.0 - 2.0 * duty);
}

[[nodiscard]] inline DeadTimeSchedule make_schedule(const StartupStrategy& st, const PwmConfig& pwm) {
    switch (st.kind) {
        case StrategyKind::hard:
            return strategy_hard(pwm, st.t_enable, st.t_d_final);
        case StrategyKind::fixed_large_dead_time:
            return strategy_fixed_large(pwm, st.t_enable, st.hold, st.t_d_large, st.t_d_final);
        case StrategyKind::variable_ramp:
            return strategy_variable_ramp(pwm, st.t_enable, st.t_ramp, st.t_d_final, st.t_d_start);
    }
    throw std::logic_error("unknown strategy");
}

}  // namespace dabsim
