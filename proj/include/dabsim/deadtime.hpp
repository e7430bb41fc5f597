#pragma once

#include <algorithm>

namespace dabsim {

/// Dead-time trajectory applied uniformly to all four legs.
///
/// Values are *total* dead time per switching period; each leg applies half of
/// it as the turn-on delay of both its high and low gate. The trajectory holds
/// `t_d_start` until `t_enable + t_hold`, then falls linearly to `t_d_final`
/// over `t_ramp` seconds. A zero ramp is a step.
struct DeadTimeSchedule {
    double t_d_start = 0.0;
    double t_d_final = 0.0;
    double t_enable = 0.0;
    double t_ramp = 0.0;
    double t_hold = 0.0;

    [[nodiscard]] double ramp_begin() const { return t_enable + t_hold; }
    [[nodiscard]] double ramp_end() const { return t_enable + t_hold + t_ramp; }

    friend bool operator==(const DeadTimeSchedule&, const DeadTimeSchedule&) = default;
};

/// Total dead time per period commanded at time `t`.
[[nodiscard]] inline double dead_time_at(const DeadTimeSchedule& s, double t) {
    const double begin = s.ramp_begin();
    if (t <= begin) {
        return s.t_d_start;
    }
    if (t >= begin + s.t_ramp) {
        return s.t_d_final;
    }
    const double frac = (t - begin) / s.t_ramp;
    const double td = s.t_d_start + (s.t_d_final - s.t_d_start) * frac;
    return std::clamp(td, std::min(s.t_d_start, s.t_d_final), std::max(s.t_d_start, s.t_d_final));
}

/// Delay applied to each gate turn-on: half of the total dead time.
[[nodiscard]] constexpr double per_edge_delay(double td_total) { return td_total / 2.0; }

}  // namespace dabsim
