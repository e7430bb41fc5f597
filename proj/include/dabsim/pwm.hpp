#pragma once

// Up-down-counter PWM emulation for the eight DAB gates.
//
// Each leg runs a 50 % carrier. Within a period starting at c the high gate is
// commanded on over [c, c + T/2) and the low gate over [c + T/2, c + T); the
// dead band delays every turn-on by delta while turn-offs stay immediate.
// delta is latched at the period start. All edge instants are rounded to the
// timer clock grid.

#include "dabsim/deadtime.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dabsim {

struct PwmConfig {
    double f_sw = 32e3;
    double clk = 100e6;
    double phase_ratio = 0.0;  // D, fraction of a half period, secondary lagging when positive
    std::uint8_t gate_enable = 0xFF;  // bit g-1 set: gate g is driven, otherwise held off

    [[nodiscard]] double period() const { return 1.0 / f_sw; }

    friend bool operator==(const PwmConfig&, const PwmConfig&) = default;
};

inline void validate(const PwmConfig& pwm) {
    if (!(pwm.f_sw > 0.0) || !std::isfinite(pwm.f_sw)) {
        throw std::invalid_argument("pwm.f_sw must be > 0");
    }
    if (!(pwm.clk >= 100.0 * pwm.f_sw) || !std::isfinite(pwm.clk)) {
        throw std::invalid_argument("pwm.clk must be >= 100 * f_sw");
    }
    if (!(std::abs(pwm.phase_ratio) <= 0.5)) {
        throw std::invalid_argument("phase ratio |D| must be <= 0.5");
    }
}

/// Nearest clock tick to `t`; exact ties round up.
[[nodiscard]] inline std::int64_t to_ticks(double t, double clk) {
    const double x = t * clk;
    // absorb representation error so that e.g. 305 ns at 100 MHz is a tie
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x));
    return static_cast<std::int64_t>(std::floor(x + 0.5 + slack));
}

[[nodiscard]] inline double quantize_to_clock(double t, double clk) {
    return static_cast<double>(to_ticks(t, clk)) / clk;
}

/// Commanded gate state of the eight switches, 1-based like M1..M8.
///
/// Legs: primary A = {1 high, 2 low}, primary B = {3, 4},
/// secondary A = {5, 6}, secondary B = {7, 8}.
class GateVector {
public:
    constexpr GateVector() = default;
    constexpr explicit GateVector(std::uint8_t mask) : mask_(mask) {}

    [[nodiscard]] constexpr bool operator[](int gate) const { return (mask_ >> (gate - 1)) & 1U; }
    constexpr void set(int gate, bool on) {
        const auto bit = static_cast<std::uint8_t>(1U << (gate - 1));
        mask_ = on ? static_cast<std::uint8_t>(mask_ | bit) : static_cast<std::uint8_t>(mask_ & ~bit);
    }
    [[nodiscard]] constexpr std::uint8_t mask() const { return mask_; }

    /// True if any leg has both gates on.
    [[nodiscard]] constexpr bool shoot_through() const {
        for (int leg = 0; leg < 4; ++leg) {
            if ((*this)[2 * leg + 1] && (*this)[2 * leg + 2]) {
                return true;
            }
        }
        return false;
    }

    friend constexpr bool operator==(GateVector, GateVector) = default;

private:
    std::uint8_t mask_ = 0;
};

enum class Edge : std::uint8_t { falling = 0, rising = 1 };

struct EdgeEvent {
    std::int64_t tick = 0;
    double t = 0.0;
    int gate = 1;
    Edge direction = Edge::rising;

    friend bool operator==(const EdgeEvent&, const EdgeEvent&) = default;
};

/// Time order; falling before rising at the same tick, then gate index.
[[nodiscard]] inline bool edge_before(const EdgeEvent& a, const EdgeEvent& b) {
    if (a.tick != b.tick) {
        return a.tick < b.tick;
    }
    if (a.direction != b.direction) {
        return a.direction == Edge::falling;
    }
    return a.gate < b.gate;
}

struct LegGates {
    int high = 1;
    int low = 2;
};

struct EdgeStream {
    std::vector<EdgeEvent> edges;
    std::size_t degenerate_pulses = 0;  // pulses whose on-time quantized to zero
};

/// Edge stream of one leg. `carrier_offset` is in [0, T_sw) and shifts the
/// carrier relative to the enable instant. Pulses that would turn on before
/// `sched.t_enable` are dropped; only edges before `horizon` are emitted.
[[nodiscard]] inline EdgeStream leg_edge_stream(const PwmConfig& pwm, const DeadTimeSchedule& sched,
                                                double carrier_offset, double horizon,
                                                LegGates gates = {}) {
    const double period = pwm.period();
    if (!(carrier_offset >= 0.0 && carrier_offset < period)) {
        throw std::invalid_argument("carrier offset must lie in [0, T_sw)");
    }
    const std::int64_t enable_tick = to_ticks(sched.t_enable, pwm.clk);
    const std::int64_t horizon_tick = to_ticks(horizon, pwm.clk);
    const double origin = sched.t_enable + carrier_offset;

    EdgeStream out;
    auto emit_pulse = [&](std::int64_t on, std::int64_t off, int gate) {
        if (on < enable_tick || on >= horizon_tick) {
            return;
        }
        if (on >= off) {
            ++out.degenerate_pulses;
            return;
        }
        out.edges.push_back({on, static_cast<double>(on) / pwm.clk, gate, Edge::rising});
        if (off < horizon_tick) {
            out.edges.push_back({off, static_cast<double>(off) / pwm.clk, gate, Edge::falling});
        }
    };

    for (std::int64_t k = -1;; ++k) {
        const double start = origin + static_cast<double>(k) * period;
        const std::int64_t a = to_ticks(start, pwm.clk);
        if (a >= horizon_tick) {
            break;
        }
        const std::int64_t b = to_ticks(start + 0.5 * period, pwm.clk);
        const std::int64_t a_next = to_ticks(origin + static_cast<double>(k + 1) * period, pwm.clk);
        const double delta = per_edge_delay(dead_time_at(sched, std::max(start, 0.0)));
        const std::int64_t d = to_ticks(delta, pwm.clk);
        emit_pulse(a + d, b, gates.high);
        emit_pulse(b + d, a_next, gates.low);
    }
    return out;
}

/// Carrier offsets of the four legs, each reduced into [0, T_sw).
[[nodiscard]] inline std::array<double, 4> leg_offsets(const PwmConfig& pwm) {
    const double period = pwm.period();
    auto wrap = [period](double x) {
        double r = std::fmod(x, period);
        if (r < 0.0) {
            r += period;
        }
        return r >= period ? 0.0 : r;
    };
    const double shift = pwm.phase_ratio * 0.5 * period;
    return {0.0, 0.5 * period, wrap(shift), wrap(shift + 0.5 * period)};
}

/// Merged, time-ordered edge list for all eight gates up to `horizon`.
[[nodiscard]] inline EdgeStream build_gate_schedule(const PwmConfig& pwm, const DeadTimeSchedule& sched,
                                                    double horizon) {
    validate(pwm);
    if (!(horizon > 0.0)) {
        throw std::invalid_argument("horizon must be > 0");
    }
    const auto offsets = leg_offsets(pwm);
    EdgeStream merged;
    for (int leg = 0; leg < 4; ++leg) {
        auto s = leg_edge_stream(pwm, sched, offsets[static_cast<std::size_t>(leg)], horizon,
                                 {2 * leg + 1, 2 * leg + 2});
        merged.degenerate_pulses += s.degenerate_pulses;
        for (const auto& e : s.edges) {
            if ((pwm.gate_enable >> (e.gate - 1)) & 1U) {
                merged.edges.push_back(e);
            }
        }
    }
    std::sort(merged.edges.begin(), merged.edges.end(), edge_before);
    return merged;
}

/// Replays the stream and counts ticks at which some leg has both gates on.
[[nodiscard]] inline std::size_t count_shoot_through(std::span<const EdgeEvent> edges) {
    GateVector g;
    std::size_t violations = 0;
    for (std::size_t i = 0; i < edges.size();) {
        const std::int64_t tick = edges[i].tick;
        for (; i < edges.size() && edges[i].tick == tick; ++i) {
            g.set(edges[i].gate, edges[i].direction == Edge::rising);
        }
        if (g.shoot_through()) {
            ++violations;
        }
    }
    return violations;
}

/// Dead gap between a gate turning off and its complement turning on.
struct DeadGap {
    std::int64_t off_tick = 0;  // falling edge of the gate that released the leg
    std::int64_t gap_ticks = 0;
    int leg = 0;  // 0..3
};

/// Every complementary off->on gap in the stream, per leg.
[[nodiscard]] inline std::vector<DeadGap> measure_dead_gaps(std::span<const EdgeEvent> edges) {
    std::array<std::int64_t, 4> last_off{};
    std::array<int, 4> last_off_gate{};
    std::vector<DeadGap> gaps;
    for (const auto& e : edges) {
        const int leg = (e.gate - 1) / 2;
        const auto l = static_cast<std::size_t>(leg);
        if (e.direction == Edge::falling) {
            last_off[l] = e.tick;
            last_off_gate[l] = e.gate;
        } else if (last_off_gate[l] != 0 && last_off_gate[l] != e.gate) {
            gaps.push_back({last_off[l], e.tick - last_off[l], leg});
            last_off_gate[l] = 0;
        } else {
            last_off_gate[l] = 0;
        }
    }
    return gaps;
}

inline void write_edges_csv(std::ostream& os, std::span<const EdgeEvent> edges) {
    os << "t_seconds,gate_index,direction\n";
    const auto old = os.precision(17);
    for (const auto& e : edges) {
        os << e.t << ',' << e.gate << ',' << (e.direction == Edge::rising ? "rising" : "falling") << '\n';
    }
    os.precision(old);
}

}  // namespace dabsim
