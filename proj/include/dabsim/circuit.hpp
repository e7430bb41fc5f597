#pragma once

// Ideal-switch topology resolution of the dual active bridge.
//
// State is the leakage current i_l (referred to the primary) and the DC-link
// voltage v_dc. The secondary is reflected to the primary as v_dc / n, so the
// rectified current into the link is s * i_l / n with s in {-1, 0, +1}.
// Leg current convention: i_out is the current leaving the leg node towards
// the transformer. Primary leg A sources +i_l, primary leg B -i_l; on the
// secondary, leg A receives i_l / n (i_out = -i_l / n) and leg B returns it.

#include "dabsim/pwm.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dabsim {

enum class LoadKind { none, resistive, constant_current };

[[nodiscard]] inline std::string_view to_string(LoadKind k) {
    switch (k) {
        case LoadKind::none:
            return "none";
        case LoadKind::resistive:
            return "resistive";
        case LoadKind::constant_current:
            return "constant_current";
    }
    return "?";
}

struct LoadModel {
    LoadKind kind = LoadKind::none;
    double r = 0.0;    // ohm, resistive
    double i_o = 0.0;  // A, constant_current

    [[nodiscard]] double conductance() const { return kind == LoadKind::resistive ? 1.0 / r : 0.0; }
    [[nodiscard]] double sink() const { return kind == LoadKind::constant_current ? i_o : 0.0; }
    /// Load current drawn from the link at `v_dc`.
    [[nodiscard]] double current(double v_dc) const { return conductance() * v_dc + sink(); }

    friend bool operator==(const LoadModel&, const LoadModel&) = default;
};

struct DabParams {
    double v_bat = 650.0;
    double c_out = 120e-6;
    double n = 1.0;
    double l_e = 22e-6;
    double f_sw = 32e3;
    LoadModel load{};

    friend bool operator==(const DabParams&, const DabParams&) = default;
};

inline void validate(const DabParams& p) {
    auto positive = [](double x, const char* what) {
        if (!(x > 0.0) || !std::isfinite(x)) {
            throw std::invalid_argument(std::string(what) + " must be > 0");
        }
    };
    positive(p.v_bat, "dab.v_bat");
    positive(p.c_out, "dab.c_out");
    positive(p.n, "dab.n");
    positive(p.l_e, "dab.l_e");
    positive(p.f_sw, "pwm.f_sw");
    if (p.load.kind == LoadKind::resistive && !(p.load.r > 0.0)) {
        throw std::invalid_argument("load.r must be > 0 for a resistive load");
    }
    if (p.load.kind == LoadKind::constant_current && !(p.load.i_o >= 0.0)) {
        throw std::invalid_argument("load.i_o must be >= 0 for a constant-current load");
    }
}

struct ConverterState {
    double t = 0.0;
    double i_l = 0.0;
    double v_dc = 0.0;

    friend bool operator==(const ConverterState&, const ConverterState&) = default;
};

enum class Conduction : std::uint8_t { high, low, diode_high, diode_low, blocked };

struct LegState {
    Conduction conduction = Conduction::blocked;
    double v = 0.0;  // node voltage, meaningful unless blocked

    [[nodiscard]] bool blocked() const { return conduction == Conduction::blocked; }
    [[nodiscard]] bool diode() const {
        return conduction == Conduction::diode_high || conduction == Conduction::diode_low;
    }
    [[nodiscard]] bool at_rail() const {
        return conduction == Conduction::high || conduction == Conduction::diode_high;
    }
};

class ShootThroughError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

[[nodiscard]] inline LegState resolve_leg(bool gate_high, bool gate_low, double i_out, double v_rail) {
    if (gate_high && gate_low) {
        throw ShootThroughError("shoot-through: both gates of a leg are on");
    }
    if (gate_high) {
        return {Conduction::high, v_rail};
    }
    if (gate_low) {
        return {Conduction::low, 0.0};
    }
    if (i_out > 0.0) {
        return {Conduction::diode_low, 0.0};
    }
    if (i_out < 0.0) {
        return {Conduction::diode_high, v_rail};
    }
    return {Conduction::blocked, 0.0};
}

/// v_p, or nullopt when a leg is blocked and the bridge floats.
[[nodiscard]] inline std::optional<double> primary_bridge_voltage(GateVector g, double i_l, double v_bat) {
    const LegState a = resolve_leg(g[1], g[2], i_l, v_bat);
    const LegState b = resolve_leg(g[3], g[4], -i_l, v_bat);
    if (a.blocked() || b.blocked()) {
        return std::nullopt;
    }
    return a.v - b.v;
}

struct SecondaryOutput {
    std::optional<double> v_s_reflected;  // nullopt when blocked
    double i_rect = 0.0;                  // into the DC link
    int s = 0;                            // v_s = s * v_dc
};

[[nodiscard]] inline SecondaryOutput secondary_network(GateVector g, double i_l, double v_dc, double n) {
    const double i_s = i_l / n;
    const LegState a = resolve_leg(g[5], g[6], -i_s, v_dc);
    const LegState b = resolve_leg(g[7], g[8], i_s, v_dc);
    if (a.blocked() || b.blocked()) {
        return {std::nullopt, 0.0, 0};
    }
    const int s = static_cast<int>(a.at_rail()) - static_cast<int>(b.at_rail());
    return {s * v_dc / n, s * i_s, s};
}

/// Fully resolved switched network for one constant-topology interval.
struct Topology {
    std::array<LegState, 4> legs{};
    bool blocked = false;     // i_l pinned at zero, no conducting loop
    bool dc_clamped = false;  // v_dc pinned at zero by the secondary body diodes
    double v_p = 0.0;         // primary bridge voltage (0 when blocked)
    int s = 0;                // secondary switching function
    int direction = 0;        // current sign the diode legs were resolved for

    [[nodiscard]] bool has_diode_legs() const {
        for (const auto& l : legs) {
            if (l.diode()) {
                return true;
            }
        }
        return false;
    }
    [[nodiscard]] double v_s(double v_dc) const { return s * v_dc; }

    friend bool operator==(const Topology& a, const Topology& b) {
        for (std::size_t i = 0; i < a.legs.size(); ++i) {
            if (a.legs[i].conduction != b.legs[i].conduction) {
                return false;
            }
        }
        return a.blocked == b.blocked && a.dc_clamped == b.dc_clamped;
    }
};

namespace detail {

inline Topology resolve_for_sign(GateVector g, int sign, double v_bat, double v_dc) {
    Topology t;
    const auto dir = static_cast<double>(sign);
    t.legs[0] = resolve_leg(g[1], g[2], dir, v_bat);
    t.legs[1] = resolve_leg(g[3], g[4], -dir, v_bat);
    t.legs[2] = resolve_leg(g[5], g[6], -dir, v_dc);
    t.legs[3] = resolve_leg(g[7], g[8], dir, v_dc);
    t.v_p = t.legs[0].v - t.legs[1].v;
    t.s = static_cast<int>(t.legs[2].at_rail()) - static_cast<int>(t.legs[3].at_rail());
    t.direction = sign;
    return t;
}

inline bool any_leg_off(GateVector g) {
    for (int leg = 0; leg < 4; ++leg) {
        if (!g[2 * leg + 1] && !g[2 * leg + 2]) {
            return true;
        }
    }
    return false;
}

}  // namespace detail

/// Resolves the conduction state of all legs for the present gates and state.
///
/// With i_l != 0 every off leg conducts through the body diode selected by
/// the current sign. With i_l == 0 and some leg off, current may start only
/// in a direction the resulting loop voltage actually drives (strictly);
/// otherwise the network blocks and i_l stays at zero.
[[nodiscard]] inline Topology resolve_topology(GateVector g, double i_l, double v_dc, const DabParams& p) {
    if (g.shoot_through()) {
        throw ShootThroughError("shoot-through: both gates of a leg are on");
    }
    Topology t;
    if (i_l != 0.0) {
        t = detail::resolve_for_sign(g, i_l > 0.0 ? 1 : -1, p.v_bat, v_dc);
    } else if (!detail::any_leg_off(g)) {
        t = detail::resolve_for_sign(g, 1, p.v_bat, v_dc);
        t.direction = 0;
    } else {
        bool found = false;
        for (int sign : {1, -1}) {
            Topology c = detail::resolve_for_sign(g, sign, p.v_bat, v_dc);
            const double drive = c.v_p - c.s * v_dc / p.n;
            if (sign * drive > 0.0) {
                t = c;
                found = true;
                break;
            }
        }
        if (!found) {
            t = Topology{};
            for (int leg = 0; leg < 4; ++leg) {
                const bool hi = g[2 * leg + 1];
                const bool lo = g[2 * leg + 2];
                const double rail = leg < 2 ? p.v_bat : v_dc;
                t.legs[static_cast<std::size_t>(leg)] = hi ? LegState{Conduction::high, rail}
                                                        : lo ? LegState{Conduction::low, 0.0}
                                                             : LegState{Conduction::blocked, 0.0};
            }
            t.blocked = true;
        }
    }
    if (v_dc <= 0.0) {
        const double net = t.blocked ? -p.load.current(0.0) : t.s * i_l / p.n - p.load.current(0.0);
        t.dc_clamped = net < 0.0;
    }
    return t;
}

struct Derivatives {
    double di_l = 0.0;
    double dv_dc = 0.0;
};

[[nodiscard]] inline Derivatives derivatives(const ConverterState& x, const Topology& t, const DabParams& p) {
    Derivatives d;
    if (!t.blocked) {
        d.di_l = (t.v_p - t.s * x.v_dc / p.n) / p.l_e;
    }
    if (!t.dc_clamped) {
        const double i_rect = t.blocked ? 0.0 : t.s * x.i_l / p.n;
        d.dv_dc = (i_rect - p.load.current(x.v_dc)) / p.c_out;
    }
    return d;
}

[[nodiscard]] inline std::string describe(GateVector g) {
    std::ostringstream os;
    for (int i = 1; i <= 8; ++i) {
        os << 'M' << i << '=' << (g[i] ? 1 : 0) << (i < 8 ? " " : "");
    }
    return os.str();
}

}  // namespace dabsim
