#pragma once

// Event-driven integration of the switched two-state model.
//
// Between gate edges the network is linear with constant inputs, so each
// micro-step is advanced in closed form (or by RK4 when requested). A change
// of the resolved topology inside a micro-step (diode turn-off at i_l = 0,
// escape from blocking, DC-link clamp at v_dc = 0) is located by bisection
// and integration restarts from there.

#include "dabsim/circuit.hpp"
#include "dabsim/deadtime.hpp"
#include "dabsim/pwm.hpp"

#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dabsim {

enum class Integrator { exact, rk4 };

struct SolverConfig {
    double dt_max = 1.0 / 32e3 / 200.0;
    double zc_tol = 1e-10;
    int record_stride = 8;  // uniform samples per switching period
    Integrator method = Integrator::exact;
    bool full_rate = false;  // additionally record every micro-step

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

[[nodiscard]] inline SolverConfig default_solver_config(double f_sw) {
    SolverConfig c;
    c.dt_max = 1.0 / f_sw / 200.0;
    return c;
}

inline void validate(const SolverConfig& c, double t_sw) {
    if (!(c.dt_max > 0.0) || c.dt_max > t_sw / 200.0 * (1.0 + 1e-12)) {
        throw std::invalid_argument("solver.dt_max must satisfy 0 < dt_max <= T_sw/200");
    }
    if (!(c.zc_tol > 0.0) || c.zc_tol > c.dt_max / 100.0 * (1.0 + 1e-12)) {
        throw std::invalid_argument("solver.zc_tol must satisfy 0 < zc_tol <= dt_max/100");
    }
    if (c.record_stride < 2) {
        throw std::invalid_argument("solver.record_stride must be >= 2");
    }
}

/// Columnar waveform record; t is strictly increasing.
struct WaveformTrace {
    std::vector<double> t, i_l, v_dc, i_cap, v_p, v_s, td;

    [[nodiscard]] std::size_t size() const { return t.size(); }
    [[nodiscard]] bool empty() const { return t.empty(); }

    void push(double tt, double il, double vdc, double icap, double vp, double vs, double tdv) {
        if (!t.empty() && tt <= t.back()) {
            // same instant: keep the post-event values
            i_l.back() = il;
            v_dc.back() = vdc;
            i_cap.back() = icap;
            v_p.back() = vp;
            v_s.back() = vs;
            td.back() = tdv;
            return;
        }
        t.push_back(tt);
        i_l.push_back(il);
        v_dc.push_back(vdc);
        i_cap.push_back(icap);
        v_p.push_back(vp);
        v_s.push_back(vs);
        td.push_back(tdv);
    }

    void reserve(std::size_t n) {
        for (auto* c : {&t, &i_l, &v_dc, &i_cap, &v_p, &v_s, &td}) {
            c->reserve(n);
        }
    }
};

namespace detail {

inline void put_number(std::string& out, double x) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    out.append(buf, r.ptr);
}

}  // namespace detail

/// CSV with header `t,i_l,v_dc,i_cap,v_p,v_s,td`, shortest round-trip decimals.
inline void write_trace_csv(std::ostream& os, const WaveformTrace& tr) {
    os << "t,i_l,v_dc,i_cap,v_p,v_s,td\n";
    std::string line;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        line.clear();
        for (const auto* col : {&tr.t, &tr.i_l, &tr.v_dc, &tr.i_cap, &tr.v_p, &tr.v_s, &tr.td}) {
            if (col != &tr.t) {
                line.push_back(',');
            }
            detail::put_number(line, (*col)[k]);
        }
        line.push_back('\n');
        os << line;
    }
}

class SimulationError : public std::runtime_error {
public:
    SimulationError(const std::string& what, ConverterState last_valid, GateVector gates)
        : std::runtime_error(what), last_valid_(last_valid), gates_(gates) {}

    [[nodiscard]] const ConverterState& last_valid() const { return last_valid_; }
    [[nodiscard]] GateVector gates() const { return gates_; }

private:
    ConverterState last_valid_;
    GateVector gates_;
};

/// Bisection for a sign change of `f` on [t0, t1]. Requires f(t0) * f(t1) <= 0;
/// returns a point within `tol` of the crossing.
template <class F>
[[nodiscard]] double locate_zero_crossing(F&& f, double t0, double t1, double tol) {
    double f0 = f(t0);
    const double f1 = f(t1);
    if (f0 == 0.0) {
        return t0;
    }
    if (f1 == 0.0) {
        return t1;
    }
    if (f0 * f1 > 0.0) {
        throw std::invalid_argument("locate_zero_crossing: no sign change on the bracket");
    }
    double lo = t0;
    double hi = t1;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) {
            return mid;
        }
        if ((fm > 0.0) == (f0 > 0.0)) {
            lo = mid;
            f0 = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// x' = A x + b for x = (i_l, v_dc) under one topology.
struct LinearSystem {
    double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;
    double b1 = 0.0, b2 = 0.0;
};

[[nodiscard]] inline LinearSystem linearize(const Topology& t, const DabParams& p) {
    LinearSystem sys;
    if (!t.blocked && !t.dc_clamped) {
        sys.a12 = -t.s / (p.n * p.l_e);
    }
    if (!t.blocked) {
        sys.b1 = t.v_p / p.l_e;
    }
    if (!t.dc_clamped) {
        if (!t.blocked) {
            sys.a21 = t.s / (p.n * p.c_out);
        }
        sys.a22 = -p.load.conductance() / p.c_out;
        sys.b2 = -p.load.sink() / p.c_out;
    }
    return sys;
}

struct Vec2 {
    double i = 0.0;
    double v = 0.0;
};

/// Closed-form solution of x' = A x + b after `h` seconds.
[[nodiscard]] inline Vec2 advance_exact(Vec2 x, const LinearSystem& s, double h) {
    if (s.a12 == 0.0 && s.a21 == 0.0) {
        Vec2 r;
        r.i = s.a11 == 0.0 ? x.i + s.b1 * h : x.i + (x.i + s.b1 / s.a11) * std::expm1(s.a11 * h);
        r.v = s.a22 == 0.0 ? x.v + s.b2 * h : x.v + (x.v + s.b2 / s.a22) * std::expm1(s.a22 * h);
        return r;
    }
    const double det = s.a11 * s.a22 - s.a12 * s.a21;
    // equilibrium
    const double ie = -(s.a22 * s.b1 - s.a12 * s.b2) / det;
    const double ve = -(-s.a21 * s.b1 + s.a11 * s.b2) / det;
    const double mu = 0.5 * (s.a11 + s.a22);
    const double disc = mu * mu - det;
    const double z = disc * h * h;
    double c = 0.0;
    double sh = 0.0;  // sinh(q h)/q or sin(q h)/q
    if (std::abs(z) < 1e-8) {
        c = 1.0 + 0.5 * z;
        sh = h * (1.0 + z / 6.0);
    } else if (disc < 0.0) {
        const double q = std::sqrt(-disc);
        c = std::cos(q * h);
        sh = std::sin(q * h) / q;
    } else {
        const double q = std::sqrt(disc);
        c = std::cosh(q * h);
        sh = std::sinh(q * h) / q;
    }
    const double e = std::exp(mu * h);
    const double d0 = x.i - ie;
    const double d1 = x.v - ve;
    const double p11 = e * (c - mu * sh + sh * s.a11);
    const double p12 = e * sh * s.a12;
    const double p21 = e * sh * s.a21;
    const double p22 = e * (c - mu * sh + sh * s.a22);
    return {ie + p11 * d0 + p12 * d1, ve + p21 * d0 + p22 * d1};
}

[[nodiscard]] inline Vec2 advance_rk4(Vec2 x, const LinearSystem& s, double h) {
    auto f = [&s](Vec2 y) { return Vec2{s.a11 * y.i + s.a12 * y.v + s.b1, s.a21 * y.i + s.a22 * y.v + s.b2}; };
    auto axpy = [](Vec2 y, double a, Vec2 k) { return Vec2{y.i + a * k.i, y.v + a * k.v}; };
    const Vec2 k1 = f(x);
    const Vec2 k2 = f(axpy(x, 0.5 * h, k1));
    const Vec2 k3 = f(axpy(x, 0.5 * h, k2));
    const Vec2 k4 = f(axpy(x, h, k3));
    return {x.i + h / 6.0 * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i),
            x.v + h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v)};
}

struct StepOutcome {
    ConverterState state;
    bool event = false;  // the step ended early at a topology change
};

/// Advances one micro-step of at most `dt` under `topo`. If the resolved
/// topology changes inside the step, the change is bracketed to `cfg.zc_tol`,
/// the state is moved just past it and the step ends there.
[[nodiscard]] inline StepOutcome step_interval(const ConverterState& x0, GateVector gates, const Topology& topo,
                                               double dt, const DabParams& p, const SolverConfig& cfg) {
    const LinearSystem sys = linearize(topo, p);
    auto at = [&](double h) {
        const Vec2 x{x0.i_l, x0.v_dc};
        const Vec2 r = cfg.method == Integrator::exact ? advance_exact(x, sys, h) : advance_rk4(x, sys, h);
        return ConverterState{x0.t + h, topo.blocked ? 0.0 : r.i, topo.dc_clamped ? 0.0 : r.v};
    };
    auto same = [&](const ConverterState& s) { return resolve_topology(gates, s.i_l, s.v_dc, p) == topo; };

    ConverterState end = at(dt);
    if (same(end)) {
        return {end, false};
    }
    double lo = 0.0;
    double hi = dt;
    while (hi - lo > cfg.zc_tol) {
        const double mid = 0.5 * (lo + hi);
        if (same(at(mid))) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ConverterState s = at(hi);
    if (topo.has_diode_legs() && topo.direction * s.i_l <= 0.0) {
        s.i_l = 0.0;  // diode current reached zero
    }
    if (!topo.dc_clamped && s.v_dc < 0.0) {
        s.v_dc = 0.0;
    }
    return {s, true};
}

struct SimulationStats {
    std::size_t micro_steps = 0;
    std::size_t topology_events = 0;
    std::size_t gate_edges = 0;
    std::size_t degenerate_pulses = 0;
};

struct SimulationResult {
    WaveformTrace trace;
    SimulationStats stats;
    ConverterState final_state;
};

/// Integrates from `init.t` to `t_end` under the gate schedule implied by
/// `pwm` and `sched`. Records `record_stride` uniform samples per period plus
/// a sample at every gate edge and every located topology change.
[[nodiscard]] inline SimulationResult simulate(const DabParams& p, const PwmConfig& pwm, const DeadTimeSchedule& sched,
                                               const SolverConfig& cfg, double t_end, const ConverterState& init) {
    validate(p);
    validate(pwm);
    validate(cfg, pwm.period());
    if (!(t_end > init.t)) {
        throw std::invalid_argument("t_end must be after the initial time");
    }
    const EdgeStream schedule = build_gate_schedule(pwm, sched, t_end);
    const auto& edges = schedule.edges;

    SimulationResult out;
    out.stats.degenerate_pulses = schedule.degenerate_pulses;
    WaveformTrace& tr = out.trace;

    const double sample_dt = pwm.period() / cfg.record_stride;
    auto next_sample_index = [&](double t) { return static_cast<long long>(std::floor(t / sample_dt)) + 1; };

    GateVector gates;
    std::size_t ei = 0;
    for (; ei < edges.size() && edges[ei].t <= init.t; ++ei) {
        gates.set(edges[ei].gate, edges[ei].direction == Edge::rising);
    }
    ConverterState x = init;
    x.t = init.t;

    auto fail = [&](const std::string& why) {
        std::ostringstream os;
        os.precision(12);
        os << why << " at t=" << x.t << " s (" << describe(gates) << ")";
        throw SimulationError(os.str(), x, gates);
    };

    Topology topo;
    auto resolve = [&] {
        if (gates.shoot_through()) {
            fail("shoot-through");
        }
        topo = resolve_topology(gates, x.i_l, x.v_dc, p);
    };
    auto record = [&] {
        const Derivatives d = derivatives(x, topo, p);
        tr.push(x.t, x.i_l, x.v_dc, d.dv_dc * p.c_out, topo.v_p, topo.v_s(x.v_dc), dead_time_at(sched, x.t));
    };

    resolve();
    record();
    long long sample_k = next_sample_index(x.t);
    int stalled = 0;

    while (x.t < t_end) {
        const double t_edge = ei < edges.size() ? edges[ei].t : std::numeric_limits<double>::infinity();
        const double t_stop = std::min(t_edge, t_end);

        while (x.t < t_stop) {
            const double t_sample = static_cast<double>(sample_k) * sample_dt;
            const double t_target = std::min(t_stop, t_sample);
            const Derivatives d = derivatives(x, topo, p);
            bool hit_target = false;
            if (d.di_l == 0.0 && d.dv_dc == 0.0) {
                // equilibrium of the present linear network
                x.t = t_target;
                hit_target = true;
            } else {
                double h = t_target - x.t;
                if (h > cfg.dt_max) {
                    h = cfg.dt_max;
                }
                StepOutcome st = step_interval(x, gates, topo, h, p, cfg);
                ++out.stats.micro_steps;
                if (!std::isfinite(st.state.i_l) || !std::isfinite(st.state.v_dc)) {
                    fail("non-finite state");
                }
                const ConverterState before = x;
                x = st.state;
                if (st.event) {
                    ++out.stats.topology_events;
                    const Topology old = topo;
                    resolve();
                    if (topo == old && x.t - before.t <= cfg.zc_tol) {
                        // no progress; accept the full step
                        if (++stalled > 4) {
                            x = before;
                            const LinearSystem sys = linearize(topo, p);
                            const Vec2 r = advance_exact({x.i_l, x.v_dc}, sys, h);
                            x = {x.t + h, r.i, r.v};
                            resolve();
                            stalled = 0;
                        }
                    } else {
                        stalled = 0;
                    }
                    record();
                    if (x.t >= t_target) {
                        x.t = t_target;
                        hit_target = true;
                    }
                } else {
                    stalled = 0;
                    if (h == t_target - before.t) {
                        x.t = t_target;
                        hit_target = true;
                    }
                    if (cfg.full_rate) {
                        record();
                    }
                }
            }
            if (hit_target && x.t == t_sample) {
                record();
                ++sample_k;
            }
        }
        if (x.t >= t_end) {
            break;
        }
        const std::int64_t tick = edges[ei].tick;
        for (; ei < edges.size() && edges[ei].tick == tick; ++ei) {
            gates.set(edges[ei].gate, edges[ei].direction == Edge::rising);
            ++out.stats.gate_edges;
        }
        resolve();
        record();
        if (x.t >= static_cast<double>(sample_k) * sample_dt) {
            ++sample_k;
        }
    }
    out.final_state = x;
    if (tr.t.back() < x.t) {
        record();
    }
    return out;
}

}  // namespace dabsim
