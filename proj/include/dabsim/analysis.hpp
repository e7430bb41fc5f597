#pragma once

// Closed-form single-phase-shift relations, the averaged output-voltage
// model, and startup figures of merit extracted from a waveform trace.

#include "dabsim/circuit.hpp"
#include "dabsim/solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace dabsim {

namespace detail {
inline void check_phase(double d) {
    if (!(std::abs(d) <= 0.5)) {
        throw std::domain_error("phase ratio |D| must be <= 0.5");
    }
}
}  // namespace detail

/// Steady-state SPS power, V_dc V_bat D (1 - |D|) / (2 n L_e f_s). Odd in D.
[[nodiscard]] inline double power_sps(double v_dc, double v_bat, double d, double n, double l_e, double f_s) {
    detail::check_phase(d);
    return v_dc * v_bat * d * (1.0 - std::abs(d)) / (2.0 * n * l_e * f_s);
}

[[nodiscard]] inline double cap_energy(double c_out, double v_dc) { return 0.5 * c_out * v_dc * v_dc; }

[[nodiscard]] inline double averaged_cap_current(double v_bat, double d, double n, double l_e, double f_s,
                                                 double i_o) {
    detail::check_phase(d);
    return v_bat * d * (1.0 - std::abs(d)) / (2.0 * n * l_e * f_s) - i_o;
}

[[nodiscard]] inline double averaged_dvdc_dt(double v_bat, double d, double n, double l_e, double c_out, double f_s,
                                             double i_o) {
    detail::check_phase(d);
    return v_bat * d * (1.0 - std::abs(d)) / (2.0 * n * l_e * c_out * f_s) - i_o / c_out;
}

/// Smaller-magnitude phase ratio that transfers `power` at the given voltages.
[[nodiscard]] inline double phase_for_power(double power, double v_dc, double v_bat, double n, double l_e,
                                            double f_s) {
    const double k = std::abs(power) * 2.0 * n * l_e * f_s / (v_dc * v_bat);
    if (k > 0.25) {
        throw std::domain_error("requested power exceeds the SPS maximum at |D| = 0.5");
    }
    const double d = 0.5 * (1.0 - std::sqrt(1.0 - 4.0 * k));
    return power < 0.0 ? -d : d;
}

/// Fraction of the period left for conduction after `td_total` of dead time.
[[nodiscard]] inline double effective_conduction(double td_total, double t_sw) {
    return std::clamp((t_sw - td_total) / t_sw, 0.0, 1.0);
}

struct AveragedState {
    double t = 0.0;
    double v_dc = 0.0;
};

/// RK4 integration of the averaged output equation with the transfer term
/// scaled by `d_eff(t)`; the load current follows `p.load`. v_dc is clamped at 0.
[[nodiscard]] inline std::vector<AveragedState> integrate_averaged_model(
    const DabParams& p, const std::function<double(double)>& phase_of_t,
    const std::function<double(double)>& d_eff_of_t, double t_end, double dt, double v0 = 0.0, double t0 = 0.0) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("dt must be > 0");
    }
    auto rate = [&](double t, double v) {
        const double d = phase_of_t(t);
        const double drive = averaged_cap_current(p.v_bat, d, p.n, p.l_e, p.f_sw, 0.0);
        return (d_eff_of_t(t) * drive - p.load.current(v)) / p.c_out;
    };
    std::vector<AveragedState> out;
    out.reserve(static_cast<std::size_t>((t_end - t0) / dt) + 2);
    double v = std::max(v0, 0.0);
    double t = t0;
    out.push_back({t, v});
    while (t < t_end) {
        const double h = std::min(dt, t_end - t);
        const double k1 = rate(t, v);
        const double k2 = rate(t + 0.5 * h, v + 0.5 * h * k1);
        const double k3 = rate(t + 0.5 * h, v + 0.5 * h * k2);
        const double k4 = rate(t + h, v + h * k3);
        v = std::max(0.0, v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        t = (t_end - t <= dt) ? t_end : t + h;
        out.push_back({t, v});
    }
    return out;
}

struct StartupMetrics {
    double peak_i_l = 0.0;
    double peak_i_cap = 0.0;
    double v_final = 0.0;
    std::optional<double> overshoot_pct;
    std::optional<double> rise_time_10_90;
    std::optional<double> settling_time_2pct;  // measured from t_ref
};

/// Time-weighted mean of `v` over the last `fraction` of the trace duration.
[[nodiscard]] inline double tail_mean(const std::vector<double>& t, const std::vector<double>& v, double fraction) {
    const double t1 = t.back();
    const double t0 = t1 - fraction * (t1 - t.front());
    double area = 0.0;
    double span = 0.0;
    for (std::size_t k = t.size() - 1; k > 0; --k) {
        const double a = std::max(t[k - 1], t0);
        const double b = t[k];
        if (b <= t0) {
            break;
        }
        // linear interpolation of v at a
        const double w = (t[k] - t[k - 1]) > 0.0 ? (a - t[k - 1]) / (t[k] - t[k - 1]) : 0.0;
        const double va = v[k - 1] + w * (v[k] - v[k - 1]);
        area += 0.5 * (va + v[k]) * (b - a);
        span += b - a;
    }
    return span > 0.0 ? area / span : v.back();
}

/// Startup figures of merit. v_final is the mean over the last 5 % of the
/// trace duration; settling is reported relative to `t_ref`.
[[nodiscard]] inline StartupMetrics compute_metrics(const WaveformTrace& tr, std::optional<double> t_ref = {}) {
    if (tr.empty()) {
        throw std::invalid_argument("compute_metrics: empty trace");
    }
    StartupMetrics m;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        m.peak_i_l = std::max(m.peak_i_l, std::abs(tr.i_l[k]));
        m.peak_i_cap = std::max(m.peak_i_cap, std::abs(tr.i_cap[k]));
    }
    m.v_final = tr.size() > 1 ? tail_mean(tr.t, tr.v_dc, 0.05) : tr.v_dc.back();
    if (std::abs(m.v_final) < 1e-6) {
        return m;
    }
    const double v_max = *std::max_element(tr.v_dc.begin(), tr.v_dc.end());
    m.overshoot_pct = std::max(0.0, (v_max - m.v_final) / m.v_final * 100.0);

    const double lo = 0.1 * m.v_final;
    const double hi = 0.9 * m.v_final;
    std::optional<double> t10;
    std::optional<double> t90;
    auto cross = [&](std::size_t k, double level) {
        const double v0 = tr.v_dc[k - 1];
        const double v1 = tr.v_dc[k];
        const double w = v1 != v0 ? (level - v0) / (v1 - v0) : 1.0;
        return tr.t[k - 1] + std::clamp(w, 0.0, 1.0) * (tr.t[k] - tr.t[k - 1]);
    };
    for (std::size_t k = 1; k < tr.size() && !t90; ++k) {
        if (!t10 && tr.v_dc[k] >= lo && tr.v_dc[k - 1] < lo) {
            t10 = cross(k, lo);
        }
        if (t10 && tr.v_dc[k] >= hi && tr.v_dc[k - 1] < hi) {
            t90 = cross(k, hi);
        }
    }
    if (t10 && t90) {
        m.rise_time_10_90 = *t90 - *t10;
    }
    const double band = 0.02 * std::abs(m.v_final);
    std::optional<std::size_t> last_out;
    for (std::size_t k = tr.size(); k-- > 0;) {
        if (std::abs(tr.v_dc[k] - m.v_final) > band) {
            last_out = k;
            break;
        }
    }
    const double ref = t_ref.value_or(tr.t.front());
    if (!last_out) {
        m.settling_time_2pct = 0.0;
    } else if (*last_out + 1 < tr.size()) {
        m.settling_time_2pct = std::max(0.0, tr.t[*last_out + 1] - ref);
    }
    return m;
}

/// Largest drop of v_dc below its running maximum.
[[nodiscard]] inline double max_drop_below_running_max(const WaveformTrace& tr) {
    double run = -std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (double v : tr.v_dc) {
        run = std::max(run, v);
        worst = std::max(worst, run - v);
    }
    return worst;
}

struct EnergyBalance {
    double e_src = 0.0;     // delivered by the source
    double d_e_l = 0.0;     // change of inductor energy
    double d_e_c = 0.0;     // change of capacitor energy
    double e_load = 0.0;    // dissipated in the load
    double e_c_final = 0.0;
    double residual = 0.0;  // e_src - d_e_l - d_e_c - e_load

    /// max(E_src, E_C_final), the normalization for the residual.
    [[nodiscard]] double scale() const { return std::max(std::abs(e_src), e_c_final); }
};

/// Trapezoidal energy audit of a trace. The bridge voltage recorded at a
/// sample holds until the next sample, so the source term is
/// v_p[k] * (i_l[k] + i_l[k+1]) / 2 * dt.
[[nodiscard]] inline EnergyBalance energy_balance(const WaveformTrace& tr, const DabParams& p) {
    EnergyBalance e;
    if (tr.empty()) {
        return e;
    }
    for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
        const double dt = tr.t[k + 1] - tr.t[k];
        e.e_src += tr.v_p[k] * 0.5 * (tr.i_l[k] + tr.i_l[k + 1]) * dt;
        const double pl0 = tr.v_dc[k] * p.load.current(tr.v_dc[k]);
        const double pl1 = tr.v_dc[k + 1] * p.load.current(tr.v_dc[k + 1]);
        e.e_load += 0.5 * (pl0 + pl1) * dt;
    }
    e.d_e_l = 0.5 * p.l_e * (tr.i_l.back() * tr.i_l.back() - tr.i_l.front() * tr.i_l.front());
    e.e_c_final = cap_energy(p.c_out, tr.v_dc.back());
    e.d_e_c = e.e_c_final - cap_energy(p.c_out, tr.v_dc.front());
    e.residual = e.e_src - e.d_e_l - e.d_e_c - e.e_load;
    return e;
}

[[nodiscard]] inline double energy_balance_residual(const WaveformTrace& tr, const DabParams& p) {
    return energy_balance(tr, p).residual;
}

}  // namespace dabsim
