#pragma once

// Batch execution of scenarios and file output.

#include "dabsim/analysis.hpp"
#include "dabsim/plot.hpp"
#include "dabsim/scenario.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dabsim {

struct RunOutcome {
    std::string name;
    std::string strategy;
    bool ok = false;
    std::string error;
    StartupMetrics metrics{};
    EnergyBalance energy{};
    double max_drop = 0.0;
    SimulationStats stats{};
    double wall_seconds = 0.0;
    std::shared_ptr<const SimulationResult> result;  // null when the run failed
};

/// Simulates one scenario and extracts its metrics. Failures are captured in
/// the outcome rather than thrown.
[[nodiscard]] inline RunOutcome execute(const Scenario& s) {
    RunOutcome out;
    out.name = s.name;
    out.strategy = std::string(to_string(s.strategy.kind));
    const auto t0 = std::chrono::steady_clock::now();
    try {
        validate(s);
        auto res = std::make_shared<SimulationResult>(
            simulate(s.dab, s.pwm, schedule_of(s), s.solver, s.t_end, s.init));
        out.metrics = compute_metrics(res->trace, s.strategy.t_enable);
        out.energy = energy_balance(res->trace, s.dab);
        out.max_drop = max_drop_below_running_max(res->trace);
        out.stats = res->stats;
        out.result = std::move(res);
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

namespace runner_detail {

inline std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

inline std::string opt(const std::optional<double>& x) { return x ? num(*x) : std::string(); }

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return f;
}

inline void close_checked(std::ofstream& f, const std::filesystem::path& path) {
    f.close();
    if (!f) {
        throw std::runtime_error("error writing " + path.string());
    }
}

}  // namespace runner_detail

inline constexpr const char* kMetricsHeader =
    "name,strategy,status,peak_i_l,peak_i_cap,v_final,overshoot_pct,rise_time_10_90,settling_time_2pct,"
    "max_drop_below_max,energy_residual,energy_scale,wall_seconds,error";

inline void write_metrics_row(std::ostream& os, const RunOutcome& r) {
    using runner_detail::num;
    using runner_detail::opt;
    os << r.name << ',' << r.strategy << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) {
        const auto& m = r.metrics;
        os << num(m.peak_i_l) << ',' << num(m.peak_i_cap) << ',' << num(m.v_final) << ',' << opt(m.overshoot_pct)
           << ',' << opt(m.rise_time_10_90) << ',' << opt(m.settling_time_2pct) << ',' << num(r.max_drop) << ','
           << num(r.energy.residual) << ',' << num(r.energy.scale()) << ',';
    } else {
        os << ",,,,,,,,,";
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << num(r.wall_seconds) << ',' << err << '\n';
}

inline void write_metrics_csv(std::ostream& os, std::span<const RunOutcome> rows) {
    os << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        write_metrics_row(os, r);
    }
}

inline void write_summary(std::ostream& os, const RunOutcome& r) {
    using runner_detail::num;
    os << "scenario        " << r.name << '\n';
    os << "strategy        " << r.strategy << '\n';
    if (!r.ok) {
        os << "status          FAILED: " << r.error << '\n';
        return;
    }
    const auto& m = r.metrics;
    os << "peak i_l        " << num(m.peak_i_l) << " A\n";
    os << "peak i_cap      " << num(m.peak_i_cap) << " A\n";
    os << "v_final         " << num(m.v_final) << " V\n";
    os << "overshoot       " << (m.overshoot_pct ? num(*m.overshoot_pct) + " %" : "n/a") << '\n';
    os << "rise 10-90      " << (m.rise_time_10_90 ? num(*m.rise_time_10_90 * 1e3) + " ms" : "n/a") << '\n';
    os << "settling 2 %    " << (m.settling_time_2pct ? num(*m.settling_time_2pct * 1e3) + " ms after enable" : "n/a")
       << '\n';
    os << "max drop        " << num(r.max_drop) << " V below running max\n";
    os << "energy          src " << num(r.energy.e_src) << " J, dE_C " << num(r.energy.d_e_c) << " J, load "
       << num(r.energy.e_load) << " J, residual " << num(r.energy.residual) << " J\n";
    os << "steps           " << r.stats.micro_steps << " micro, " << r.stats.topology_events << " events, "
       << r.stats.gate_edges << " edges, " << r.stats.degenerate_pulses << " dropped pulses\n";
    os << "wall time       " << num(r.wall_seconds) << " s\n";
}

[[nodiscard]] inline std::filesystem::path scenario_dir(const Scenario& s) {
    return std::filesystem::path(s.output_dir) / s.name;
}

/// Plot window starting a little before enable.
[[nodiscard]] inline std::pair<double, double> plot_window(const Scenario& s) {
    const double t0 = std::max(s.init.t, s.strategy.t_enable - 0.02 * (s.t_end - s.strategy.t_enable));
    return {t0, s.t_end};
}

/// Writes trace.csv, metrics.csv, summary.txt, the scenario config and plots
/// under `<output_dir>/<name>/`.
inline void write_outputs(const Scenario& s, const RunOutcome& r) {
    const auto dir = scenario_dir(s);
    std::filesystem::create_directories(dir);
    {
        const auto p = dir / "scenario.conf";
        auto f = runner_detail::open_out(p);
        f << serialize(s);
        runner_detail::close_checked(f, p);
    }
    {
        const auto p = dir / "metrics.csv";
        auto f = runner_detail::open_out(p);
        write_metrics_csv(f, std::span<const RunOutcome>(&r, 1));
        runner_detail::close_checked(f, p);
    }
    {
        const auto p = dir / "summary.txt";
        auto f = runner_detail::open_out(p);
        write_summary(f, r);
        runner_detail::close_checked(f, p);
    }
    if (!r.ok) {
        return;
    }
    const WaveformTrace& tr = r.result->trace;
    {
        const auto p = dir / "trace.csv";
        auto f = runner_detail::open_out(p);
        const auto first = static_cast<std::size_t>(
            std::lower_bound(tr.t.begin(), tr.t.end(), s.output.trace_from) - tr.t.begin());
        if (first == 0) {
            write_trace_csv(f, tr);
        } else {
            WaveformTrace tail;
            tail.reserve(tr.size() - first);
            for (std::size_t k = first; k < tr.size(); ++k) {
                tail.push(tr.t[k], tr.i_l[k], tr.v_dc[k], tr.i_cap[k], tr.v_p[k], tr.v_s[k], tr.td[k]);
            }
            write_trace_csv(f, tail);
        }
        runner_detail::close_checked(f, p);
    }
    if (s.output.plots) {
        const auto [t0, t1] = plot_window(s);
        const plot::NamedTrace nt{s.name, &tr};
        plot::render_startup(dir / "startup.svg", std::span<const plot::NamedTrace>(&nt, 1), t0, t1);
        const auto sched = schedule_of(s);
        plot::render_gate_zoom(dir / "gate_zoom.svg", s.pwm, sched, sched.ramp_begin(), 5);
    }
}

/// Runs and writes one scenario.
[[nodiscard]] inline RunOutcome run_scenario(const Scenario& s) {
    RunOutcome r = execute(s);
    write_outputs(s, r);
    return r;
}

struct CompareResult {
    std::vector<RunOutcome> rows;
    std::filesystem::path dir;
};

/// Runs scenarios in parallel, writes each one's outputs and a merged table
/// plus overlay plots under `dir`. Scenarios with clashing names get a
/// numeric suffix so outputs stay isolated.
[[nodiscard]] inline CompareResult run_compare(std::vector<Scenario> scenarios, const std::filesystem::path& dir) {
    if (scenarios.empty()) {
        throw std::invalid_argument("compare needs at least one scenario");
    }
    for (const auto& s : scenarios) {
        if (!(s.dab == scenarios.front().dab)) {
            throw ConfigError("compared scenarios must share the converter parameters (dab.*, load.*)", 0,
                              s.name);
        }
    }
    std::map<std::string, int> uses;
    for (auto& s : scenarios) {
        const int k = ++uses[s.name];
        if (k > 1) {
            s.name += "-" + std::to_string(k);
        }
    }
    std::vector<std::future<RunOutcome>> jobs;
    jobs.reserve(scenarios.size());
    for (const auto& s : scenarios) {
        jobs.push_back(std::async(std::launch::async, [&s] { return execute(s); }));
    }
    CompareResult out;
    out.dir = dir;
    for (auto& j : jobs) {
        out.rows.push_back(j.get());
    }
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        write_outputs(scenarios[i], out.rows[i]);
    }

    {
        const auto p = dir / "metrics.csv";
        auto f = runner_detail::open_out(p);
        write_metrics_csv(f, out.rows);
        runner_detail::close_checked(f, p);
    }
    std::vector<plot::NamedTrace> traces;
    double t0 = std::numeric_limits<double>::infinity();
    double t1 = 0.0;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        if (out.rows[i].ok && scenarios[i].output.plots) {
            traces.push_back({out.rows[i].name, &out.rows[i].result->trace});
            const auto [a, b] = plot_window(scenarios[i]);
            t0 = std::min(t0, a);
            t1 = std::max(t1, b);
        }
    }
    if (!traces.empty()) {
        plot::render_startup(dir / "startup.svg", traces, t0, t1);
        for (const auto& info : plot::kSignals) {
            plot::render_overlay(dir / (std::string(info.key) + ".svg"), traces, info.signal, t0, t1);
        }
    }
    return out;
}

/// Sweepable parameters and their config keys.
[[nodiscard]] inline std::string sweep_key(std::string_view key) {
    static const std::map<std::string, std::string, std::less<>> alias = {
        {"t_ramp", "strategy.t_ramp"},       {"strategy.t_ramp", "strategy.t_ramp"},
        {"v_bat", "dab.v_bat"},              {"dab.v_bat", "dab.v_bat"},
        {"d_cmd", "strategy.d_cmd"},         {"strategy.d_cmd", "strategy.d_cmd"},
        {"t_d_final", "strategy.t_d_final"}, {"strategy.t_d_final", "strategy.t_d_final"},
    };
    const auto it = alias.find(key);
    if (it == alias.end()) {
        throw ConfigError("not sweepable; use t_ramp, v_bat, d_cmd or t_d_final", 0, std::string(key));
    }
    return it->second;
}

struct SweepResult {
    std::string key;
    std::vector<double> values;
    std::vector<RunOutcome> rows;
    bool peak_i_l_nonincreasing = false;
    bool overshoot_nonincreasing = false;
    std::filesystem::path dir;
};

/// Overshoot below this many percent is indistinguishable from round-off.
inline constexpr double kOvershootResolutionPct = 1e-3;

/// True if every successive pair satisfies b <= a (+ slack).
[[nodiscard]] inline bool nonincreasing(const std::vector<double>& xs, double slack = 0.0) {
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[i - 1] + slack) {
            return false;
        }
    }
    return true;
}

/// One run per value of `key`, in parallel. Rows follow the order of `values`;
/// monotonicity flags are computed over that order.
[[nodiscard]] inline SweepResult run_sweep(const Scenario& base, std::string_view key,
                                           const std::vector<double>& values, const std::filesystem::path& dir) {
    if (values.empty()) {
        throw ConfigError("sweep needs at least one value", 0, std::string(key));
    }
    const std::string full = sweep_key(key);
    std::vector<Scenario> runs;
    for (std::size_t i = 0; i < values.size(); ++i) {
        Scenario s = base;
        set_key(s, full, config_detail::format_real(values[i]));
        s.dab.f_sw = s.pwm.f_sw;
        s.pwm.phase_ratio = s.strategy.d_cmd;
        s.name = base.name + "_" + full.substr(full.find('.') + 1) + "_" + std::to_string(i);
        s.output_dir = dir.string();
        validate(s);
        runs.push_back(std::move(s));
    }
    std::vector<std::future<RunOutcome>> jobs;
    for (const auto& s : runs) {
        jobs.push_back(std::async(std::launch::async, [&s] { return execute(s); }));
    }
    SweepResult out;
    out.key = full;
    out.values = values;
    out.dir = dir;
    for (auto& j : jobs) {
        out.rows.push_back(j.get());
    }
    std::vector<double> peaks;
    std::vector<double> overs;
    bool all_ok = true;
    for (const auto& r : out.rows) {
        all_ok = all_ok && r.ok;
        if (r.ok) {
            peaks.push_back(r.metrics.peak_i_l);
            overs.push_back(r.metrics.overshoot_pct.value_or(0.0));
        }
    }
    out.peak_i_l_nonincreasing = all_ok && nonincreasing(peaks);
    out.overshoot_nonincreasing = all_ok && nonincreasing(overs, kOvershootResolutionPct);

    for (std::size_t i = 0; i < runs.size(); ++i) {
        runs[i].output.plots = false;
        write_outputs(runs[i], out.rows[i]);
    }
    {
        const auto p = dir / "sweep.csv";
        auto f = runner_detail::open_out(p);
        f << "value," << kMetricsHeader << '\n';
        for (std::size_t i = 0; i < out.rows.size(); ++i) {
            f << runner_detail::num(values[i]) << ',';
            write_metrics_row(f, out.rows[i]);
        }
        f << "# key=" << full << " peak_i_l_nonincreasing=" << (out.peak_i_l_nonincreasing ? "yes" : "no")
          << " overshoot_nonincreasing=" << (out.overshoot_nonincreasing ? "yes" : "no") << '\n';
        runner_detail::close_checked(f, p);
    }
    if (base.output.plots) {
        std::vector<double> xs;
        std::vector<double> over;
        for (std::size_t i = 0; i < out.rows.size(); ++i) {
            if (out.rows[i].ok) {
                xs.push_back(values[i]);
                over.push_back(out.rows[i].metrics.overshoot_pct.value_or(0.0));
            }
        }
        std::vector<std::pair<double, std::size_t>> order;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            order.emplace_back(xs[i], i);
        }
        std::sort(order.begin(), order.end());
        std::vector<double> sx, sp, so;
        for (auto [x, i] : order) {
            sx.push_back(x);
            sp.push_back(peaks[i]);
            so.push_back(over[i]);
        }
        std::vector<plot::Panel> panels;
        panels.push_back({"Peak inductor current", "peak i_l [A]", {{"", sx, sp, false}}});
        panels.push_back({"Voltage overshoot", "overshoot [%]", {{"", sx, so, false}}});
        plot::Layout layout;
        layout.time_unit = full;
        plot::write_svg_file(dir / "sweep.svg", panels, layout);

        std::vector<plot::NamedTrace> traces;
        double t0 = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (out.rows[i].ok) {
                traces.push_back({full + "=" + runner_detail::num(values[i]), &out.rows[i].result->trace});
                t0 = std::min(t0, plot_window(runs[i]).first);
            }
        }
        if (!traces.empty()) {
            plot::render_overlay(dir / "v_dc.svg", traces, plot::Signal::v_dc, t0, base.t_end);
            plot::render_overlay(dir / "i_l.svg", traces, plot::Signal::i_l, t0, base.t_end);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Steady-state power agreement

struct SteadyStateCase {
    double d = 0.0;
    double delta = 0.0;  // per-edge dead time
    double p_sim = 0.0;
    double p_ref = 0.0;
    double i0 = 0.0;     // periodic initial current found by shooting

    [[nodiscard]] double rel_error() const { return std::abs(p_sim - p_ref) / std::abs(p_ref); }
};

struct SteadyStateOptions {
    double c_scale = 1e6;  // link capacitance multiplier that pins v_dc
    int settle_periods = 2;
    int measure_periods = 20;
};

/// Cycle-averaged transferred power with the link pinned at v_bat by a very
/// large pre-charged capacitor. The lossless model keeps any DC offset of i_l
/// forever, so the initial current is chosen by shooting on half-wave symmetry,
/// i(t + T/2) = -i(t).
[[nodiscard]] inline SteadyStateCase steady_state_power(DabParams p, double d, double delta,
                                                        SteadyStateOptions opt = {}, double clk = 100e6) {
    p.c_out *= opt.c_scale;
    p.load = {};
    PwmConfig pwm;
    pwm.f_sw = p.f_sw;
    pwm.clk = clk;
    pwm.phase_ratio = d;
    const double T = pwm.period();
    const DeadTimeSchedule sched = strategy_hard(pwm, 0.0, 2.0 * delta);
    SolverConfig cfg = default_solver_config(p.f_sw);
    cfg.zc_tol = 1e-12;
    const double v0 = p.v_bat * p.n;

    const double t_a = opt.settle_periods * T;
    auto current_at = [&](double i0, double t_end) {
        const auto r = simulate(p, pwm, sched, cfg, t_end, {0.0, i0, v0});
        return r.final_state;
    };
    auto mismatch = [&](double i0) {
        const double ia = current_at(i0, t_a).i_l;
        const double ib = current_at(i0, t_a + 0.5 * T).i_l;
        return ia + ib;
    };
    // mismatch is affine in i0 except near diode transitions; secant with restarts
    double x0 = 0.0;
    double f0 = mismatch(x0);
    double x1 = -p.v_bat / (p.l_e * p.f_sw) * 0.25;
    double f1 = mismatch(x1);
    for (int it = 0; it < 40 && std::abs(f1) > 1e-9 && f1 != f0; ++it) {
        const double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = mismatch(x1);
    }
    const double i_start = x1;

    SteadyStateCase c;
    c.d = d;
    c.delta = delta;
    c.i0 = i_start;
    const ConverterState a = current_at(i_start, t_a);
    const ConverterState b = current_at(i_start, t_a + opt.measure_periods * T);
    const double de_c = cap_energy(p.c_out, b.v_dc) - cap_energy(p.c_out, a.v_dc);
    c.p_sim = de_c / (opt.measure_periods * T);
    c.p_ref = power_sps(v0, p.v_bat, d, p.n, p.l_e, p.f_sw);
    return c;
}

struct ValidationReport {
    std::vector<SteadyStateCase> cases;
    std::vector<double> limits;  // relative tolerance per case
    [[nodiscard]] bool passed() const {
        for (std::size_t i = 0; i < cases.size(); ++i) {
            if (!(cases[i].rel_error() < limits[i])) {
                return false;
            }
        }
        return true;
    }
};

/// D in {0.1, 0.2, 0.3, 0.4} at 300 ns per edge (5 %) and at one clock tick
/// per edge (1 %).
[[nodiscard]] inline ValidationReport run_validation(const DabParams& p = {}, double clk = 100e6) {
    ValidationReport rep;
    std::vector<std::future<SteadyStateCase>> jobs;
    std::vector<double> limits;
    for (double delta : {300e-9, 1.0 / clk}) {
        for (double d : {0.1, 0.2, 0.3, 0.4}) {
            jobs.push_back(std::async(std::launch::async, [=] { return steady_state_power(p, d, delta, {}, clk); }));
            limits.push_back(delta > 1.5 / clk ? 0.05 : 0.01);
        }
    }
    for (auto& j : jobs) {
        rep.cases.push_back(j.get());
    }
    rep.limits = std::move(limits);
    return rep;
}

inline void write_validation(std::ostream& os, const ValidationReport& rep) {
    using runner_detail::num;
    os << "D,delta_per_edge,p_sim,p_sps,rel_error,limit,status\n";
    for (std::size_t i = 0; i < rep.cases.size(); ++i) {
        const auto& c = rep.cases[i];
        os << num(c.d) << ',' << num(c.delta) << ',' << num(c.p_sim) << ',' << num(c.p_ref) << ','
           << num(c.rel_error()) << ',' << num(rep.limits[i]) << ','
           << (c.rel_error() < rep.limits[i] ? "pass" : "FAIL") << '\n';
    }
}

}  // namespace dabsim
