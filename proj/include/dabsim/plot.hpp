#pragma once

// Minimal deterministic SVG line plots for waveform panels.

#include "dabsim/deadtime.hpp"
#include "dabsim/pwm.hpp"
#include "dabsim/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dabsim::plot {

struct Series {
    std::string label;
    std::span<const double> t;
    std::span<const double> y;
    bool step = false;  // hold the value until the next sample
};

struct Panel {
    std::string title;
    std::string y_label;
    std::vector<Series> series;
};

struct Layout {
    int columns = 1;
    int panel_width = 560;
    int panel_height = 190;
    double t0 = 0.0;
    double t1 = 0.0;  // t1 <= t0 selects the data range
    std::string time_unit = "s";
    double time_scale = 1.0;
};

inline constexpr std::array<const char*, 6> kPalette = {"#c2185b", "#2e7d32", "#1565c0", "#ef6c00", "#6a1b9a",
                                                        "#00838f"};

namespace detail {

inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<':
                out += "&lt;";
                break;
            case '>':
                out += "&gt;";
                break;
            case '&':
                out += "&amp;";
                break;
            default:
                out += c;
        }
    }
    return out;
}

inline std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
    std::vector<double> ticks;
    if (!(hi > lo)) {
        ticks.push_back(lo);
        return ticks;
    }
    const double raw = (hi - lo) / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) {
        ticks.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    }
    return ticks;
}

/// Points of one series inside [t0, t1], reduced to a min/max envelope per
/// pixel column when denser than the panel width.
inline std::vector<std::pair<double, double>> reduce(const Series& s, double t0, double t1, int width) {
    std::vector<std::pair<double, double>> pts;
    const auto n = s.t.size();
    if (n == 0) {
        return pts;
    }
    auto first = static_cast<std::size_t>(std::lower_bound(s.t.begin(), s.t.end(), t0) - s.t.begin());
    if (first > 0) {
        --first;
    }
    auto last = static_cast<std::size_t>(std::upper_bound(s.t.begin(), s.t.end(), t1) - s.t.begin());
    if (last < n) {
        ++last;
    }
    const std::size_t count = last - first;
    if (count <= static_cast<std::size_t>(4 * width) || s.step) {
        for (std::size_t k = first; k < last; ++k) {
            if (s.step && k > first) {
                pts.emplace_back(s.t[k], s.y[k - 1]);
            }
            pts.emplace_back(s.t[k], s.y[k]);
        }
        return pts;
    }
    const double bin = (t1 - t0) / width;
    std::size_t k = first;
    for (int px = 0; px < width && k < last; ++px) {
        const double edge = t0 + (px + 1) * bin;
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        std::size_t klo = k;
        std::size_t khi = k;
        for (; k < last && (s.t[k] < edge || px == width - 1); ++k) {
            if (s.y[k] < lo) {
                lo = s.y[k];
                klo = k;
            }
            if (s.y[k] > hi) {
                hi = s.y[k];
                khi = k;
            }
        }
        if (std::isinf(lo)) {
            continue;
        }
        if (klo <= khi) {
            pts.emplace_back(s.t[klo], lo);
            pts.emplace_back(s.t[khi], hi);
        } else {
            pts.emplace_back(s.t[khi], hi);
            pts.emplace_back(s.t[klo], lo);
        }
    }
    return pts;
}

}  // namespace detail

inline void write_svg(std::ostream& os, std::span<const Panel> panels, const Layout& layout) {
    if (panels.empty()) {
        throw std::invalid_argument("write_svg: no panels");
    }
    double t0 = layout.t0;
    double t1 = layout.t1;
    if (!(t1 > t0)) {
        t0 = std::numeric_limits<double>::infinity();
        t1 = -t0;
        for (const auto& p : panels) {
            for (const auto& s : p.series) {
                if (!s.t.empty()) {
                    t0 = std::min(t0, s.t.front());
                    t1 = std::max(t1, s.t.back());
                }
            }
        }
        if (!(t1 > t0)) {
            t1 = t0 + 1.0;
        }
    }
    const int cols = std::max(1, layout.columns);
    const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(cols) - 1) / static_cast<std::size_t>(cols));
    const int pw = layout.panel_width;
    const int ph = layout.panel_height;
    const int ml = 70, mr = 16, mt = 26, mb = 36;
    const int cw = ml + pw + mr;
    const int chh = mt + ph + mb;

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * cw << "\" height=\"" << rows * chh
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (std::size_t idx = 0; idx < panels.size(); ++idx) {
        const Panel& panel = panels[idx];
        const int ox = static_cast<int>(idx % static_cast<std::size_t>(cols)) * cw + ml;
        const int oy = static_cast<int>(idx / static_cast<std::size_t>(cols)) * chh + mt;

        std::vector<std::vector<std::pair<double, double>>> reduced;
        double ylo = std::numeric_limits<double>::infinity();
        double yhi = -ylo;
        for (const auto& s : panel.series) {
            reduced.push_back(detail::reduce(s, t0, t1, pw));
            for (auto [t, y] : reduced.back()) {
                if (t >= t0 && t <= t1 && std::isfinite(y)) {
                    ylo = std::min(ylo, y);
                    yhi = std::max(yhi, y);
                }
            }
        }
        if (!std::isfinite(ylo)) {
            ylo = 0.0;
            yhi = 1.0;
        }
        if (yhi - ylo < 1e-12 * std::max(1.0, std::abs(yhi))) {
            ylo -= 0.5;
            yhi += 0.5;
        }
        const double pad = 0.05 * (yhi - ylo);
        ylo -= pad;
        yhi += pad;
        auto px = [&](double t) { return ox + (t - t0) / (t1 - t0) * pw; };
        auto py = [&](double y) { return oy + ph - (y - ylo) / (yhi - ylo) * ph; };

        os << "<g>\n<text x=\"" << ox << "\" y=\"" << oy - 8 << "\" font-weight=\"bold\">"
           << detail::escape(panel.title) << "</text>\n";
        os << "<rect x=\"" << ox << "\" y=\"" << oy << "\" width=\"" << pw << "\" height=\"" << ph
           << "\" fill=\"none\" stroke=\"#444\"/>\n";
        for (double v : detail::nice_ticks(ylo, yhi)) {
            const double y = py(v);
            os << "<line x1=\"" << ox << "\" x2=\"" << ox + pw << "\" y1=\"" << detail::fmt(y) << "\" y2=\""
               << detail::fmt(y) << "\" stroke=\"#e0e0e0\"/>\n";
            os << "<text x=\"" << ox - 4 << "\" y=\"" << detail::fmt(y + 4) << "\" text-anchor=\"end\">"
               << detail::fmt(v) << "</text>\n";
        }
        for (double v : detail::nice_ticks(t0 * layout.time_scale, t1 * layout.time_scale)) {
            const double x = px(v / layout.time_scale);
            os << "<line x1=\"" << detail::fmt(x) << "\" x2=\"" << detail::fmt(x) << "\" y1=\"" << oy << "\" y2=\""
               << oy + ph << "\" stroke=\"#f0f0f0\"/>\n";
            os << "<text x=\"" << detail::fmt(x) << "\" y=\"" << oy + ph + 14 << "\" text-anchor=\"middle\">"
               << detail::fmt(v) << "</text>\n";
        }
        os << "<text x=\"" << ox + pw / 2 << "\" y=\"" << oy + ph + 30 << "\" text-anchor=\"middle\">t ["
           << detail::escape(layout.time_unit) << "]</text>\n";
        os << "<text transform=\"translate(" << ox - 52 << ',' << oy + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
           << detail::escape(panel.y_label) << "</text>\n";

        for (std::size_t si = 0; si < reduced.size(); ++si) {
            const char* colour = kPalette[si % kPalette.size()];
            os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1\" points=\"";
            for (auto [t, y] : reduced[si]) {
                const double x = std::clamp(px(t), static_cast<double>(ox), static_cast<double>(ox + pw));
                os << detail::fmt(x) << ',' << detail::fmt(py(y)) << ' ';
            }
            os << "\"/>\n";
            if (panel.series.size() > 1 || !panel.series[si].label.empty()) {
                const int ly = oy + 12 + static_cast<int>(si) * 13;
                os << "<line x1=\"" << ox + pw - 110 << "\" x2=\"" << ox + pw - 94 << "\" y1=\"" << ly - 4
                   << "\" y2=\"" << ly - 4 << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
                os << "<text x=\"" << ox + pw - 90 << "\" y=\"" << ly << "\">"
                   << detail::escape(panel.series[si].label) << "</text>\n";
            }
        }
        os << "</g>\n";
    }
    os << "</svg>\n";
}

inline void write_svg_file(const std::filesystem::path& path, std::span<const Panel> panels, const Layout& layout) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("cannot write plot " + path.string());
    }
    write_svg(f, panels, layout);
    if (!f) {
        throw std::runtime_error("error writing plot " + path.string());
    }
}

struct NamedTrace {
    std::string name;
    const WaveformTrace* trace = nullptr;
};

enum class Signal { i_l, v_dc, i_cap, v_p, v_s, td };

struct SignalInfo {
    Signal signal;
    const char* key;
    const char* title;
    const char* unit;
    double scale;
};

inline constexpr std::array<SignalInfo, 6> kSignals = {{
    {Signal::i_l, "i_l", "Leakage inductor current", "A", 1.0},
    {Signal::v_dc, "v_dc", "DC-link voltage", "V", 1.0},
    {Signal::i_cap, "i_cap", "Output capacitor current", "A", 1.0},
    {Signal::v_p, "v_p", "Primary bridge voltage", "V", 1.0},
    {Signal::v_s, "v_s", "Secondary bridge voltage", "V", 1.0},
    {Signal::td, "td", "Dead time per period", "us", 1e6},
}};

[[nodiscard]] inline const std::vector<double>& column(const WaveformTrace& tr, Signal s) {
    switch (s) {
        case Signal::i_l:
            return tr.i_l;
        case Signal::v_dc:
            return tr.v_dc;
        case Signal::i_cap:
            return tr.i_cap;
        case Signal::v_p:
            return tr.v_p;
        case Signal::v_s:
            return tr.v_s;
        case Signal::td:
            return tr.td;
    }
    return tr.v_dc;
}

/// Owns scaled copies of columns that need unit conversion.
struct PanelSet {
    std::vector<Panel> panels;
    std::vector<std::vector<double>> storage;

    void reserve(std::size_t n) { storage.reserve(n); }
};

inline Series make_series(PanelSet& set, const std::string& label, const WaveformTrace& tr, const SignalInfo& info) {
    const auto& col = column(tr, info.signal);
    if (info.scale == 1.0) {
        return {label, tr.t, col, info.signal == Signal::td};
    }
    auto& scaled = set.storage.emplace_back(col.size());
    std::transform(col.begin(), col.end(), scaled.begin(), [&](double v) { return v * info.scale; });
    return {label, tr.t, scaled, info.signal == Signal::td};
}

/// Multi-panel startup view: one column per trace with i_l, v_dc, i_cap and
/// td stacked, or a single column for a single trace.
inline void render_startup(const std::filesystem::path& path, std::span<const NamedTrace> traces, double t0,
                           double t1) {
    if (traces.empty()) {
        throw std::invalid_argument("render_startup: no traces");
    }
    const std::array<Signal, 4> order = {Signal::i_l, Signal::v_dc, Signal::i_cap, Signal::td};
    PanelSet set;
    set.reserve(traces.size() * order.size());
    for (const auto sig : order) {
        for (const auto& nt : traces) {
            const auto& info = kSignals[static_cast<std::size_t>(sig)];
            Panel p{nt.name + ": " + info.title, std::string(info.key) + " [" + info.unit + "]", {}};
            p.series.push_back(make_series(set, "", *nt.trace, info));
            set.panels.push_back(std::move(p));
        }
    }
    Layout layout;
    layout.columns = static_cast<int>(traces.size());
    layout.t0 = t0;
    layout.t1 = t1;
    write_svg_file(path, set.panels, layout);
}

/// One signal of several traces overlaid in a single panel.
inline void render_overlay(const std::filesystem::path& path, std::span<const NamedTrace> traces, Signal sig,
                           double t0, double t1) {
    const auto& info = kSignals[static_cast<std::size_t>(sig)];
    PanelSet set;
    set.reserve(traces.size());
    Panel p{info.title, std::string(info.key) + " [" + info.unit + "]", {}};
    for (const auto& nt : traces) {
        p.series.push_back(make_series(set, nt.name, *nt.trace, info));
    }
    set.panels.push_back(std::move(p));
    Layout layout;
    layout.panel_width = 900;
    layout.panel_height = 300;
    layout.t0 = t0;
    layout.t1 = t1;
    write_svg_file(path, set.panels, layout);
}

/// Gate-level zoom of primary leg A: high gate, low gate and latched dead time
/// over `periods` switching periods starting at `t_start`.
inline void render_gate_zoom(const std::filesystem::path& path, const PwmConfig& pwm, const DeadTimeSchedule& sched,
                             double t_start, int periods) {
    const double t_stop = t_start + periods * pwm.period();
    const EdgeStream leg = leg_edge_stream(pwm, sched, 0.0, t_stop);
    std::vector<double> t{t_start};
    std::vector<double> hi{0.0};
    std::vector<double> lo{0.0};
    bool h = false;
    bool l = false;
    for (const auto& e : leg.edges) {
        const bool on = e.direction == Edge::rising;
        if (e.t <= t_start) {
            (e.gate == 1 ? h : l) = on;
            hi.back() = h;
            lo.back() = l;
            continue;
        }
        (e.gate == 1 ? h : l) = on;
        t.push_back(e.t);
        hi.push_back(h);
        lo.push_back(l);
    }
    t.push_back(t_stop);
    hi.push_back(h);
    lo.push_back(l);

    std::vector<double> tt;
    std::vector<double> td;
    for (int k = 0; k <= periods; ++k) {
        const double c = t_start + k * pwm.period();
        tt.push_back(c);
        td.push_back(dead_time_at(sched, c) * 1e6);
    }
    std::vector<Panel> panels;
    panels.push_back({"High-side gate (M1)", "gate", {{"M1", t, hi, true}}});
    panels.push_back({"Low-side gate (M2)", "gate", {{"M2", t, lo, true}}});
    panels.push_back({"Dead time per period", "td [us]", {{"", tt, td, true}}});
    Layout layout;
    layout.panel_width = 900;
    layout.panel_height = 140;
    layout.t0 = t_start;
    layout.t1 = t_stop;
    layout.time_unit = "us";
    layout.time_scale = 1e6;
    write_svg_file(path, panels, layout);
}

}  // namespace dabsim::plot
