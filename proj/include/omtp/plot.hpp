#ifndef OMTP_PLOT_HPP
#define OMTP_PLOT_HPP

// Self-contained SVG line plots. Output depends only on the input numbers,
// so re-rendering the same artifacts yields byte-identical files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "omtp/artifacts.hpp"
#include "omtp/config.hpp"
#include "omtp/errors.hpp"
#include "omtp/oracle.hpp"

namespace omtp::plot {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool dashed = false;
};

struct Panel {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    std::vector<Series> series;
    bool log_y = false;
};

namespace detail {

inline constexpr double kWidth = 640.0;
inline constexpr double kPanelHeight = 300.0;
inline constexpr double kLeft = 80.0;
inline constexpr double kRight = 20.0;
inline constexpr double kTop = 36.0;
inline constexpr double kBottom = 50.0;

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick_label(double v) {
    char buf[32];
    if (v != 0.0 && (std::abs(v) < 1e-3 || std::abs(v) >= 1e4)) {
        std::snprintf(buf, sizeof buf, "%.1e", v);
    } else {
        std::snprintf(buf, sizeof buf, "%.4g", v);
    }
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

// Evenly spaced "nice" ticks covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
    const double span = hi - lo;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + 1e-9 * span; t += step) {
        ticks.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
    }
    return ticks;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
            const double d = std::max(1e-3, 0.05 * std::abs(hi));
            lo -= d;
            hi += d;
        }
    }
};

inline void render_panel(std::ostringstream& o, const Panel& p, double top) {
    const double w = kWidth - kLeft - kRight;
    const double h = kPanelHeight - kTop - kBottom;
    auto ty = [&](double v) { return p.log_y ? std::log10(v) : v; };

    Range xr;
    Range yr;
    for (const auto& s : p.series) {
        for (double v : s.x) xr.add(v);
        for (double v : s.y)
            if (!p.log_y || v > 0.0) yr.add(ty(v));
    }
    xr.pad();
    yr.pad();
    if (!p.log_y) {
        const double m = 0.05 * (yr.hi - yr.lo);
        yr.lo -= m;
        yr.hi += m;
    }
    auto sx = [&](double v) { return kLeft + (v - xr.lo) / (xr.hi - xr.lo) * w; };
    auto sy = [&](double v) { return top + kTop + h - (v - yr.lo) / (yr.hi - yr.lo) * h; };

    o << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"" << fmt(top + 22) << "\" text-anchor=\"middle\" "
      << "font-size=\"15\">" << escape(p.title) << "</text>\n";
    o << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(top + kTop) << "\" width=\"" << fmt(w) << "\" height=\""
      << fmt(h) << "\" fill=\"none\" stroke=\"#000\"/>\n";

    for (double t : nice_ticks(xr.lo, xr.hi)) {
        const double x = sx(t);
        o << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(top + kTop + h) << "\" x2=\"" << fmt(x) << "\" y2=\""
          << fmt(top + kTop + h + 5) << "\" stroke=\"#000\"/>\n";
        o << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(top + kTop + h + 18) << "\" text-anchor=\"middle\" "
          << "font-size=\"11\">" << tick_label(t) << "</text>\n";
    }
    for (double t : nice_ticks(yr.lo, yr.hi)) {
        const double y = sy(t);
        o << "<line x1=\"" << fmt(kLeft - 5) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(kLeft) << "\" y2=\""
          << fmt(y) << "\" stroke=\"#000\"/>\n";
        const std::string label = p.log_y ? "1e" + tick_label(t) : tick_label(t);
        o << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\" "
          << "font-size=\"11\">" << label << "</text>\n";
    }
    o << "<text x=\"" << fmt(kLeft + w / 2) << "\" y=\"" << fmt(top + kPanelHeight - 10)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(p.xlabel) << "</text>\n";
    o << "<text x=\"16\" y=\"" << fmt(top + kTop + h / 2) << "\" text-anchor=\"middle\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << fmt(top + kTop + h / 2) << ")\">"
      << escape(p.log_y ? p.ylabel + " (log10)" : p.ylabel) << "</text>\n";

    double legend_y = top + kTop + 14;
    for (const auto& s : p.series) {
        o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
        if (s.dashed) o << " stroke-dasharray=\"6 4\"";
        o << " points=\"";
        bool first = true;
        const std::size_t n = std::min(s.x.size(), s.y.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (p.log_y && s.y[i] <= 0.0)) continue;
            if (!first) o << ' ';
            o << fmt(sx(s.x[i])) << ',' << fmt(sy(ty(s.y[i])));
            first = false;
        }
        o << "\"/>\n";
        if (!s.label.empty()) {
            const double lx = kLeft + w - 150;
            o << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(legend_y - 4) << "\" x2=\"" << fmt(lx + 24)
              << "\" y2=\"" << fmt(legend_y - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
            if (s.dashed) o << " stroke-dasharray=\"6 4\"";
            o << "/>\n";
            o << "<text x=\"" << fmt(lx + 30) << "\" y=\"" << fmt(legend_y) << "\" font-size=\"11\">"
              << escape(s.label) << "</text>\n";
            legend_y += 16;
        }
    }
}

}  // namespace detail

// Panels stacked vertically in one document.
inline std::string render_svg(const std::vector<Panel>& panels) {
    if (panels.empty()) throw DimensionError("render_svg: no panels");
    std::ostringstream o;
    const double height = detail::kPanelHeight * static_cast<double>(panels.size());
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt(detail::kWidth) << "\" height=\""
      << detail::fmt(height) << "\" viewBox=\"0 0 " << detail::fmt(detail::kWidth) << ' ' << detail::fmt(height)
      << "\" font-family=\"sans-serif\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i) {
        detail::render_panel(o, panels[i], detail::kPanelHeight * static_cast<double>(i));
    }
    o << "</svg>\n";
    return o.str();
}

inline void write_svg(const std::filesystem::path& path, const std::vector<Panel>& panels) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << render_svg(panels);
    out.flush();
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Files produced by emit_plots, relative to the artifacts directory.
inline const std::vector<std::string>& plot_files() {
    static const std::vector<std::string> files{"path.svg", "running_cost.svg", "critic_loss.svg",
                                                "terminal_loss.svg"};
    return files;
}

// Path panels: one per state component against time. For the linear system
// the analytic solution is overlaid when `compare_analytic` is set.
inline std::vector<Panel> path_panels(const config::ExperimentConfig& cfg, const artifacts::PathTable& path,
                                      bool compare_analytic) {
    if (path.x.empty()) throw DimensionError("path_panels: empty path");
    const std::size_t dim = path.x.front().size();
    static const char* names_lactose[] = {"M (mRNA)", "B (beta-galactosidase)", "A (allolactose)"};
    std::vector<Panel> panels;
    for (std::size_t i = 0; i < dim; ++i) {
        Panel p;
        std::string comp = "x_" + std::to_string(i + 1);
        if (cfg.system.kind == config::SystemKind::Lactose && dim == 3) comp = names_lactose[i];
        if (cfg.system.kind == config::SystemKind::MaierStein && dim == 2) comp = i == 0 ? "x" : "y";
        p.title = dim == 1 ? "Transition path" : "Transition path: " + comp;
        p.xlabel = "t";
        p.ylabel = comp;
        Series learned{"learned (averaged)", path.t, {}, "#1f77b4", false};
        for (const auto& x : path.x) learned.y.push_back(x[i]);
        p.series.push_back(std::move(learned));
        if (compare_analytic && cfg.system.kind == config::SystemKind::Linear) {
            const auto exact = oracle::analytic_linear_path(cfg.system.x0, cfg.system.x1, cfg.system.horizon);
            Series ref{"analytic", {}, {}, "#d62728", true};
            const int fine = 200;
            for (int k = 0; k <= fine; ++k) {
                const double t = cfg.system.horizon * k / fine;
                ref.x.push_back(t);
                ref.y.push_back(exact(t));
            }
            p.series.push_back(std::move(ref));
        }
        panels.push_back(std::move(p));
    }
    return panels;
}

inline Panel episode_panel(const std::vector<artifacts::EpisodeRow>& rows, const std::string& title,
                           const std::string& ylabel, double artifacts::EpisodeRow::*field, bool log_y) {
    Series s{"", {}, {}, "#1f77b4", false};
    bool positive = true;
    for (const auto& r : rows) {
        s.x.push_back(r.episode);
        s.y.push_back(r.*field);
        positive = positive && r.*field > 0.0;
    }
    return {title, "episode", ylabel, {std::move(s)}, log_y && positive};
}

// Reads config.ini, path.csv and episodes.csv from `dir` and writes the four
// SVG plots next to them. Returns the written paths.
inline std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& dir, bool compare_analytic) {
    const auto cfg = config::load_config((dir / "config.ini").string());
    const auto path = artifacts::read_path(dir / "path.csv");
    const auto rows = artifacts::read_episodes(dir / "episodes.csv");
    const bool compare = compare_analytic || cfg.output.compare_analytic;

    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::vector<Panel>& panels) {
        write_svg(dir / name, panels);
        written.push_back(dir / name);
    };
    emit("path.svg", path_panels(cfg, path, compare));
    emit("running_cost.svg", {episode_panel(rows, "Accumulated running cost", "running cost",
                                            &artifacts::EpisodeRow::running_cost_sum, false)});
    emit("critic_loss.svg",
         {episode_panel(rows, "Critic loss", "TD loss", &artifacts::EpisodeRow::critic_loss, true)});
    emit("terminal_loss.svg", {episode_panel(rows, "Terminal loss", "terminal loss",
                                             &artifacts::EpisodeRow::terminal_loss, true)});
    return written;
}

}  // namespace omtp::plot

#endif
