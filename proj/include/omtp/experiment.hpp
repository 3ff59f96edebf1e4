#ifndef OMTP_EXPERIMENT_HPP
#define OMTP_EXPERIMENT_HPP

// Drives training from a config and persists the run artifacts.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "omtp/artifacts.hpp"
#include "omtp/config.hpp"
#include "omtp/dynsys.hpp"
#include "omtp/oracle.hpp"
#include "omtp/tpddpg.hpp"

namespace omtp::experiment {

struct RunArtifacts {
    std::vector<artifacts::EpisodeRow> episodes;
    std::vector<artifacts::FinalState> finals;
    std::vector<State> averaged_path;
    artifacts::Networks nets;
    artifacts::Summary summary;
    TrainResult result;
};

// Mean of `field` over episodes in [lo, hi), skipping diverged episodes.
inline double window_mean(const std::vector<EpisodeLog>& logs, EpisodeWindow w, double EpisodeLog::*field) {
    double acc = 0.0;
    int n = 0;
    for (const auto& log : logs) {
        if (log.episode < w.lo || log.episode >= w.hi || log.diverged) continue;
        acc += log.*field;
        ++n;
    }
    return n > 0 ? acc / n : std::nan("");
}

// Largest |x(t_k) - x_exact(t_k)| over the grid; linear system only.
inline double analytic_deviation(const config::SystemConfig& sys, const std::vector<State>& path) {
    const auto exact = oracle::analytic_linear_path(sys.x0, sys.x1, sys.horizon);
    double worst = 0.0;
    for (std::size_t k = 0; k < path.size(); ++k) {
        const double t = sys.horizon * static_cast<double>(k) / sys.steps;
        worst = std::max(worst, std::abs(path[k][0] - exact(t)));
    }
    return worst;
}

inline artifacts::Summary summarize(const config::ExperimentConfig& cfg, const TrainResult& r) {
    artifacts::Summary s;
    s.system = config::to_string(cfg.system.kind);
    s.episodes = cfg.hyper.episodes;
    s.window_lo = cfg.output.window.lo;
    s.window_hi = cfg.output.window.hi;
    s.diverged_episodes = r.diverged_episodes;
    s.warmup_kept = r.warmup_kept;
    s.failed = r.failed;
    s.seed = cfg.hyper.seed;
    s.mean_running_cost = window_mean(r.logs, cfg.output.window, &EpisodeLog::running_cost_sum);
    s.mean_terminal_loss = window_mean(r.logs, cfg.output.window, &EpisodeLog::terminal_loss);
    s.final_terminal_loss = r.logs.empty() ? std::nan("") : r.logs.back().terminal_loss;
    if (!r.averaged_path.empty()) s.path_end = r.averaged_path.back();
    if (cfg.system.kind == config::SystemKind::Linear && !r.averaged_path.empty()) {
        s.max_analytic_deviation = analytic_deviation(cfg.system, r.averaged_path);
        s.analytic_action = oracle::action_of_analytic(cfg.system.x0, cfg.system.x1, cfg.system.horizon,
                                                       cfg.system.steps);
    }
    return s;
}

// Trains in memory; nothing is written.
inline RunArtifacts train_experiment(const config::ExperimentConfig& cfg, const Progress& progress = {},
                                     const Warning& warn = warn_stderr) {
    const SystemSpec spec = config::make_system(cfg.system);
    RunArtifacts run;
    run.result = train(spec, cfg.hyper, cfg.output.window, progress, warn);
    for (const auto& log : run.result.logs) {
        run.episodes.push_back(artifacts::to_row(log));
        run.finals.push_back({log.episode, log.path.states.back()});
    }
    run.averaged_path = run.result.averaged_path;
    run.nets = {run.result.agent.actor, run.result.agent.critic};
    run.summary = summarize(cfg, run.result);
    return run;
}

inline void write_artifacts(const config::ExperimentConfig& cfg, const RunArtifacts& run,
                            const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
    {
        std::ofstream out(dir / "config.ini");
        if (!out) throw IoError("cannot write '" + (dir / "config.ini").string() + "'");
        out << config::to_text(cfg);
        if (!out) throw IoError("write failed for '" + (dir / "config.ini").string() + "'");
    }
    const double dt = cfg.system.horizon / cfg.system.steps;
    artifacts::write_episodes(dir / "episodes.csv", run.episodes);
    artifacts::write_final_states(dir / "final_states.csv", run.finals,
                                  run.finals.empty() ? 0 : run.finals.front().x.size());
    if (!run.averaged_path.empty()) artifacts::write_path(dir / "path.csv", run.averaged_path, dt);
    artifacts::save_checkpoint(run.nets, dir / "checkpoint.txt");
    artifacts::write_summary(dir / "summary.json", run.summary);
}

// Trains and writes config.ini, episodes.csv, final_states.csv, path.csv,
// checkpoint.txt and summary.json into cfg.output.dir.
inline RunArtifacts run_experiment(const config::ExperimentConfig& cfg, const Progress& progress = {},
                                   const Warning& warn = warn_stderr) {
    RunArtifacts run = train_experiment(cfg, progress, warn);
    write_artifacts(cfg, run, cfg.output.dir);
    return run;
}

// ---------------------------------------------------------------------------
// Terminal-loss sweep over N
// ---------------------------------------------------------------------------

struct SweepStats {
    int steps = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double max = 0.0;
    int samples = 0;
};

// Per episode in the window: the mean prediction loss over the first
// `first_steps` timesteps. Then mean, population std and max of those.
inline SweepStats terminal_loss_stats(const std::vector<EpisodeLog>& logs, EpisodeWindow window,
                                      int first_steps = 11) {
    std::vector<double> values;
    for (const auto& log : logs) {
        if (log.episode < window.lo || log.episode >= window.hi || log.diverged) continue;
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(first_steps),
                                                    log.step_terminal_losses.size());
        if (n == 0) continue;
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += log.step_terminal_losses[k];
        values.push_back(acc / static_cast<double>(n));
    }
    SweepStats s;
    s.samples = static_cast<int>(values.size());
    if (values.empty()) {
        s.mean = s.stddev = s.max = std::nan("");
        return s;
    }
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    for (double v : values) s.stddev += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(values.size()));
    s.max = *std::max_element(values.begin(), values.end());
    return s;
}

// Trains once per N with the horizon and noise of `base` held fixed.
// Each run writes its artifacts to <dir>/N<value>/ when `dir` is non-empty.
inline std::vector<SweepStats> terminal_loss_sweep(const config::ExperimentConfig& base, const std::vector<int>& ns,
                                                   EpisodeWindow stats_window, const std::filesystem::path& dir = {},
                                                   const std::function<void(int, const EpisodeLog&)>& progress = {},
                                                   const Warning& warn = warn_stderr) {
    if (ns.empty()) throw ConfigError("sweep: no N values given");
    if (stats_window.lo < 0 || stats_window.lo >= stats_window.hi || stats_window.hi > base.hyper.episodes) {
        throw ConfigError("sweep: statistics window [" + std::to_string(stats_window.lo) + ", " +
                          std::to_string(stats_window.hi) + ") must lie within [0, episodes=" +
                          std::to_string(base.hyper.episodes) + ")");
    }
    std::vector<SweepStats> table;
    for (int n : ns) {
        if (n < 1) throw ConfigError("sweep: N must be >= 1, got " + std::to_string(n));
        config::ExperimentConfig cfg = base;
        cfg.system.steps = n;
        Progress tick;
        if (progress) tick = [&](const EpisodeLog& log) { progress(n, log); };
        RunArtifacts run = train_experiment(cfg, tick, warn);
        if (!dir.empty()) write_artifacts(cfg, run, dir / ("N" + std::to_string(n)));
        SweepStats s = terminal_loss_stats(run.result.logs, stats_window);
        s.steps = n;
        table.push_back(s);
    }
    return table;
}

inline void write_sweep(const std::filesystem::path& path, const std::vector<SweepStats>& table) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "N,mean,std,max,samples\n";
    for (const auto& s : table) {
        out << s.steps << ',' << artifacts::detail::num(s.mean) << ',' << artifacts::detail::num(s.stddev) << ','
            << artifacts::detail::num(s.max) << ',' << s.samples << '\n';
    }
    out.flush();
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Number of adjacent pairs where the mean decreases as N grows.
inline int count_inversions(const std::vector<SweepStats>& table) {
    int inversions = 0;
    for (std::size_t i = 1; i < table.size(); ++i)
        if (table[i].mean < table[i - 1].mean) ++inversions;
    return inversions;
}

}  // namespace omtp::experiment

#endif
