// omtp: train TP-DDPG transition-path solvers from config files.
//
//   omtp run <config> [--compare-analytic]
//   omtp sweep-n <config> --n 20,40,80,160 [--window 20,100]
//   omtp plot <artifacts-dir> [--compare-analytic]
//   omtp verify <config>
//
// Global options: --seed <u64>, --out <dir>.
// Exit status: 0 success, 1 config error, 2 training divergence, 3 I/O error,
// 4 verification failed.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "omtp/config.hpp"
#include "omtp/errors.hpp"
#include "omtp/experiment.hpp"
#include "omtp/plot.hpp"
#include "omtp/verify.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kDivergence = 2, kIo = 3, kVerifyFailed = 4 };

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

omtp::config::ExperimentConfig load(const std::string& path, const Globals& g) {
    auto cfg = omtp::config::load_config(path);
    if (g.seed) cfg.hyper.seed = *g.seed;
    if (g.out) cfg.output.dir = *g.out;
    return cfg;
}

omtp::Progress progress_printer(int episodes, const std::string& prefix = "") {
    const int every = std::max(1, episodes / 10);
    return [every, episodes, prefix](const omtp::EpisodeLog& log) {
        if ((log.episode + 1) % every != 0 && log.episode + 1 != episodes) return;
        std::fprintf(stderr, "%sepisode %d/%d  running %.4f  terminal %.4g  critic %.3g\n", prefix.c_str(),
                     log.episode + 1, episodes, log.running_cost_sum, log.terminal_loss, log.critic_loss);
    };
}

int cmd_run(const std::string& path, bool compare, const Globals& g) {
    auto cfg = load(path, g);
    if (compare) cfg.output.compare_analytic = true;
    const auto run = omtp::experiment::run_experiment(cfg, progress_printer(cfg.hyper.episodes));
    omtp::plot::emit_plots(cfg.output.dir, cfg.output.compare_analytic);
    const auto& s = run.summary;
    std::printf("artifacts: %s\n", cfg.output.dir.c_str());
    std::printf("mean running cost over [%d, %d): %.6f\n", s.window_lo, s.window_hi, s.mean_running_cost);
    std::printf("mean terminal loss over [%d, %d): %.6g\n", s.window_lo, s.window_hi, s.mean_terminal_loss);
    if (std::isfinite(s.max_analytic_deviation)) {
        std::printf("max deviation from analytic path: %.6f (analytic action %.6f)\n", s.max_analytic_deviation,
                    s.analytic_action);
    }
    std::printf("diverged episodes: %d\n", s.diverged_episodes);
    if (s.failed) {
        std::fprintf(stderr, "error: training diverged in %d of %d episodes\n", s.diverged_episodes, s.episodes);
        return kDivergence;
    }
    return kOk;
}

int cmd_sweep(const std::string& path, const std::vector<int>& ns, const std::vector<int>& window,
              const Globals& g) {
    auto cfg = load(path, g);
    if (window.size() != 2) throw omtp::ConfigError("--window: expected 'lo,hi'");
    const omtp::EpisodeWindow w{window[0], window[1]};
    const std::filesystem::path dir = cfg.output.dir;
    const auto table = omtp::experiment::terminal_loss_sweep(
        cfg, ns, w, dir, [&](int n, const omtp::EpisodeLog& log) {
            progress_printer(cfg.hyper.episodes, "N=" + std::to_string(n) + " ")(log);
        });
    omtp::experiment::write_sweep(dir / "sweep.csv", table);
    std::printf("%6s %14s %14s %14s\n", "N", "mean", "std", "max");
    for (const auto& s : table) std::printf("%6d %14.6e %14.6e %14.6e\n", s.steps, s.mean, s.stddev, s.max);
    std::printf("adjacent inversions: %d\n", omtp::experiment::count_inversions(table));
    std::printf("table: %s\n", (dir / "sweep.csv").string().c_str());
    return kOk;
}

int cmd_plot(const std::string& dir, bool compare) {
    for (const auto& p : omtp::plot::emit_plots(dir, compare)) std::printf("%s\n", p.string().c_str());
    return kOk;
}

int cmd_verify(const std::string& path, const Globals& g) {
    namespace v = omtp::verify;
    auto cfg = load(path, g);
    std::vector<v::Check> checks;
    auto report = [&](v::Check c) {
        v::print(std::cout, c);
        checks.push_back(std::move(c));
    };
    report(v::gradient_check(100));
    for (auto& c : v::oracle_checks()) report(std::move(c));

    using omtp::config::SystemKind;
    switch (cfg.system.kind) {
        case SystemKind::Linear: {
            const auto run = omtp::experiment::train_experiment(cfg, progress_printer(cfg.hyper.episodes));
            report(v::analytic_path_check(cfg, run));
            report(v::action_check(cfg, run));
            report(v::reachability_check(cfg));
            break;
        }
        case SystemKind::MaierStein:
            report(v::maier_stein_check(cfg, 1));
            break;
        case SystemKind::Lactose: {
            const auto run = omtp::experiment::train_experiment(cfg, progress_printer(cfg.hyper.episodes));
            report(v::lactose_check(cfg, run));
            break;
        }
    }
    const auto failed = std::count_if(checks.begin(), checks.end(), [](const v::Check& c) { return !c.pass; });
    std::printf("%zu checks, %ld failed\n", checks.size(), static_cast<long>(failed));
    return failed == 0 ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Most-probable transition paths by terminal-prediction DDPG"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    std::string out;
    auto* seed_opt = app.add_option("--seed", seed, "Override the training seed");
    auto* out_opt = app.add_option("--out", out, "Override the output directory");

    std::string config_path;
    std::string artifacts_dir;
    bool compare = false;
    std::vector<int> ns{20, 40, 80, 160};
    std::vector<int> window{20, 100};

    auto* run = app.add_subcommand("run", "Train and write artifacts and plots");
    run->add_option("config", config_path, "Config file")->required();
    run->add_flag("--compare-analytic", compare, "Overlay the analytic path (linear system)");
    run->fallthrough();

    auto* sweep = app.add_subcommand("sweep-n", "Terminal-loss statistics across time discretisations");
    sweep->add_option("config", config_path, "Config file")->required();
    sweep->add_option("--n", ns, "Comma-separated N values")->delimiter(',');
    sweep->add_option("--window", window, "Episode window lo,hi (half-open) for the statistics")->delimiter(',');
    sweep->fallthrough();

    auto* plot = app.add_subcommand("plot", "Render SVG plots from an artifacts directory");
    plot->add_option("artifacts-dir", artifacts_dir, "Directory written by run")->required();
    plot->add_flag("--compare-analytic", compare, "Overlay the analytic path (linear system)");
    plot->fallthrough();

    auto* verify = app.add_subcommand("verify", "Train and run the oracle-backed checks");
    verify->add_option("config", config_path, "Config file")->required();
    verify->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }
    if (*seed_opt) g.seed = seed;
    if (*out_opt) g.out = out;

    try {
        if (*run) return cmd_run(config_path, compare, g);
        if (*sweep) return cmd_sweep(config_path, ns, window, g);
        if (*plot) return cmd_plot(artifacts_dir, compare);
        if (*verify) return cmd_verify(config_path, g);
    } catch (const omtp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const omtp::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const omtp::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kIo;
    } catch (const omtp::DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return kDivergence;
    } catch (const omtp::DomainError& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return kDivergence;
    } catch (const omtp::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    }
    return kOk;
}
