#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "omtp/artifacts.hpp"
#include "omtp/config.hpp"
#include "omtp/experiment.hpp"
#include "omtp/plot.hpp"

using namespace omtp;
namespace fs = std::filesystem;

namespace {

const std::string kPresets = OMTP_PRESET_DIR;

const Warning kQuiet = [](const std::string&) {};

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("omtp_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

config::ExperimentConfig parse_text(const std::string& text) {
    std::istringstream in(text);
    return config::parse(in);
}

const char* kSmallLinear = R"(
[system]
kind = linear
x0 = 0
x1 = 2
horizon = 1
steps = 10
lambda = 6
[network]
hidden_units = 15
[training]
episodes = 6
warmup = 1
buffer_capacity = 10
exploration_std = 0.5
seed = 3
[output]
window = 2, 6
)";

std::string config_error(const std::string& text) {
    try {
        parse_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(Config, LinearPresetLoads) {
    const auto cfg = config::load_config(kPresets + "/linear_0to2.ini");
    EXPECT_EQ(cfg.system.kind, config::SystemKind::Linear);
    EXPECT_EQ(cfg.system.x0, 0.0);
    EXPECT_EQ(cfg.system.x1, 2.0);
    EXPECT_EQ(cfg.system.horizon, 1.0);
    EXPECT_EQ(cfg.system.steps, 20);
    EXPECT_EQ(cfg.hyper.episodes, 300);
    EXPECT_EQ(cfg.output.window.lo, 100);
    EXPECT_EQ(cfg.output.window.hi, 300);
    const auto spec = config::make_system(cfg.system);
    EXPECT_EQ(spec.state_dim, 1u);
    EXPECT_DOUBLE_EQ(spec.dt(), 0.05);
}

TEST(Config, MaierSteinPresetLoads) {
    const auto cfg = config::load_config(kPresets + "/maier_stein_b10.ini");
    EXPECT_EQ(cfg.system.kind, config::SystemKind::MaierStein);
    EXPECT_EQ(cfg.system.beta, 10.0);
    EXPECT_EQ(cfg.system.noise, 0.2);
    EXPECT_EQ(cfg.system.horizon, 10.0);
    EXPECT_EQ(cfg.system.steps, 200);
    EXPECT_EQ(cfg.hyper.hidden_units, 30u);
}

TEST(Config, EveryPresetBuildsItsSystem) {
    for (const auto& entry : fs::directory_iterator(kPresets)) {
        if (entry.path().extension() != ".ini") continue;
        const auto cfg = config::load_config(entry.path().string());
        EXPECT_NO_THROW(validate(config::make_system(cfg.system))) << entry.path();
    }
}

TEST(Config, NegativeHorizonNamesField) {
    std::string text = kSmallLinear;
    text.replace(text.find("horizon = 1"), 11, "horizon = -1");
    EXPECT_NE(config_error(text).find("horizon"), std::string::npos);
}

TEST(Config, UnknownKeyRejected) {
    std::string text = kSmallLinear;
    text.replace(text.find("[network]"), 9, "[network]\nhiden_units = 3");
    EXPECT_NE(config_error(text).find("hiden_units"), std::string::npos);
}

TEST(Config, MissingRequiredKeyRejected) {
    std::string text = kSmallLinear;
    text.replace(text.find("steps = 10"), 10, "");
    EXPECT_NE(config_error(text).find("steps"), std::string::npos);
}

TEST(Config, WindowOutsideEpisodesRejected) {
    std::string text = kSmallLinear;
    text.replace(text.find("window = 2, 6"), 13, "window = 2, 7");
    EXPECT_NE(config_error(text).find("window"), std::string::npos);
}

TEST(Config, DuplicateKeyRejected) {
    std::string text = kSmallLinear;
    text.replace(text.find("steps = 10"), 10, "steps = 10\nsteps = 11");
    EXPECT_NE(config_error(text).find("steps"), std::string::npos);
}

TEST(Config, MissingFileIsIoError) {
    EXPECT_THROW(config::load_config("/nonexistent/omtp.ini"), IoError);
}

TEST(Config, TextRoundTrip) {
    for (const auto& entry : fs::directory_iterator(kPresets)) {
        if (entry.path().extension() != ".ini") continue;
        const auto cfg = config::load_config(entry.path().string());
        const auto again = parse_text(config::to_text(cfg));
        EXPECT_EQ(config::to_text(again), config::to_text(cfg)) << entry.path();
    }
}

TEST(Config, LactoseConstantsRoundTripExactly) {
    const auto cfg = config::load_config(kPresets + "/lactose.ini");
    const auto again = parse_text(config::to_text(cfg));
    const LactoseParams& a = cfg.system.lactose;
    const LactoseParams& b = again.system.lactose;
    EXPECT_EQ(a.l_ext, b.l_ext);
    EXPECT_EQ(a.mu_max, b.mu_max);
    EXPECT_EQ(a.k_l, b.k_l);
    EXPECT_EQ(a.tau_b, b.tau_b);
    const auto sa = config::make_system(cfg.system), sb = config::make_system(again.system);
    const State x{1e-5, 5e-6, 2e-2};
    EXPECT_EQ(sa.drift(x), sb.drift(x));
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

TEST(Artifacts, EpisodesCsvHasOneRowPerEpisodeAndRoundTrips) {
    const auto cfg = parse_text(kSmallLinear);
    const auto run = experiment::train_experiment(cfg, {}, kQuiet);
    const auto dir = scratch_dir("episodes");
    experiment::write_artifacts(cfg, run, dir);
    const auto rows = artifacts::read_episodes(dir / "episodes.csv");
    ASSERT_EQ(rows.size(), 6u);
    EXPECT_EQ(rows, run.episodes);
    EXPECT_EQ(slurp(dir / "episodes.csv").substr(0, std::string(artifacts::kEpisodeHeader).size()),
              artifacts::kEpisodeHeader);
}

TEST(Artifacts, CostIdentityHoldsAfterReload) {
    const auto cfg = parse_text(kSmallLinear);
    const auto run = experiment::train_experiment(cfg, {}, kQuiet);
    const auto dir = scratch_dir("identity");
    experiment::write_artifacts(cfg, run, dir);
    const auto spec = config::make_system(config::load_config((dir / "config.ini").string()).system);
    EXPECT_EQ(artifacts::check_cost_identity(spec, artifacts::read_episodes(dir / "episodes.csv"),
                                             artifacts::read_final_states(dir / "final_states.csv")),
              -1);
    auto rows = run.episodes;
    rows[3].total_cost += 1e-9;
    EXPECT_EQ(artifacts::check_cost_identity(spec, rows, run.finals), 3);
}

TEST(Artifacts, RerunWithSameSeedIsByteIdentical) {
    const auto cfg = parse_text(kSmallLinear);
    const auto a = scratch_dir("rerun_a"), b = scratch_dir("rerun_b");
    experiment::write_artifacts(cfg, experiment::train_experiment(cfg, {}, kQuiet), a);
    experiment::write_artifacts(cfg, experiment::train_experiment(cfg, {}, kQuiet), b);
    for (const char* name : {"episodes.csv", "path.csv", "final_states.csv", "checkpoint.txt", "summary.json"})
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
}

TEST(Artifacts, PathCsvRoundTrips) {
    const auto dir = scratch_dir("path");
    const std::vector<State> states{{0.0, 1.0}, {0.1, 0.9}, {1.0 / 3.0, -2e-300}};
    artifacts::write_path(dir / "path.csv", states, 0.5);
    const auto table = artifacts::read_path(dir / "path.csv");
    EXPECT_EQ(table.x, states);
    EXPECT_EQ(table.t, (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(Artifacts, SummaryRoundTrips) {
    const auto cfg = parse_text(kSmallLinear);
    const auto run = experiment::train_experiment(cfg, {}, kQuiet);
    const auto dir = scratch_dir("summary");
    artifacts::write_summary(dir / "summary.json", run.summary);
    const auto back = artifacts::read_summary(dir / "summary.json");
    EXPECT_EQ(back.system, "linear");
    EXPECT_EQ(back.mean_running_cost, run.summary.mean_running_cost);
    EXPECT_EQ(back.max_analytic_deviation, run.summary.max_analytic_deviation);
    EXPECT_EQ(back.path_end, run.summary.path_end);
}

TEST(Artifacts, MalformedCsvIsIoError) {
    const auto dir = scratch_dir("malformed");
    std::ofstream(dir / "episodes.csv") << artifacts::kEpisodeHeader << "\n0,1,2,x,4\n";
    EXPECT_THROW(artifacts::read_episodes(dir / "episodes.csv"), IoError);
    EXPECT_THROW(artifacts::read_episodes(dir / "missing.csv"), IoError);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const std::size_t d = 1 + i % 3;
        const std::size_t k = i % 2 == 0 ? 15 : 30;
        artifacts::Networks nets{nn::init_actor(d, k, d, 5.0, rng()), nn::init_critic(d, d, k, rng())};
        for (double& b : nets.actor.hidden.biases) b = g(rng);
        for (double& b : nets.critic.output.biases) b = g(rng);
        std::stringstream buf;
        artifacts::write_checkpoint(buf, nets);
        const auto back = artifacts::read_checkpoint(buf);
        EXPECT_EQ(nn::flatten(back.actor), nn::flatten(nets.actor));
        EXPECT_EQ(nn::flatten(back.critic), nn::flatten(nets.critic));
        State s(d), a(d);
        for (auto& v : s) v = g(rng);
        for (auto& v : a) v = g(rng);
        EXPECT_EQ(back.actor.forward(s), nets.actor.forward(s));
        EXPECT_EQ(back.critic.forward(s, a), nets.critic.forward(s, a));
    }
}

TEST(Checkpoint, TruncatedFileIsReported) {
    artifacts::Networks nets{nn::init_actor(2, 15, 2, 5.0, 1), nn::init_critic(2, 2, 15, 2)};
    std::stringstream buf;
    artifacts::write_checkpoint(buf, nets);
    const std::string full = buf.str();
    for (std::size_t cut : {std::size_t{0}, std::size_t{20}, full.size() / 2, full.size() - 5}) {
        std::istringstream in(full.substr(0, cut));
        EXPECT_THROW(artifacts::read_checkpoint(in), CheckpointError) << cut;
    }
}

TEST(Checkpoint, DimensionMismatchNamesBoth) {
    const auto dir = scratch_dir("ckpt");
    artifacts::save_checkpoint({nn::init_actor(2, 30, 2, 5.0, 1), nn::init_critic(2, 2, 30, 2)},
                               dir / "checkpoint.txt");
    const artifacts::NetworkDims expected{1, 1, 15, 15};
    try {
        artifacts::load_checkpoint(dir / "checkpoint.txt", &expected);
        FAIL() << "expected CheckpointError";
    } catch (const CheckpointError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("state_dim=1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("state_dim=2"), std::string::npos) << msg;
    }
}

TEST(Checkpoint, ReloadedActorReproducesFinalPolicyRollout) {
    const auto cfg = parse_text(kSmallLinear);
    const auto run = experiment::train_experiment(cfg, {}, kQuiet);
    const auto dir = scratch_dir("reload");
    experiment::write_artifacts(cfg, run, dir);
    const auto nets = artifacts::load_checkpoint(dir / "checkpoint.txt");
    const auto spec = config::make_system(cfg.system);
    EXPECT_EQ(terminal_predict(spec, nets.actor, spec.x_start, 0).terminal,
              terminal_predict(spec, run.result.agent.actor, spec.x_start, 0).terminal);
}

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

TEST(Plot, SvgIsDeterministic) {
    const auto cfg = parse_text(kSmallLinear);
    const auto run = experiment::train_experiment(cfg, {}, kQuiet);
    const auto a = scratch_dir("svg_a"), b = scratch_dir("svg_b");
    experiment::write_artifacts(cfg, run, a);
    experiment::write_artifacts(cfg, run, b);
    plot::emit_plots(a, true);
    plot::emit_plots(b, true);
    for (const auto& name : plot::plot_files()) {
        ASSERT_TRUE(fs::exists(a / name)) << name;
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
        EXPECT_NE(slurp(a / name).find("<svg xmlns"), std::string::npos) << name;
    }
}

namespace {

int count(const std::string& text, const std::string& needle) {
    int n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST(Plot, LinearComparisonHasTwoPolylines) {
    const auto cfg = parse_text(kSmallLinear);
    artifacts::PathTable path;
    for (int k = 0; k <= 10; ++k) {
        path.t.push_back(0.1 * k);
        path.x.push_back({0.2 * k});
    }
    const auto svg = plot::render_svg(plot::path_panels(cfg, path, true));
    EXPECT_EQ(count(svg, "<polyline class=\"series\""), 2);
    EXPECT_EQ(count(plot::render_svg(plot::path_panels(cfg, path, false)), "<polyline class=\"series\""), 1);
}

TEST(Plot, LactosePathHasThreePanels) {
    const auto cfg = config::load_config(kPresets + "/lactose.ini");
    artifacts::PathTable path;
    for (int k = 0; k <= 4; ++k) {
        path.t.push_back(0.75 * k);
        path.x.push_back({1e-6 * k, 5e-7 * k, 1e-2 * k});
    }
    const auto panels = plot::path_panels(cfg, path, false);
    ASSERT_EQ(panels.size(), 3u);
    EXPECT_NE(panels[0].ylabel.find('M'), std::string::npos);
    EXPECT_NE(panels[2].ylabel.find('A'), std::string::npos);
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

TEST(Sweep, SingleNMatchesSingleRun) {
    const auto cfg = parse_text(kSmallLinear);
    const auto table = experiment::terminal_loss_sweep(cfg, {10}, {2, 6}, {}, {}, kQuiet);
    const auto run = experiment::train_experiment(cfg, {}, kQuiet);
    const auto stats = experiment::terminal_loss_stats(run.result.logs, {2, 6});
    ASSERT_EQ(table.size(), 1u);
    EXPECT_EQ(table[0].steps, 10);
    EXPECT_EQ(table[0].mean, stats.mean);
    EXPECT_EQ(table[0].stddev, stats.stddev);
    EXPECT_EQ(table[0].samples, 4);
}

TEST(Sweep, CountsInversions) {
    std::vector<experiment::SweepStats> t(4);
    for (int i = 0; i < 4; ++i) t[i].mean = i;
    EXPECT_EQ(experiment::count_inversions(t), 0);
    t[2].mean = 0.5;
    EXPECT_EQ(experiment::count_inversions(t), 1);
}

TEST(Sweep, RejectsBadWindow) {
    const auto cfg = parse_text(kSmallLinear);
    EXPECT_THROW(experiment::terminal_loss_sweep(cfg, {10}, {2, 9}, {}, {}, kQuiet), ConfigError);
    EXPECT_THROW(experiment::terminal_loss_sweep(cfg, {}, {2, 6}, {}, {}, kQuiet), ConfigError);
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(OMTP_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
    const auto dir = scratch_dir("cli");
    std::string bad = kSmallLinear;
    bad.replace(bad.find("horizon = 1"), 11, "horizon = -1");
    std::ofstream(dir / "bad.ini") << bad;
    std::ofstream(dir / "good.ini") << kSmallLinear;

    EXPECT_EQ(run_cli("run " + (dir / "bad.ini").string()), 1);
    EXPECT_EQ(run_cli("run " + (dir / "missing.ini").string()), 3);
    EXPECT_EQ(run_cli("frobnicate"), 1);
    EXPECT_EQ(run_cli("run " + (dir / "good.ini").string() + " --out " + (dir / "out").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "episodes.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "path.svg"));
    EXPECT_EQ(run_cli("plot " + (dir / "out").string()), 0);
    EXPECT_EQ(run_cli("plot " + (dir / "nowhere").string()), 3);
    EXPECT_EQ(run_cli("sweep-n " + (dir / "good.ini").string() + " --n 5,10 --window 2,6 --out " +
                      (dir / "sweep").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "sweep" / "sweep.csv"));
    EXPECT_TRUE(fs::exists(dir / "sweep" / "N5" / "episodes.csv"));
}

TEST(Cli, SeedOverrideChangesRun) {
    const auto dir = scratch_dir("cli_seed");
    std::ofstream(dir / "good.ini") << kSmallLinear;
    const std::string cfg = (dir / "good.ini").string();
    ASSERT_EQ(run_cli("run " + cfg + " --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run_cli("run " + cfg + " --seed 3 --out " + (dir / "b").string()), 0);
    ASSERT_EQ(run_cli("run " + cfg + " --seed 4 --out " + (dir / "c").string()), 0);
    EXPECT_EQ(slurp(dir / "a" / "episodes.csv"), slurp(dir / "b" / "episodes.csv"));
    EXPECT_NE(slurp(dir / "a" / "episodes.csv"), slurp(dir / "c" / "episodes.csv"));
}
