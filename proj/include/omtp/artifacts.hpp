#ifndef OMTP_ARTIFACTS_HPP
#define OMTP_ARTIFACTS_HPP

// On-disk run artifacts: episode table, averaged path, final states,
// network checkpoint and summary. All numbers are written with 17
// significant digits so every file reloads to identical doubles.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omtp/dynsys.hpp"
#include "omtp/errors.hpp"
#include "omtp/nn.hpp"
#include "omtp/tpddpg.hpp"

namespace omtp::artifacts {

inline constexpr const char* kEpisodeHeader = "episode,running_cost_sum,critic_loss,terminal_loss,total_cost";

struct EpisodeRow {
    int episode = 0;
    double running_cost_sum = 0.0;
    double critic_loss = 0.0;
    double terminal_loss = 0.0;
    double total_cost = 0.0;

    friend bool operator==(const EpisodeRow&, const EpisodeRow&) = default;
};

struct FinalState {
    int episode = 0;
    State x;
};

namespace detail {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_num(const std::string& text, const std::string& where) {
    if (text == "nan" || text == "-nan") return std::nan("");
    if (text == "inf") return HUGE_VAL;
    if (text == "-inf") return -HUGE_VAL;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw IoError(where + ": malformed number '" + text + "'");
    }
    return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    return in;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string path_header(std::size_t dim) {
    std::string h = "t";
    for (std::size_t i = 1; i <= dim; ++i) h += ",x_" + std::to_string(i);
    return h;
}

}  // namespace detail

inline EpisodeRow to_row(const EpisodeLog& log) {
    return {log.episode, log.running_cost_sum, log.critic_loss, log.terminal_loss, log.total_cost};
}

// ---------------------------------------------------------------------------
// Episode table
// ---------------------------------------------------------------------------

inline void write_episodes(const std::filesystem::path& path, const std::vector<EpisodeRow>& rows) {
    auto out = detail::open_out(path);
    out << kEpisodeHeader << '\n';
    for (const auto& r : rows) {
        out << r.episode << ',' << detail::num(r.running_cost_sum) << ',' << detail::num(r.critic_loss) << ','
            << detail::num(r.terminal_loss) << ',' << detail::num(r.total_cost) << '\n';
    }
    detail::finish(out, path);
}

inline std::vector<EpisodeRow> read_episodes(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != kEpisodeHeader) {
        throw IoError(path.string() + ": expected header '" + kEpisodeHeader + "'");
    }
    std::vector<EpisodeRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        const auto f = detail::split(line, ',');
        if (f.size() != 5) throw IoError(where + ": expected 5 fields, found " + std::to_string(f.size()));
        rows.push_back({static_cast<int>(detail::parse_num(f[0], where)), detail::parse_num(f[1], where),
                        detail::parse_num(f[2], where), detail::parse_num(f[3], where),
                        detail::parse_num(f[4], where)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

inline void write_path(const std::filesystem::path& path, const std::vector<State>& states, double dt) {
    if (states.empty()) throw DimensionError("write_path: empty path");
    auto out = detail::open_out(path);
    out << detail::path_header(states.front().size()) << '\n';
    for (std::size_t k = 0; k < states.size(); ++k) {
        out << detail::num(static_cast<double>(k) * dt);
        for (double x : states[k]) out << ',' << detail::num(x);
        out << '\n';
    }
    detail::finish(out, path);
}

struct PathTable {
    std::vector<double> t;
    std::vector<State> x;
};

inline PathTable read_path(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
    const auto header = detail::split(line, ',');
    if (header.size() < 2 || line != detail::path_header(header.size() - 1)) {
        throw IoError(path.string() + ": expected header 't,x_1,...,x_d'");
    }
    const std::size_t dim = header.size() - 1;
    PathTable table;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        const auto f = detail::split(line, ',');
        if (f.size() != dim + 1) {
            throw IoError(where + ": expected " + std::to_string(dim + 1) + " fields, found " +
                          std::to_string(f.size()));
        }
        table.t.push_back(detail::parse_num(f[0], where));
        State x;
        for (std::size_t i = 1; i <= dim; ++i) x.push_back(detail::parse_num(f[i], where));
        table.x.push_back(std::move(x));
    }
    return table;
}

inline void write_final_states(const std::filesystem::path& path, const std::vector<FinalState>& rows,
                               std::size_t dim) {
    auto out = detail::open_out(path);
    out << "episode";
    for (std::size_t i = 1; i <= dim; ++i) out << ",x_" << i;
    out << '\n';
    for (const auto& r : rows) {
        out << r.episode;
        for (double x : r.x) out << ',' << detail::num(x);
        out << '\n';
    }
    detail::finish(out, path);
}

inline std::vector<FinalState> read_final_states(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("episode", 0) != 0) throw IoError(path.string() + ": bad header");
    const std::size_t dim = detail::split(line, ',').size() - 1;
    std::vector<FinalState> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        const auto f = detail::split(line, ',');
        if (f.size() != dim + 1) throw IoError(where + ": expected " + std::to_string(dim + 1) + " fields");
        FinalState r{static_cast<int>(detail::parse_num(f[0], where)), {}};
        for (std::size_t i = 1; i <= dim; ++i) r.x.push_back(detail::parse_num(f[i], where));
        rows.push_back(std::move(r));
    }
    return rows;
}

// Checks total_cost = running_cost_sum + g(x_N) for every episode, where
// x_N comes from the final-state table. Diverged episodes carry the fixed
// penalty in place of g. Returns the first offending episode, or -1.
inline int check_cost_identity(const SystemSpec& spec, const std::vector<EpisodeRow>& rows,
                               const std::vector<FinalState>& finals) {
    if (rows.size() != finals.size()) return rows.empty() ? 0 : rows.front().episode;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& x = finals[i].x;
        const double g = omtp::detail::all_finite(x) ? terminal_cost(spec, x) : kDivergencePenalty;
        if (finals[i].episode != rows[i].episode || rows[i].total_cost != rows[i].running_cost_sum + g) {
            return rows[i].episode;
        }
    }
    return -1;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
//
//   omtp-checkpoint 1
//   actor <state_dim> <hidden> <action_dim>
//   critic <state_dim> <action_dim> <hidden>
//   <one value per line: actor hidden W, b, output W, b, scale,
//    then critic hidden W, b, output W, b, state_dim>
//   end

struct Networks {
    nn::ActorNet actor;
    nn::CriticNet critic;
};

struct NetworkDims {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::size_t actor_hidden = 0;
    std::size_t critic_hidden = 0;

    friend bool operator==(const NetworkDims&, const NetworkDims&) = default;
};

inline NetworkDims dims_of(const Networks& nets) {
    return {nets.actor.state_dim(), nets.actor.action_dim(), nets.actor.hidden_units(), nets.critic.hidden_units()};
}

inline std::string describe(const NetworkDims& d) {
    return "state_dim=" + std::to_string(d.state_dim) + " action_dim=" + std::to_string(d.action_dim) +
           " actor_hidden=" + std::to_string(d.actor_hidden) + " critic_hidden=" + std::to_string(d.critic_hidden);
}

inline void write_checkpoint(std::ostream& out, const Networks& nets) {
    const auto d = dims_of(nets);
    if (nets.critic.state_dim() != d.state_dim || nets.critic.action_dim() != d.action_dim) {
        throw DimensionError("save_checkpoint: actor and critic disagree on state/action dimensions");
    }
    out << "omtp-checkpoint 1\n";
    out << "actor " << d.state_dim << ' ' << d.actor_hidden << ' ' << d.action_dim << '\n';
    out << "critic " << d.state_dim << ' ' << d.action_dim << ' ' << d.critic_hidden << '\n';
    for (auto block : nets.actor.parameters())
        for (double v : block) out << detail::num(v) << '\n';
    out << detail::num(nets.actor.action_scale) << '\n';
    for (auto block : nets.critic.parameters())
        for (double v : block) out << detail::num(v) << '\n';
    out << d.state_dim << '\n';
    out << "end\n";
}

inline void save_checkpoint(const Networks& nets, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    write_checkpoint(out, nets);
    detail::finish(out, path);
}

inline Networks read_checkpoint(std::istream& in, const std::string& origin = "<checkpoint>") {
    std::string line;
    auto next = [&](const char* what) -> std::string {
        if (!std::getline(in, line)) throw CheckpointError(origin + ": truncated while reading " + what);
        return line;
    };
    if (next("header") != "omtp-checkpoint 1") throw CheckpointError(origin + ": not an omtp checkpoint");

    auto read_dims = [&](const char* tag) {
        std::istringstream ss(next(tag));
        std::string name;
        std::size_t a = 0, b = 0, c = 0;
        if (!(ss >> name >> a >> b >> c) || name != tag) {
            throw CheckpointError(origin + ": malformed '" + tag + "' dimension line");
        }
        return std::array<std::size_t, 3>{a, b, c};
    };
    const auto ad = read_dims("actor");
    const auto cd = read_dims("critic");
    if (ad[0] == 0 || ad[1] == 0 || ad[2] == 0 || cd[2] == 0) throw CheckpointError(origin + ": zero dimension");
    if (cd[0] != ad[0] || cd[1] != ad[2]) {
        throw CheckpointError(origin + ": critic dims (" + std::to_string(cd[0]) + ", " + std::to_string(cd[1]) +
                              ") do not match actor dims (" + std::to_string(ad[0]) + ", " +
                              std::to_string(ad[2]) + ")");
    }

    Networks nets{{nn::DenseLayer(ad[0], ad[1]), nn::DenseLayer(ad[1], ad[2]), 1.0},
                  {nn::DenseLayer(cd[0] + cd[1], cd[2]), nn::DenseLayer(cd[2], 1), cd[0]}};
    std::size_t read = 0;
    auto value = [&]() {
        ++read;
        const std::string text = next("parameters");
        return detail::parse_num(text, origin + ": value " + std::to_string(read));
    };
    try {
        for (auto block : nets.actor.parameters())
            for (double& v : block) v = value();
        nets.actor.action_scale = value();
        for (auto block : nets.critic.parameters())
            for (double& v : block) v = value();
        if (static_cast<std::size_t>(value()) != cd[0]) throw CheckpointError(origin + ": critic state size mismatch");
    } catch (const IoError& e) {
        throw CheckpointError(e.what());
    }
    if (next("trailer") != "end") throw CheckpointError(origin + ": expected 'end' after " + std::to_string(read) + " values");
    return nets;
}

// Loads and, when `expected` is given, checks the architecture.
inline Networks load_checkpoint(const std::filesystem::path& path, const NetworkDims* expected = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
    Networks nets = read_checkpoint(in, path.string());
    if (expected && dims_of(nets) != *expected) {
        throw CheckpointError(path.string() + ": dimension mismatch, expected " + describe(*expected) + ", found " +
                              describe(dims_of(nets)));
    }
    return nets;
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

struct Summary {
    std::string system;
    int episodes = 0;
    int window_lo = 0;
    int window_hi = 0;
    int diverged_episodes = 0;
    int warmup_kept = 0;
    bool failed = false;
    std::uint64_t seed = 0;
    double mean_running_cost = 0.0;     // over the window
    double mean_terminal_loss = 0.0;    // over the window
    double final_terminal_loss = 0.0;   // last episode
    std::vector<double> path_end;
    double max_analytic_deviation = std::nan("");  // linear systems only
    double analytic_action = std::nan("");

    friend bool operator==(const Summary&, const Summary&) = default;
};

inline nlohmann::ordered_json to_json(const Summary& s) {
    nlohmann::ordered_json j;
    j["system"] = s.system;
    j["episodes"] = s.episodes;
    j["window"] = {s.window_lo, s.window_hi};
    j["diverged_episodes"] = s.diverged_episodes;
    j["warmup_kept"] = s.warmup_kept;
    j["failed"] = s.failed;
    j["seed"] = s.seed;
    j["mean_running_cost"] = s.mean_running_cost;
    j["mean_terminal_loss"] = s.mean_terminal_loss;
    j["final_terminal_loss"] = s.final_terminal_loss;
    j["path_end"] = s.path_end;
    if (std::isfinite(s.max_analytic_deviation)) j["max_analytic_deviation"] = s.max_analytic_deviation;
    if (std::isfinite(s.analytic_action)) j["analytic_action"] = s.analytic_action;
    return j;
}

inline void write_summary(const std::filesystem::path& path, const Summary& s) {
    auto out = detail::open_out(path);
    out << to_json(s).dump(2) << '\n';
    detail::finish(out, path);
}

inline Summary read_summary(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    Summary s;
    try {
        const auto j = nlohmann::json::parse(in);
        s.system = j.at("system").get<std::string>();
        s.episodes = j.at("episodes").get<int>();
        s.window_lo = j.at("window").at(0).get<int>();
        s.window_hi = j.at("window").at(1).get<int>();
        s.diverged_episodes = j.at("diverged_episodes").get<int>();
        s.warmup_kept = j.at("warmup_kept").get<int>();
        s.failed = j.at("failed").get<bool>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.mean_running_cost = j.at("mean_running_cost").get<double>();
        s.mean_terminal_loss = j.at("mean_terminal_loss").get<double>();
        s.final_terminal_loss = j.at("final_terminal_loss").get<double>();
        s.path_end = j.at("path_end").get<std::vector<double>>();
        if (j.contains("max_analytic_deviation")) s.max_analytic_deviation = j["max_analytic_deviation"].get<double>();
        if (j.contains("analytic_action")) s.analytic_action = j["analytic_action"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return s;
}

}  // namespace omtp::artifacts

#endif
