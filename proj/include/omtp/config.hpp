#ifndef OMTP_CONFIG_HPP
#define OMTP_CONFIG_HPP

// Experiment configuration: a flat INI-style file.
//
//   # comment
//   [system]
//   kind = linear
//   x0 = 0
//   ...
//
// Every key is validated against the set known for its section (and, in
// [system], for the selected kind). Unknown keys are errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "omtp/dynsys.hpp"
#include "omtp/errors.hpp"
#include "omtp/tpddpg.hpp"

namespace omtp::config {

enum class SystemKind { Linear, MaierStein, Lactose };

inline std::string to_string(SystemKind k) {
    switch (k) {
        case SystemKind::Linear: return "linear";
        case SystemKind::MaierStein: return "maier-stein";
        case SystemKind::Lactose: return "lactose";
    }
    return "?";
}

struct SystemConfig {
    SystemKind kind = SystemKind::Linear;
    double horizon = 1.0;
    int steps = 20;
    double lambda = 10.0;
    double noise = 1.0;  // linear: fixed at 1
    // linear
    double x0 = 0.0;
    double x1 = 2.0;
    // maier-stein
    double beta = 1.0;
    // lactose
    LactoseParams lactose;
    // Optional endpoint overrides (maier-stein, lactose).
    std::optional<State> x_start;
    std::optional<State> x_target;
};

struct OutputConfig {
    EpisodeWindow window{0, 1};
    std::string dir = "runs/out";
    bool compare_analytic = false;
};

struct ExperimentConfig {
    SystemConfig system;
    Hyperparams hyper;
    OutputConfig output;
};

// Parsed raw file: section -> key -> (value, line).
struct RawEntry {
    std::string value;
    int line = 0;
};
using RawConfig = std::map<std::string, std::map<std::string, RawEntry>>;

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& field, const std::string& text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) throw ConfigError(field + ": expected a number, got '" + text + "'");
    return v;
}

inline std::int64_t parse_int(const std::string& field, const std::string& text) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError(field + ": expected an integer, got '" + text + "'");
    }
    return v;
}

inline bool parse_bool(const std::string& field, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError(field + ": expected true/false, got '" + text + "'");
}

inline std::vector<double> parse_list(const std::string& field, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(field, trim(item)));
    return out;
}

inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string format_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += format_double(v[i]);
    }
    return out;
}

}  // namespace detail

inline RawConfig parse_raw(std::istream& in, const std::string& origin = "<config>") {
    RawConfig raw;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section");
            section = detail::trim(line.substr(1, line.size() - 2));
            raw[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside a section");
        const std::string key = detail::trim(line.substr(0, eq));
        if (raw[section].count(key)) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + section + "." + key);
        }
        raw[section][key] = {detail::trim(line.substr(eq + 1)), lineno};
    }
    return raw;
}

namespace detail {

class Reader {
public:
    Reader(const RawConfig& raw, std::string origin) : raw_(raw), origin_(std::move(origin)) {}

    [[nodiscard]] bool has(const std::string& section, const std::string& key) const {
        auto s = raw_.find(section);
        return s != raw_.end() && s->second.count(key);
    }

    [[nodiscard]] const std::string& text(const std::string& section, const std::string& key) {
        used_.insert(section + "." + key);
        auto s = raw_.find(section);
        if (s == raw_.end() || !s->second.count(key)) {
            throw ConfigError(origin_ + ": missing required key '" + key + "' in [" + section + "]");
        }
        return s->second.at(key).value;
    }

    double real(const std::string& s, const std::string& k) { return parse_double(k, text(s, k)); }
    double real(const std::string& s, const std::string& k, double fallback) {
        return has(s, k) ? real(s, k) : fallback;
    }
    std::int64_t integer(const std::string& s, const std::string& k) { return parse_int(k, text(s, k)); }
    std::int64_t integer(const std::string& s, const std::string& k, std::int64_t fallback) {
        return has(s, k) ? integer(s, k) : fallback;
    }
    bool boolean(const std::string& s, const std::string& k, bool fallback) {
        return has(s, k) ? parse_bool(k, text(s, k)) : fallback;
    }
    std::vector<double> list(const std::string& s, const std::string& k) { return parse_list(k, text(s, k)); }

    void reject_unknown() const {
        for (const auto& [section, keys] : raw_) {
            for (const auto& [key, entry] : keys) {
                if (!used_.count(section + "." + key)) {
                    throw ConfigError(origin_ + ":" + std::to_string(entry.line) + ": unknown key '" + key +
                                      "' in [" + section + "]");
                }
            }
        }
    }

private:
    const RawConfig& raw_;
    std::string origin_;
    std::set<std::string> used_;
};

inline void positive(const std::string& field, double v) {
    if (!(v > 0.0)) throw ConfigError(field + ": must be positive, got " + format_double(v));
}

}  // namespace detail

inline ExperimentConfig from_raw(const RawConfig& raw, const std::string& origin = "<config>") {
    detail::Reader r(raw, origin);
    ExperimentConfig cfg;
    auto& sys = cfg.system;

    const std::string kind = r.text("system", "kind");
    if (kind == "linear") sys.kind = SystemKind::Linear;
    else if (kind == "maier-stein") sys.kind = SystemKind::MaierStein;
    else if (kind == "lactose") sys.kind = SystemKind::Lactose;
    else throw ConfigError("kind: unknown system '" + kind + "' (linear | maier-stein | lactose)");

    sys.horizon = r.real("system", "horizon");
    detail::positive("horizon", sys.horizon);
    sys.steps = static_cast<int>(r.integer("system", "steps"));
    if (sys.steps < 1) throw ConfigError("steps: must be >= 1");
    sys.lambda = r.real("system", "lambda");
    detail::positive("lambda", sys.lambda);

    switch (sys.kind) {
        case SystemKind::Linear:
            sys.x0 = r.real("system", "x0");
            sys.x1 = r.real("system", "x1");
            sys.noise = 1.0;
            break;
        case SystemKind::MaierStein:
            sys.beta = r.real("system", "beta");
            if (sys.beta < 0.0) throw ConfigError("beta: must be >= 0");
            sys.noise = r.real("system", "noise");
            detail::positive("noise", sys.noise);
            break;
        case SystemKind::Lactose: {
            sys.noise = r.real("system", "noise");
            detail::positive("noise", sys.noise);
            auto& p = sys.lactose;
            p.l_ext = r.real("system", "L");
            detail::positive("L", p.l_ext);
            struct Named {
                const char* key;
                double* field;
            };
            const Named table[] = {{"mu_max", &p.mu_max}, {"mu", &p.mu},         {"alpha_M", &p.alpha_m},
                                   {"alpha_B", &p.alpha_b}, {"alpha_A", &p.alpha_a}, {"gamma_M", &p.gamma_m},
                                   {"gamma_B", &p.gamma_b}, {"gamma_A", &p.gamma_a}, {"n", &p.n},
                                   {"K", &p.k},             {"K1", &p.k1},           {"K_L", &p.k_l},
                                   {"K_A", &p.k_a},         {"beta_A", &p.beta_a},   {"tau_M", &p.tau_m},
                                   {"tau_B", &p.tau_b}};
            for (const auto& [key, field] : table) *field = r.real("system", key, *field);
            break;
        }
    }
    if (sys.kind != SystemKind::Linear) {
        if (r.has("system", "x_start")) sys.x_start = r.list("system", "x_start");
        if (r.has("system", "x_target")) sys.x_target = r.list("system", "x_target");
    }

    auto& h = cfg.hyper;
    h.episodes = static_cast<int>(r.integer("training", "episodes"));
    if (h.episodes < 1) throw ConfigError("episodes: must be >= 1");
    h.batch_size = static_cast<std::size_t>(r.integer("training", "batch_size", 64));
    h.warmup_trajectories = static_cast<int>(r.integer("training", "warmup", 64));
    h.actor_lr = r.real("training", "actor_lr", 1e-3);
    h.critic_lr = r.real("training", "critic_lr", 1e-3);
    h.buffer_capacity = static_cast<std::size_t>(r.integer("training", "buffer_capacity", 10000));
    h.seed = static_cast<std::uint64_t>(r.integer("training", "seed", 1));
    h.hidden_units = static_cast<std::size_t>(r.integer("network", "hidden_units"));
    h.action_scale = r.real("network", "action_scale", 5.0);
    h.exploration_std = r.real("training", "exploration_std", 0.1 * h.action_scale);
    try {
        validate(h);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }

    auto& out = cfg.output;
    const auto window = r.list("output", "window");
    if (window.size() != 2) throw ConfigError("window: expected 'lo, hi'");
    out.window = {static_cast<int>(window[0]), static_cast<int>(window[1])};
    if (out.window.lo < 0 || out.window.lo >= out.window.hi || out.window.hi > h.episodes) {
        throw ConfigError("window: [" + std::to_string(out.window.lo) + ", " + std::to_string(out.window.hi) +
                          ") must lie within [0, episodes=" + std::to_string(h.episodes) + ")");
    }
    out.dir = r.has("output", "dir") ? r.text("output", "dir") : out.dir;
    out.compare_analytic = r.boolean("output", "compare_analytic", false);

    r.reject_unknown();
    return cfg;
}

inline ExperimentConfig parse(std::istream& in, const std::string& origin = "<config>") {
    return from_raw(parse_raw(in, origin), origin);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    return parse(in, path);
}

// Writes a config that parses back to the same values.
inline std::string to_text(const ExperimentConfig& cfg) {
    using detail::format_double;
    std::ostringstream o;
    const auto& s = cfg.system;
    o << "[system]\n";
    o << "kind = " << to_string(s.kind) << '\n';
    o << "horizon = " << format_double(s.horizon) << '\n';
    o << "steps = " << s.steps << '\n';
    o << "lambda = " << format_double(s.lambda) << '\n';
    switch (s.kind) {
        case SystemKind::Linear:
            o << "x0 = " << format_double(s.x0) << '\n';
            o << "x1 = " << format_double(s.x1) << '\n';
            break;
        case SystemKind::MaierStein:
            o << "beta = " << format_double(s.beta) << '\n';
            o << "noise = " << format_double(s.noise) << '\n';
            break;
        case SystemKind::Lactose: {
            const auto& p = s.lactose;
            o << "noise = " << format_double(s.noise) << '\n';
            o << "L = " << format_double(p.l_ext) << '\n';
            o << "mu_max = " << format_double(p.mu_max) << '\n';
            o << "mu = " << format_double(p.mu) << '\n';
            o << "alpha_M = " << format_double(p.alpha_m) << '\n';
            o << "alpha_B = " << format_double(p.alpha_b) << '\n';
            o << "alpha_A = " << format_double(p.alpha_a) << '\n';
            o << "gamma_M = " << format_double(p.gamma_m) << '\n';
            o << "gamma_B = " << format_double(p.gamma_b) << '\n';
            o << "gamma_A = " << format_double(p.gamma_a) << '\n';
            o << "n = " << format_double(p.n) << '\n';
            o << "K = " << format_double(p.k) << '\n';
            o << "K1 = " << format_double(p.k1) << '\n';
            o << "K_L = " << format_double(p.k_l) << '\n';
            o << "K_A = " << format_double(p.k_a) << '\n';
            o << "beta_A = " << format_double(p.beta_a) << '\n';
            o << "tau_M = " << format_double(p.tau_m) << '\n';
            o << "tau_B = " << format_double(p.tau_b) << '\n';
            break;
        }
    }
    if (s.x_start) o << "x_start = " << detail::format_list(*s.x_start) << '\n';
    if (s.x_target) o << "x_target = " << detail::format_list(*s.x_target) << '\n';

    const auto& h = cfg.hyper;
    o << "\n[network]\n";
    o << "hidden_units = " << h.hidden_units << '\n';
    o << "action_scale = " << format_double(h.action_scale) << '\n';
    o << "\n[training]\n";
    o << "episodes = " << h.episodes << '\n';
    o << "batch_size = " << h.batch_size << '\n';
    o << "warmup = " << h.warmup_trajectories << '\n';
    o << "exploration_std = " << format_double(h.exploration_std) << '\n';
    o << "actor_lr = " << format_double(h.actor_lr) << '\n';
    o << "critic_lr = " << format_double(h.critic_lr) << '\n';
    o << "buffer_capacity = " << h.buffer_capacity << '\n';
    o << "seed = " << h.seed << '\n';
    o << "\n[output]\n";
    o << "window = " << cfg.output.window.lo << ", " << cfg.output.window.hi << '\n';
    o << "dir = " << cfg.output.dir << '\n';
    o << "compare_analytic = " << (cfg.output.compare_analytic ? "true" : "false") << '\n';
    return o.str();
}

inline SystemSpec make_system(const SystemConfig& s) {
    SystemSpec spec;
    switch (s.kind) {
        case SystemKind::Linear: spec = make_linear_potential(s.x0, s.x1, s.horizon, s.steps, s.lambda); break;
        case SystemKind::MaierStein: spec = make_maier_stein(s.beta, s.noise, s.horizon, s.steps, s.lambda); break;
        case SystemKind::Lactose: spec = make_lactose_operon(s.noise, s.horizon, s.steps, s.lambda, s.lactose); break;
    }
    if (s.x_start) spec.x_start = *s.x_start;
    if (s.x_target) spec.x_target = *s.x_target;
    try {
        validate(spec);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("system: ") + e.what());
    }
    return spec;
}

}  // namespace omtp::config

#endif
