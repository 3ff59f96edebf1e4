#ifndef OMTP_DYNSYS_HPP
#define OMTP_DYNSYS_HPP

// Controlled dynamical systems and the Onsager-Machlup cost structure.
//
// The environment is the Euler discretisation of dX = b(X) dt + eps u dt with
// additive constant noise intensity eps:
//
//   s' = s + b(s) dt + eps a dt,           dt = T / N
//   r  = 1/2 (|a|^2 + div b(s)) dt         (running cost)
//   g  = lambda |x - x_target|_2            (terminal cost)

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "omtp/autodiff.hpp"
#include "omtp/errors.hpp"
#include "omtp/kernels.hpp"

namespace omtp {

using State = std::vector<double>;
using Action = std::vector<double>;

struct SystemSpec {
    std::string name;
    std::size_t state_dim = 1;
    std::size_t control_dim = 1;
    std::function<State(std::span<const double>)> drift;
    // d x d, row-major: J[i][j] = d b_i / d x_j.
    std::function<std::vector<double>(std::span<const double>)> drift_jacobian;
    std::function<double(std::span<const double>)> divergence;
    double noise_intensity = 1.0;
    State x_start;
    State x_target;
    double horizon = 1.0;
    int steps = 1;
    double lambda = 10.0;

    [[nodiscard]] double dt() const { return horizon / static_cast<double>(steps); }
};

struct Transition {
    State s;
    Action a;
    double r = 0.0;
    State s_next;
    int t_index = 0;
};

struct PathRecord {
    std::vector<State> states;    // N + 1
    std::vector<Action> actions;  // N
};

namespace detail {

inline void check_dim(const char* op, const char* what, std::size_t got, std::size_t expected) {
    if (got != expected) {
        throw DimensionError(std::string(op) + ": " + what + " has dimension " + std::to_string(got) +
                             ", expected " + std::to_string(expected));
    }
}

inline std::string format_state(std::span<const double> s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline State checked_drift(const SystemSpec& spec, std::span<const double> s) {
    State b = spec.drift(s);
    if (!all_finite(b)) throw DivergenceError("step: non-finite drift at state " + format_state(s));
    return b;
}

}  // namespace detail

inline void validate(const SystemSpec& spec) {
    if (!(spec.horizon > 0.0)) throw ConfigError("horizon must be positive");
    if (spec.steps < 1) throw ConfigError("steps must be >= 1");
    if (!(spec.noise_intensity > 0.0)) throw ConfigError("noise_intensity must be positive");
    if (!(spec.lambda > 0.0)) throw ConfigError("lambda must be positive");
    if (spec.control_dim != spec.state_dim) throw ConfigError("control_dim must equal state_dim");
    if (spec.x_start.size() != spec.state_dim) throw ConfigError("x_start has wrong dimension");
    if (spec.x_target.size() != spec.state_dim) throw ConfigError("x_target has wrong dimension");
}

inline State step(const SystemSpec& spec, std::span<const double> s, std::span<const double> a) {
    detail::check_dim("step", "state", s.size(), spec.state_dim);
    detail::check_dim("step", "action", a.size(), spec.control_dim);
    const State b = detail::checked_drift(spec, s);
    const double dt = spec.dt();
    const double gain = spec.noise_intensity * dt;
    State next(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) next[i] = (s[i] + b[i] * dt) + a[i] * gain;
    if (!detail::all_finite(next)) throw DivergenceError("step: non-finite state after " + detail::format_state(s));
    return next;
}

// Same arithmetic as step(), recorded on the tape of `s`.
inline ad::Var step(const SystemSpec& spec, ad::Var s, ad::Var a) {
    detail::check_dim("step", "state", s.size(), spec.state_dim);
    detail::check_dim("step", "action", a.size(), spec.control_dim);
    ad::Tape& tape = *s.tape();
    // Validate before recording so that a rejected step leaves no
    // non-finite nodes behind on the tape.
    static_cast<void>(step(spec, s.value(), a.value()));
    const State b = spec.drift(s.value());
    const auto jac = spec.drift_jacobian(s.value());
    if (!detail::all_finite(jac)) {
        throw DivergenceError("step: non-finite drift jacobian at state " + detail::format_state(s.value()));
    }
    const double dt = spec.dt();
    const ad::Var drift = tape.record_map(s, b, jac);
    return (s + drift * dt) + a * (spec.noise_intensity * dt);
}

inline double running_cost(const SystemSpec& spec, std::span<const double> s, std::span<const double> a) {
    detail::check_dim("running_cost", "state", s.size(), spec.state_dim);
    detail::check_dim("running_cost", "action", a.size(), spec.control_dim);
    return 0.5 * (kernels::dot(a, a) + spec.divergence(s)) * spec.dt();
}

inline double terminal_cost(const SystemSpec& spec, std::span<const double> x) {
    detail::check_dim("terminal_cost", "state", x.size(), spec.state_dim);
    State d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - spec.x_target[i];
    return spec.lambda * kernels::l2norm(d);
}

inline ad::Var terminal_cost(const SystemSpec& spec, ad::Var x) {
    detail::check_dim("terminal_cost", "state", x.size(), spec.state_dim);
    ad::Tape& tape = *x.tape();
    return spec.lambda * ad::l2norm(x - tape.vector(spec.x_target));
}

inline double om_action(const SystemSpec& spec, const PathRecord& path) {
    if (path.states.size() != path.actions.size() + 1) {
        throw DimensionError("om_action: path has " + std::to_string(path.states.size()) + " states and " +
                             std::to_string(path.actions.size()) + " actions");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < path.actions.size(); ++k) total += running_cost(spec, path.states[k], path.actions[k]);
    return total;
}

// Controls that reproduce `states` under the Euler step (forward differences).
inline PathRecord implied_path(const SystemSpec& spec, const std::vector<State>& states) {
    PathRecord path{states, {}};
    const double dt = spec.dt();
    for (std::size_t k = 0; k + 1 < states.size(); ++k) {
        const State b = spec.drift(states[k]);
        Action a(spec.control_dim);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = (states[k + 1][i] - states[k][i] - b[i] * dt) / (spec.noise_intensity * dt);
        }
        path.actions.push_back(std::move(a));
    }
    return path;
}

// Re-simulates the stored actions from x_start.
inline std::vector<State> replay(const SystemSpec& spec, const std::vector<Action>& actions) {
    std::vector<State> states{spec.x_start};
    for (const auto& a : actions) states.push_back(step(spec, states.back(), a));
    return states;
}

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

// dX = -X dt + dB
inline SystemSpec make_linear_potential(double x0, double x1, double horizon, int steps, double lambda) {
    SystemSpec spec;
    spec.name = "linear";
    spec.state_dim = spec.control_dim = 1;
    spec.drift = [](std::span<const double> x) { return State{-x[0]}; };
    spec.drift_jacobian = [](std::span<const double>) { return std::vector<double>{-1.0}; };
    spec.divergence = [](std::span<const double>) { return -1.0; };
    spec.noise_intensity = 1.0;
    spec.x_start = {x0};
    spec.x_target = {x1};
    spec.horizon = horizon;
    spec.steps = steps;
    spec.lambda = lambda;
    return spec;
}

// b(x, y) = (x - x^3 - beta x y^2, -(1 + x^2) y)
inline SystemSpec make_maier_stein(double beta, double eps, double horizon, int steps, double lambda) {
    if (beta < 0.0) throw ConfigError("maier-stein: beta must be >= 0");
    if (!(eps > 0.0)) throw ConfigError("maier-stein: noise must be positive");
    SystemSpec spec;
    spec.name = "maier-stein";
    spec.state_dim = spec.control_dim = 2;
    spec.drift = [beta](std::span<const double> s) {
        const double x = s[0], y = s[1];
        return State{x - x * x * x - beta * x * y * y, -(1.0 + x * x) * y};
    };
    spec.drift_jacobian = [beta](std::span<const double> s) {
        const double x = s[0], y = s[1];
        return std::vector<double>{1.0 - 3.0 * x * x - beta * y * y, -2.0 * beta * x * y,  //
                                   -2.0 * x * y, -(1.0 + x * x)};
    };
    spec.divergence = [beta](std::span<const double> s) {
        const double x = s[0], y = s[1];
        return -4.0 * x * x - beta * y * y;
    };
    spec.noise_intensity = eps;
    spec.x_start = {-1.0, 0.0};
    spec.x_target = {1.0, 0.0};
    spec.horizon = horizon;
    spec.steps = steps;
    spec.lambda = lambda;
    return spec;
}

// Reduced lactose operon kinetics, in the units the constants are tabulated
// in. The state (M, B, A) is in mM; alpha_m is in nM/min and k1 in uM^-2,
// converted internally. l_ext is the extracellular lactose level in mM.
struct LactoseParams {
    double mu_max = 3.47e-2;
    double mu = 3.03e-2;
    double alpha_m = 997.0;
    double alpha_b = 1.66e-2;
    double alpha_a = 1.76e4;
    double gamma_m = 0.411;
    double gamma_b = 8.33e-4;
    double gamma_a = 1.35e-2;
    double n = 2.0;
    double k = 7200.0;
    double k1 = 2.52e-2;
    double k_l = 0.97;
    double k_a = 1.95;
    double beta_a = 2.15e4;
    double tau_m = 0.10;
    double tau_b = 2.00;
    // Minimises the summed squared drift residual at the two reference stable
    // states.
    double l_ext = 4.99668e-2;
};

inline const State kLactoseLow{4.57e-7, 2.29e-7, 4.27e-3};
inline const State kLactoseHigh{3.28e-5, 1.65e-5, 6.47e-2};

namespace detail {

struct LactoseKinetics {
    double alpha_m;  // mM/min
    double alpha_b;
    double alpha_a;
    double gm, gb, ga;  // gamma + mu
    double n, k;
    double k1;  // mM^-2
    double k_l, k_a, beta_a;
    double delay_m;  // exp(-mu tau_m)
    double delay_b;  // exp(-mu tau_b)
    double l_frac;   // L / (K_L + L)

    explicit LactoseKinetics(const LactoseParams& p)
        : alpha_m(p.alpha_m * 1e-6), alpha_b(p.alpha_b), alpha_a(p.alpha_a), gm(p.gamma_m + p.mu),
          gb(p.gamma_b + p.mu), ga(p.gamma_a + p.mu), n(p.n), k(p.k), k1(p.k1 * 1e6), k_l(p.k_l), k_a(p.k_a),
          beta_a(p.beta_a), delay_m(std::exp(-p.mu * p.tau_m)), delay_b(std::exp(-p.mu * p.tau_b)),
          l_frac(p.l_ext / (p.k_l + p.l_ext)) {
        if (!(p.k_l + p.l_ext > 0.0)) throw DomainError("lactose: K_L + L must be positive");
    }

    void check(std::span<const double> s) const {
        if (!(k_a + s[2] > 0.0)) throw DomainError("lactose: K_A + A <= 0 at state " + format_state(s));
    }

    // Hill-type induction term and its derivative with respect to A.
    [[nodiscard]] std::pair<double, double> induction(double a) const {
        const double ad = delay_m * a;
        const double h = k1 * std::pow(ad, n);
        const double value = alpha_m * (1.0 + h) / (k + h);
        const double dh = ad == 0.0 ? 0.0 : k1 * n * std::pow(ad, n - 1.0) * delay_m;
        const double deriv = alpha_m * (k - 1.0) / ((k + h) * (k + h)) * dh;
        return {value, deriv};
    }

    [[nodiscard]] State drift(std::span<const double> s) const {
        check(s);
        const double m = s[0], b = s[1], a = s[2];
        return State{induction(a).first - gm * m,                                       //
                     alpha_b * delay_b * m - gb * b,                                      //
                     alpha_a * b * l_frac - beta_a * b * a / (k_a + a) - ga * a};
    }

    [[nodiscard]] std::vector<double> jacobian(std::span<const double> s) const {
        check(s);
        const double b = s[1], a = s[2];
        const double ka2 = (k_a + a) * (k_a + a);
        return {-gm, 0.0, induction(a).second,  //
                alpha_b * delay_b, -gb, 0.0,    //
                0.0, alpha_a * l_frac - beta_a * a / (k_a + a), -beta_a * b * k_a / ka2 - ga};
    }

    [[nodiscard]] double divergence(std::span<const double> s) const {
        check(s);
        const double b = s[1], a = s[2];
        return -gm - gb - beta_a * b * k_a / ((k_a + a) * (k_a + a)) - ga;
    }
};

}  // namespace detail

inline SystemSpec make_lactose_operon(double eps, double horizon, int steps, double lambda,
                                      const LactoseParams& params = {}) {
    if (!(eps > 0.0)) throw ConfigError("lactose: noise must be positive");
    const detail::LactoseKinetics kin(params);
    SystemSpec spec;
    spec.name = "lactose";
    spec.state_dim = spec.control_dim = 3;
    spec.drift = [kin](std::span<const double> s) { return kin.drift(s); };
    spec.drift_jacobian = [kin](std::span<const double> s) { return kin.jacobian(s); };
    spec.divergence = [kin](std::span<const double> s) { return kin.divergence(s); };
    spec.noise_intensity = eps;
    spec.x_start = kLactoseLow;
    spec.x_target = kLactoseHigh;
    spec.horizon = horizon;
    spec.steps = steps;
    spec.lambda = lambda;
    return spec;
}

}  // namespace omtp

#endif
