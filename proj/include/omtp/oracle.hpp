#ifndef OMTP_ORACLE_HPP
#define OMTP_ORACLE_HPP

// Closed-form reference solutions. Straight-line numeric code only; nothing
// here touches the tape or the networks.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "omtp/dynsys.hpp"
#include "omtp/errors.hpp"

namespace omtp::oracle {

// Solution of x'' = x on [0, T] with x(0) = x0, x(T) = x1:
//   x(t) = A e^t + B e^-t
struct AnalyticPath {
    double a = 0.0;
    double b = 0.0;
    double horizon = 1.0;

    [[nodiscard]] double operator()(double t) const { return a * std::exp(t) + b * std::exp(-t); }
    [[nodiscard]] double derivative(double t) const { return a * std::exp(t) - b * std::exp(-t); }

    [[nodiscard]] std::vector<State> sample(int steps) const {
        std::vector<State> states;
        states.reserve(static_cast<std::size_t>(steps) + 1);
        for (int k = 0; k <= steps; ++k) states.push_back({(*this)(horizon * k / steps)});
        return states;
    }
};

inline AnalyticPath analytic_linear_path(double x0, double x1, double horizon) {
    if (!(horizon > 0.0)) throw DomainError("analytic_linear_path: horizon must be positive");
    const double ep = std::exp(horizon);
    const double em = std::exp(-horizon);
    const double den = ep - em;
    return {(x1 - x0 * em) / den, (x0 * ep - x1) / den, horizon};
}

// max |x''(t) - x(t)| over `samples` evenly spaced interior points, with x''
// from a central second difference of step h.
template <class Path>
double el_residual(const Path& path, double horizon, int samples, double h = 1e-4) {
    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double t = h + (horizon - 2.0 * h) * (samples == 1 ? 0.5 : static_cast<double>(i) / (samples - 1));
        const double x = path(t);
        const double xdd = (path(t + h) - 2.0 * x + path(t - h)) / (h * h);
        worst = std::max(worst, std::abs(xdd - x));
    }
    return worst;
}

inline double el_residual(const AnalyticPath& path, int samples, double h = 1e-4) {
    return el_residual(path, path.horizon, samples, h);
}

// 1/2 int_0^T (u^2 - 1) dt with u = x' + x along the analytic path, by the
// trapezoid rule on N intervals.
inline double action_of_analytic(double x0, double x1, double horizon, int steps) {
    if (steps < 1) throw DomainError("action_of_analytic: steps must be >= 1");
    const AnalyticPath path = analytic_linear_path(x0, x1, horizon);
    const double dt = horizon / steps;
    auto integrand = [&](double t) {
        const double u = path.derivative(t) + path(t);
        return 0.5 * (u * u - 1.0);
    };
    double acc = 0.5 * (integrand(0.0) + integrand(horizon));
    for (int k = 1; k < steps; ++k) acc += integrand(k * dt);
    return acc * dt;
}

inline double fixed_point_residual(const SystemSpec& spec, std::span<const double> x) {
    const State b = spec.drift(x);
    double acc = 0.0;
    for (double v : b) acc += v * v;
    return std::sqrt(acc);
}

}  // namespace omtp::oracle

#endif
