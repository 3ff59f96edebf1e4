#ifndef OMTP_NN_HPP
#define OMTP_NN_HPP

// Actor and critic networks plus the Adam optimiser.
//
//   actor:  a = a_max * tanh(W2 relu(W1 s + b1) + b2)
//   critic: Q = c . atan(W1 [s; a] + b1) + c0
//
// Each network has a plain double forward and a tape-bound forward. Both
// use the shared kernels, so a tape evaluation reproduces the plain one
// exactly.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "omtp/autodiff.hpp"
#include "omtp/errors.hpp"
#include "omtp/kernels.hpp"

namespace omtp::nn {

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> biases;   // out

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim)
        : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), biases(out_dim, 0.0) {}

    void apply(std::span<const double> x, std::span<double> y) const {
        kernels::matvec(weights, x, y);
        kernels::add(y, biases, y);
    }

    [[nodiscard]] std::size_t parameter_count() const { return weights.size() + biases.size(); }
};

// Layer parameters recorded on a tape.
struct BoundLayer {
    ad::Var weights;
    ad::Var biases;

    [[nodiscard]] ad::Var apply(ad::Var x) const { return ad::matvec(weights, x) + biases; }
};

inline BoundLayer bind(ad::Tape& tape, const DenseLayer& layer) {
    return {tape.leaf(layer.weights, layer.out, layer.in), tape.vector(layer.biases)};
}

struct ActorNet {
    DenseLayer hidden;  // K x d
    DenseLayer output;  // u x K
    double action_scale = 5.0;

    [[nodiscard]] std::size_t state_dim() const { return hidden.in; }
    [[nodiscard]] std::size_t action_dim() const { return output.out; }
    [[nodiscard]] std::size_t hidden_units() const { return hidden.out; }

    [[nodiscard]] std::vector<double> forward(std::span<const double> s) const {
        if (s.size() != state_dim()) {
            throw DimensionError("actor_forward: state has dimension " + std::to_string(s.size()) + ", expected " +
                                 std::to_string(state_dim()));
        }
        std::vector<double> h(hidden.out);
        hidden.apply(s, h);
        for (double& v : h) v = kernels::relu(v);
        std::vector<double> a(output.out);
        output.apply(h, a);
        for (double& v : a) v = std::tanh(v);
        kernels::scale(a, action_scale, a);
        return a;
    }

    [[nodiscard]] std::vector<std::span<double>> parameters() {
        return {hidden.weights, hidden.biases, output.weights, output.biases};
    }
    [[nodiscard]] std::vector<std::span<const double>> parameters() const {
        return {hidden.weights, hidden.biases, output.weights, output.biases};
    }
};

struct CriticNet {
    DenseLayer hidden;  // K x (d + u)
    DenseLayer output;  // 1 x K
    std::size_t state_size = 0;  // leading entries of the critic input that are state

    [[nodiscard]] std::size_t state_dim() const { return state_size; }
    [[nodiscard]] std::size_t action_dim() const { return hidden.in - state_size; }
    [[nodiscard]] std::size_t hidden_units() const { return hidden.out; }

    [[nodiscard]] double forward(std::span<const double> s, std::span<const double> a) const {
        if (s.size() != state_dim() || a.size() != action_dim()) {
            throw DimensionError("critic_forward: got (" + std::to_string(s.size()) + ", " + std::to_string(a.size()) +
                                 "), expected (" + std::to_string(state_dim()) + ", " +
                                 std::to_string(action_dim()) + ")");
        }
        std::vector<double> x(s.begin(), s.end());
        x.insert(x.end(), a.begin(), a.end());
        std::vector<double> h(hidden.out);
        hidden.apply(x, h);
        for (double& v : h) v = std::atan(v);
        double q = 0.0;
        output.apply(h, std::span<double>(&q, 1));
        return q;
    }

    [[nodiscard]] std::vector<std::span<double>> parameters() {
        return {hidden.weights, hidden.biases, output.weights, output.biases};
    }
    [[nodiscard]] std::vector<std::span<const double>> parameters() const {
        return {hidden.weights, hidden.biases, output.weights, output.biases};
    }
};

struct BoundActor {
    BoundLayer hidden;
    BoundLayer output;
    double action_scale = 1.0;

    [[nodiscard]] std::vector<ad::Var> parameters() const {
        return {hidden.weights, hidden.biases, output.weights, output.biases};
    }

    [[nodiscard]] ad::Var forward(ad::Var s) const {
        if (s.size() != hidden.weights.cols()) {
            throw DimensionError("actor_forward: state has dimension " + std::to_string(s.size()) + ", expected " +
                                 std::to_string(hidden.weights.cols()));
        }
        return action_scale * ad::tanh(output.apply(ad::relu(hidden.apply(s))));
    }
};

struct BoundCritic {
    BoundLayer hidden;
    BoundLayer output;

    [[nodiscard]] std::vector<ad::Var> parameters() const {
        return {hidden.weights, hidden.biases, output.weights, output.biases};
    }

    [[nodiscard]] ad::Var forward(ad::Var s, ad::Var a) const {
        if (s.size() + a.size() != hidden.weights.cols()) {
            throw DimensionError("critic_forward: input dimension " + std::to_string(s.size() + a.size()) +
                                 ", expected " + std::to_string(hidden.weights.cols()));
        }
        return output.apply(ad::atan(hidden.apply(ad::concat(s, a))));
    }
};

inline BoundActor bind(ad::Tape& tape, const ActorNet& net) {
    return {bind(tape, net.hidden), bind(tape, net.output), net.action_scale};
}

inline BoundCritic bind(ad::Tape& tape, const CriticNet& net) {
    return {bind(tape, net.hidden), bind(tape, net.output)};
}

// Concatenated adjoints of bound parameters, in parameter order.
inline std::vector<double> gradient(const std::vector<ad::Var>& params) {
    std::vector<double> g;
    for (const auto& p : params) {
        auto s = p.grad();
        g.insert(g.end(), s.begin(), s.end());
    }
    return g;
}

template <class Net>
std::vector<double> flatten(const Net& net) {
    std::vector<double> flat;
    for (auto block : net.parameters()) flat.insert(flat.end(), block.begin(), block.end());
    return flat;
}

template <class Net>
void unflatten(Net& net, std::span<const double> flat) {
    std::size_t k = 0;
    for (auto block : net.parameters()) {
        if (k + block.size() > flat.size()) throw DimensionError("unflatten: parameter vector too short");
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), block.size(), block.begin());
        k += block.size();
    }
    if (k != flat.size()) throw DimensionError("unflatten: parameter vector too long");
}

template <class Net>
std::size_t parameter_count(const Net& net) {
    std::size_t n = 0;
    for (auto block : net.parameters()) n += block.size();
    return n;
}

namespace detail {

inline void init_layer(DenseLayer& layer, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weights) w = dist(rng);
    std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
}

}  // namespace detail

inline ActorNet init_actor(std::size_t state_dim, std::size_t hidden_units, std::size_t action_dim,
                           double action_scale, std::uint64_t seed) {
    if (state_dim == 0 || hidden_units == 0 || action_dim == 0) {
        throw DimensionError("init_actor: dimensions must be positive");
    }
    ActorNet net{DenseLayer(state_dim, hidden_units), DenseLayer(hidden_units, action_dim), action_scale};
    std::mt19937_64 rng(seed);
    detail::init_layer(net.hidden, rng);
    detail::init_layer(net.output, rng);
    return net;
}

inline CriticNet init_critic(std::size_t state_dim, std::size_t action_dim, std::size_t hidden_units,
                             std::uint64_t seed) {
    if (state_dim == 0 || hidden_units == 0 || action_dim == 0) {
        throw DimensionError("init_critic: dimensions must be positive");
    }
    CriticNet net{DenseLayer(state_dim + action_dim, hidden_units), DenseLayer(hidden_units, 1), state_dim};
    std::mt19937_64 rng(seed);
    detail::init_layer(net.hidden, rng);
    detail::init_layer(net.output, rng);
    return net;
}

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;

    AdamState() = default;
    AdamState(std::size_t parameter_count, double lr)
        : learning_rate(lr), first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0) {}
};

// One bias-corrected Adam update, in place. A non-finite gradient aborts the
// step before anything is modified.
inline void adam_step(std::span<const std::span<double>> params, std::span<const double> grads, AdamState& state) {
    std::size_t total = 0;
    for (auto block : params) total += block.size();
    if (total != grads.size() || total != state.first_moment.size()) {
        throw DimensionError("adam_step: " + std::to_string(total) + " parameters, " + std::to_string(grads.size()) +
                             " gradients, " + std::to_string(state.first_moment.size()) + " moments");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw DivergenceError("adam_step: non-finite gradient at index " + std::to_string(i));
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    std::size_t k = 0;
    for (auto block : params) {
        for (double& p : block) {
            const double g = grads[k];
            double& m = state.first_moment[k];
            double& v = state.second_moment[k];
            m = state.beta1 * m + (1.0 - state.beta1) * g;
            v = state.beta2 * v + (1.0 - state.beta2) * g * g;
            const double m_hat = m / c1;
            const double v_hat = v / c2;
            p -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
            ++k;
        }
    }
}

template <class Net>
void adam_step(Net& net, std::span<const double> grads, AdamState& state) {
    auto params = net.parameters();
    adam_step(std::span<const std::span<double>>(params), grads, state);
}

}  // namespace omtp::nn

#endif
