#ifndef OMTP_TPDDPG_HPP
#define OMTP_TPDDPG_HPP

// Terminal-prediction DDPG agent for the finite-horizon control problem.
//
// One episode walks t = 0 .. N-1. At every step the agent acts with Gaussian
// exploration noise, stores the transition in the per-timestep store D[t],
// samples a minibatch from D[t], fits the critic to the one-step TD target
// (with Q(s_N) = 0) and then descends
//
//   L_act = mean_i [ Q(s_i, A(s_i)) + lambda |F^(N-k)(s_i) - x_target| ]
//
// where F^(N-k) is the noise-free rollout of the current actor from s_i to
// the horizon. The rollout is recorded on the tape, so its gradient reaches
// the actor through every composed step. There are no target networks.

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "omtp/autodiff.hpp"
#include "omtp/dynsys.hpp"
#include "omtp/errors.hpp"
#include "omtp/nn.hpp"

namespace omtp {

using Rng = std::mt19937_64;

// Added to the prediction loss when a rollout leaves the finite range.
inline constexpr double kDivergencePenalty = 1.0e6;

struct Hyperparams {
    std::size_t batch_size = 64;
    double exploration_std = 0.5;
    int episodes = 300;
    int warmup_trajectories = 64;
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    std::size_t hidden_units = 15;
    double action_scale = 5.0;
    std::size_t buffer_capacity = 10000;
    std::uint64_t seed = 1;
};

inline void validate(const Hyperparams& h) {
    if (h.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(h.exploration_std >= 0.0)) throw ConfigError("exploration_std must be >= 0");
    if (h.episodes < 1) throw ConfigError("episodes must be >= 1");
    if (h.warmup_trajectories < 0) throw ConfigError("warmup must be >= 0");
    if (!(h.actor_lr > 0.0)) throw ConfigError("actor_lr must be positive");
    if (!(h.critic_lr > 0.0)) throw ConfigError("critic_lr must be positive");
    if (h.hidden_units < 1) throw ConfigError("hidden_units must be >= 1");
    if (!(h.action_scale > 0.0)) throw ConfigError("action_scale must be positive");
    if (h.buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
}

// Per-timestep bounded FIFO stores.
class ReplayBuffer {
public:
    ReplayBuffer(int steps, std::size_t capacity) : stores_(static_cast<std::size_t>(steps)), capacity_(capacity) {}

    void store(Transition tr) {
        if (tr.t_index < 0 || static_cast<std::size_t>(tr.t_index) >= stores_.size()) {
            throw DimensionError("replay buffer: timestep " + std::to_string(tr.t_index) + " outside [0, " +
                                 std::to_string(stores_.size()) + ")");
        }
        auto& d = stores_[static_cast<std::size_t>(tr.t_index)];
        if (d.size() == capacity_) d.pop_front();
        d.push_back(std::move(tr));
    }

    [[nodiscard]] const std::deque<Transition>& at(int t) const { return stores_.at(static_cast<std::size_t>(t)); }
    [[nodiscard]] std::size_t size(int t) const { return at(t).size(); }
    [[nodiscard]] int steps() const { return static_cast<int>(stores_.size()); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }

    // m draws, uniform with replacement, from D[t].
    [[nodiscard]] std::vector<const Transition*> sample(int t, std::size_t m, Rng& rng) const {
        const auto& d = at(t);
        if (d.empty()) throw DimensionError("replay buffer: store " + std::to_string(t) + " is empty");
        std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
        std::vector<const Transition*> batch;
        batch.reserve(m);
        for (std::size_t i = 0; i < m; ++i) batch.push_back(&d[pick(rng)]);
        return batch;
    }

private:
    std::vector<std::deque<Transition>> stores_;
    std::size_t capacity_;
};

struct Agent {
    nn::ActorNet actor;
    nn::CriticNet critic;
    nn::AdamState actor_opt;
    nn::AdamState critic_opt;
};

inline Agent make_agent(const SystemSpec& spec, const Hyperparams& h) {
    std::seed_seq seq{static_cast<std::uint32_t>(h.seed), static_cast<std::uint32_t>(h.seed >> 32), 0x5eedu};
    std::array<std::uint32_t, 4> words{};
    seq.generate(words.begin(), words.end());
    const std::uint64_t seeds[2] = {(std::uint64_t{words[0]} << 32) | words[1], (std::uint64_t{words[2]} << 32) | words[3]};
    Agent agent{nn::init_actor(spec.state_dim, h.hidden_units, spec.control_dim, h.action_scale, seeds[0]),
                nn::init_critic(spec.state_dim, spec.control_dim, h.hidden_units, seeds[1]),
                {},
                {}};
    agent.actor_opt = nn::AdamState(nn::parameter_count(agent.actor), h.actor_lr);
    agent.critic_opt = nn::AdamState(nn::parameter_count(agent.critic), h.critic_lr);
    return agent;
}

inline Action select_action(const nn::ActorNet& actor, std::span<const double> s, double exploration_std, Rng& rng) {
    Action a = actor.forward(s);
    if (exploration_std > 0.0) {
        std::normal_distribution<double> noise(0.0, exploration_std);
        for (double& x : a) x += noise(rng);
    }
    return a;
}

// ---------------------------------------------------------------------------
// Terminal prediction
// ---------------------------------------------------------------------------

struct Prediction {
    State terminal;
    double loss = 0.0;
    bool diverged = false;
};

// Noise-free rollout of `actor` from s_k for N - k steps.
inline Prediction terminal_predict(const SystemSpec& spec, const nn::ActorNet& actor, std::span<const double> s_k,
                                   int k) {
    if (k < 0 || k > spec.steps) {
        throw DimensionError("terminal_predict: timestep " + std::to_string(k) + " outside [0, " +
                             std::to_string(spec.steps) + "]");
    }
    Prediction p{State(s_k.begin(), s_k.end()), 0.0, false};
    for (int t = k; t < spec.steps; ++t) {
        try {
            p.terminal = step(spec, p.terminal, actor.forward(p.terminal));
        } catch (const DivergenceError&) {
            p.diverged = true;
            break;
        } catch (const DomainError&) {
            p.diverged = true;
            break;
        }
    }
    p.loss = terminal_cost(spec, p.terminal) + (p.diverged ? kDivergencePenalty : 0.0);
    return p;
}

struct TapePrediction {
    ad::Var terminal;
    ad::Var loss;
    bool diverged = false;
};

// Tape version. `first_action`, when given, must be actor(s_k) recorded on
// the same tape; it is reused for the first step.
inline TapePrediction terminal_predict(const SystemSpec& spec, const nn::BoundActor& actor, ad::Var s_k, int k,
                                       ad::Var first_action = {}) {
    if (k < 0 || k > spec.steps) {
        throw DimensionError("terminal_predict: timestep " + std::to_string(k) + " outside [0, " +
                             std::to_string(spec.steps) + "]");
    }
    TapePrediction p{s_k, {}, false};
    for (int t = k; t < spec.steps; ++t) {
        const ad::Var a = (t == k && first_action.valid()) ? first_action : actor.forward(p.terminal);
        try {
            p.terminal = step(spec, p.terminal, a);
        } catch (const DivergenceError&) {
            p.diverged = true;
            break;
        } catch (const DomainError&) {
            p.diverged = true;
            break;
        }
    }
    p.loss = terminal_cost(spec, p.terminal);
    if (p.diverged) p.loss = p.loss + s_k.tape()->scalar(kDivergencePenalty);
    return p;
}

// ---------------------------------------------------------------------------
// Critic
// ---------------------------------------------------------------------------

struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

namespace detail {

inline void check_batch(const char* op, std::span<const Transition* const> batch) {
    if (batch.empty()) throw DimensionError(std::string(op) + ": empty batch");
    for (const auto* tr : batch) {
        if (tr->t_index != batch.front()->t_index) {
            throw DimensionError(std::string(op) + ": batch mixes timesteps " +
                                 std::to_string(batch.front()->t_index) + " and " + std::to_string(tr->t_index));
        }
    }
}

}  // namespace detail

// TD target r + Q(s', A(s')); the bootstrap term is zero on the last step.
inline double td_target(const nn::CriticNet& critic, const nn::ActorNet& actor, const SystemSpec& spec,
                        const Transition& tr) {
    if (tr.t_index >= spec.steps - 1) return tr.r;
    return tr.r + critic.forward(tr.s_next, actor.forward(tr.s_next));
}

// Mean squared TD residual and its gradient in the critic parameters. The
// targets are evaluated off-tape, so no gradient flows through them.
inline LossGradient critic_loss_gradient(const nn::CriticNet& critic, const nn::ActorNet& actor,
                                         const SystemSpec& spec, std::span<const Transition* const> batch) {
    detail::check_batch("critic_update", batch);
    std::vector<double> targets;
    targets.reserve(batch.size());
    for (const auto* tr : batch) targets.push_back(td_target(critic, actor, spec, *tr));

    ad::Tape tape;
    tape.reserve(16 * batch.size() + 8, (8 * critic.hidden_units() + 16) * batch.size() + 256);
    const nn::BoundCritic q = nn::bind(tape, critic);
    ad::Var total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& tr = *batch[i];
        const ad::Var residual = q.forward(tape.vector(tr.s), tape.vector(tr.a)) - tape.scalar(targets[i]);
        const ad::Var sq = ad::square(residual);
        total = total.valid() ? total + sq : sq;
    }
    const ad::Var loss = total * (1.0 / static_cast<double>(batch.size()));
    tape.backward(loss);
    return {loss.scalar(), nn::gradient(q.parameters())};
}

// One Adam step on the TD loss; returns the loss before the step.
inline double critic_update(nn::CriticNet& critic, const nn::ActorNet& actor, const SystemSpec& spec,
                            std::span<const Transition* const> batch, nn::AdamState& opt) {
    const LossGradient lg = critic_loss_gradient(critic, actor, spec, batch);
    if (!std::isfinite(lg.loss)) throw DivergenceError("critic_update: non-finite TD loss");
    nn::adam_step(critic, lg.gradient, opt);
    return lg.loss;
}

// ---------------------------------------------------------------------------
// Actor
// ---------------------------------------------------------------------------

enum class ActorTerms { Both, CriticOnly, PredictionOnly };

inline LossGradient actor_loss_gradient(const nn::ActorNet& actor, const nn::CriticNet& critic,
                                        const SystemSpec& spec, std::span<const Transition* const> batch,
                                        ActorTerms terms = ActorTerms::Both) {
    detail::check_batch("actor_update", batch);
    const int k = batch.front()->t_index;
    const auto horizon = static_cast<std::size_t>(spec.steps - k);
    const std::size_t width = std::max(actor.hidden_units(), critic.hidden_units());

    ad::Tape tape;
    tape.reserve(batch.size() * (14 * horizon + 24) + 16,
                 batch.size() * ((2 * width + 8 * spec.state_dim) * (horizon + 2)) + 1024);
    const nn::BoundActor pi = nn::bind(tape, actor);
    const nn::BoundCritic q = nn::bind(tape, critic);
    ad::Var total;
    for (const auto* tr : batch) {
        const ad::Var s = tape.vector(tr->s);
        const ad::Var a = pi.forward(s);
        ad::Var term;
        if (terms != ActorTerms::PredictionOnly) term = q.forward(s, a);
        if (terms != ActorTerms::CriticOnly) {
            const ad::Var pred = terminal_predict(spec, pi, s, k, a).loss;
            term = term.valid() ? term + pred : pred;
        }
        total = total.valid() ? total + term : term;
    }
    const ad::Var loss = total * (1.0 / static_cast<double>(batch.size()));
    tape.backward(loss);
    return {loss.scalar(), nn::gradient(pi.parameters())};
}

// One Adam step descending L_act with the critic frozen; returns the loss
// before the step.
inline double actor_update(nn::ActorNet& actor, const nn::CriticNet& critic, const SystemSpec& spec,
                           std::span<const Transition* const> batch, nn::AdamState& opt) {
    const LossGradient lg = actor_loss_gradient(actor, critic, spec, batch);
    if (!std::isfinite(lg.loss)) throw DivergenceError("actor_update: non-finite actor loss");
    nn::adam_step(actor, lg.gradient, opt);
    return lg.loss;
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

using Warning = std::function<void(const std::string&)>;

inline void warn_stderr(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// Fills the buffer with `trajectories` noisy rollouts of the current actor.
// Trajectories that blow up are dropped whole. Returns the number kept.
inline int warmup_collect(const SystemSpec& spec, const nn::ActorNet& actor, int trajectories,
                          double exploration_std, ReplayBuffer& buffer, Rng& rng, const Warning& warn = warn_stderr) {
    int kept = 0;
    for (int m = 0; m < trajectories; ++m) {
        std::vector<Transition> traj;
        traj.reserve(static_cast<std::size_t>(spec.steps));
        State s = spec.x_start;
        try {
            for (int t = 0; t < spec.steps; ++t) {
                Action a = select_action(actor, s, exploration_std, rng);
                const double r = running_cost(spec, s, a);
                State next = step(spec, s, a);
                traj.push_back({s, std::move(a), r, next, t});
                s = std::move(next);
            }
        } catch (const Error& e) {
            if (warn) warn("warmup trajectory " + std::to_string(m) + " discarded: " + e.what());
            continue;
        }
        for (auto& tr : traj) buffer.store(std::move(tr));
        ++kept;
    }
    return kept;
}

struct EpisodeLog {
    int episode = 0;
    double running_cost_sum = 0.0;
    double critic_loss = 0.0;    // mean over executed steps
    double terminal_loss = 0.0;  // prediction loss from s_0
    double total_cost = 0.0;     // running_cost_sum + terminal cost of the final state
    double actor_loss = 0.0;     // L_act at t = 0
    std::vector<double> step_terminal_losses;  // prediction loss from the realised s_t
    PathRecord path;
    bool diverged = false;
};

inline EpisodeLog train_episode(const SystemSpec& spec, Agent& agent, ReplayBuffer& buffer, const Hyperparams& h,
                                Rng& rng, int episode) {
    EpisodeLog log;
    log.episode = episode;
    log.path.states.push_back(spec.x_start);
    double critic_sum = 0.0;
    int executed = 0;
    try {
        for (int t = 0; t < spec.steps; ++t) {
            const State s = log.path.states.back();
            log.step_terminal_losses.push_back(terminal_predict(spec, agent.actor, s, t).loss);

            Action a = select_action(agent.actor, s, h.exploration_std, rng);
            const double r = running_cost(spec, s, a);
            State next = step(spec, s, a);
            buffer.store({s, a, r, next, t});
            log.running_cost_sum += r;
            log.path.actions.push_back(std::move(a));
            log.path.states.push_back(std::move(next));

            const auto batch = buffer.sample(t, h.batch_size, rng);
            critic_sum += critic_update(agent.critic, agent.actor, spec, batch, agent.critic_opt);
            const double act = actor_update(agent.actor, agent.critic, spec, batch, agent.actor_opt);
            if (t == 0) log.actor_loss = act;
            ++executed;
        }
    } catch (const DivergenceError&) {
        log.diverged = true;
    } catch (const DomainError&) {
        log.diverged = true;
    }
    log.critic_loss = executed > 0 ? critic_sum / executed : 0.0;
    log.terminal_loss = log.step_terminal_losses.empty() ? 0.0 : log.step_terminal_losses.front();
    const State& last = log.path.states.back();
    log.total_cost = log.running_cost_sum + (detail::all_finite(last) ? terminal_cost(spec, last) : kDivergencePenalty);
    return log;
}

struct EpisodeWindow {
    int lo = 0;  // inclusive
    int hi = 0;  // exclusive
};

// Pointwise mean of the realised paths of non-diverged episodes in [lo, hi).
inline std::vector<State> average_path(const std::vector<EpisodeLog>& logs, EpisodeWindow window) {
    std::vector<State> mean;
    int count = 0;
    for (const auto& log : logs) {
        if (log.episode < window.lo || log.episode >= window.hi || log.diverged) continue;
        if (mean.empty()) {
            mean = log.path.states;
        } else {
            for (std::size_t k = 0; k < mean.size(); ++k)
                for (std::size_t i = 0; i < mean[k].size(); ++i) mean[k][i] += log.path.states[k][i];
        }
        ++count;
    }
    for (auto& s : mean)
        for (double& x : s) x /= count;
    return mean;
}

struct TrainResult {
    Agent agent;
    std::vector<EpisodeLog> logs;
    std::vector<State> averaged_path;
    int diverged_episodes = 0;
    int warmup_kept = 0;
    bool failed = false;
};

using Progress = std::function<void(const EpisodeLog&)>;

inline TrainResult train(const SystemSpec& spec, const Hyperparams& h, EpisodeWindow window,
                         const Progress& progress = {}, const Warning& warn = warn_stderr) {
    validate(spec);
    validate(h);
    TrainResult result{make_agent(spec, h), {}, {}, 0, 0, false};
    Rng rng(h.seed);
    ReplayBuffer buffer(spec.steps, h.buffer_capacity);
    result.warmup_kept =
        warmup_collect(spec, result.agent.actor, h.warmup_trajectories, h.exploration_std, buffer, rng, warn);
    if (h.warmup_trajectories > 0 && result.warmup_kept == 0) {
        throw DivergenceError("warmup: every trajectory diverged");
    }
    // Stores left empty by discarded warmups are topped up by the episodes
    // themselves: the transition is stored before its timestep is sampled.
    result.logs.reserve(static_cast<std::size_t>(h.episodes));
    for (int n = 0; n < h.episodes; ++n) {
        result.logs.push_back(train_episode(spec, result.agent, buffer, h, rng, n));
        if (result.logs.back().diverged) {
            ++result.diverged_episodes;
            if (warn) warn("episode " + std::to_string(n) + " diverged");
        }
        if (progress) progress(result.logs.back());
    }
    result.failed = 2 * result.diverged_episodes > h.episodes;
    result.averaged_path = average_path(result.logs, window);
    return result;
}

}  // namespace omtp

#endif
