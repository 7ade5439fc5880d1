#include "kaelspi/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kaelspi {

// ---------------------------------------------------------------------------
// Chain walk

ChainSpec ChainSpec::chain20() {
    ChainSpec spec;
    spec.n = 20;
    spec.rewards = {{1, 1.0}, {20, 1.0}};
    return spec;
}

ChainSpec ChainSpec::chain50() {
    ChainSpec spec;
    spec.n = 50;
    spec.rewards = {{10, 1.0}, {41, 1.0}};
    return spec;
}

double ChainSpec::reward(int s) const {
    const auto it = rewards.find(s);
    return it == rewards.end() ? 0.0 : it->second;
}

void ChainSpec::validate() const {
    if (n < 1) {
        throw ContractError("ChainSpec: n must be >= 1");
    }
    if (!(p_success > 0.0 && p_success < 1.0)) {
        throw ContractError("ChainSpec: p_success must lie in (0, 1)");
    }
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ContractError("ChainSpec: gamma must lie in (0, 1)");
    }
    if (actions.empty()) {
        throw ContractError("ChainSpec: empty action set");
    }
    for (int a : actions) {
        if (a != kChainLeft && a != kChainRight) {
            throw ContractError("ChainSpec: actions must be 1 (left) or 2 (right)");
        }
    }
}

namespace {

void check_chain_args(const ChainSpec& spec, int s, int a) {
    if (s < 1 || s > spec.n) {
        throw ContractError("chain: state " + std::to_string(s) + " outside [1, " +
                            std::to_string(spec.n) + "]");
    }
    if (std::find(spec.actions.begin(), spec.actions.end(), a) == spec.actions.end()) {
        throw ContractError("chain: invalid action " + std::to_string(a));
    }
}

int chain_move(const ChainSpec& spec, int s, int direction) {
    return std::clamp(s + direction, 1, spec.n);
}

}  // namespace

ChainStep chain_step(const ChainSpec& spec, int s, int a, Rng& rng) {
    check_chain_args(spec, s, a);
    const int intended = a == kChainLeft ? -1 : 1;
    const int direction = rng.uniform01() < spec.p_success ? intended : -intended;
    const int s_next = chain_move(spec, s, direction);
    return {s_next, spec.reward(s_next)};
}

std::vector<std::pair<int, double>> chain_successors(const ChainSpec& spec, int s, int a) {
    check_chain_args(spec, s, a);
    const int intended = a == kChainLeft ? -1 : 1;
    const int ok = chain_move(spec, s, intended);
    const int fail = chain_move(spec, s, -intended);
    if (ok == fail) {
        return {{ok, 1.0}};
    }
    return {{ok, spec.p_success}, {fail, 1.0 - spec.p_success}};
}

ChainEnv::ChainEnv(ChainSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

std::string ChainEnv::id() const { return "chain" + std::to_string(spec_.n); }

State ChainEnv::initial_state(Rng& rng) const {
    return {static_cast<double>(1 + rng.choice(static_cast<std::size_t>(spec_.n)))};
}

StepResult ChainEnv::step(const State& s, int a, Rng& rng, bool /*add_noise*/) const {
    const ChainStep st = chain_step(spec_, static_cast<int>(s.at(0)), a, rng);
    return {{static_cast<double>(st.s_next)}, st.r, false};
}

std::vector<State> ChainEnv::states() const {
    std::vector<State> out;
    out.reserve(static_cast<std::size_t>(spec_.n));
    for (int s = 1; s <= spec_.n; ++s) {
        out.push_back({static_cast<double>(s)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pendulum

void PendulumSpec::validate() const {
    if (!(dt > 0.0)) {
        throw ContractError("PendulumSpec: dt must be > 0");
    }
    if (forces.size() != 3) {
        throw ContractError("PendulumSpec: exactly three actions expected");
    }
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ContractError("PendulumSpec: gamma must lie in (0, 1)");
    }
    if (init_half_width < 0.0 || noise_half_width < 0.0) {
        throw ContractError("PendulumSpec: negative half width");
    }
}

double pendulum_accel(const PendulumSpec& spec, double theta, double theta_dot, double u) {
    const double a = spec.alpha();
    const double c = std::cos(theta);
    const double num = spec.g * std::sin(theta) -
                       a * spec.m * spec.l * theta_dot * theta_dot * std::sin(2.0 * theta) / 2.0 -
                       a * c * u;
    const double den = 4.0 * spec.l / 3.0 - a * spec.m * spec.l * c * c;
    return num / den;
}

State pendulum_rk4(const PendulumSpec& spec, const State& s, double u) {
    const double h = spec.dt;
    const auto f = [&](double th, double w) {
        return std::pair{w, pendulum_accel(spec, th, w, u)};
    };
    const double th = s.at(0);
    const double w = s.at(1);
    const auto [k1t, k1w] = f(th, w);
    const auto [k2t, k2w] = f(th + 0.5 * h * k1t, w + 0.5 * h * k1w);
    const auto [k3t, k3w] = f(th + 0.5 * h * k2t, w + 0.5 * h * k2w);
    const auto [k4t, k4w] = f(th + h * k3t, w + h * k3w);
    return {th + h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t),
            w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)};
}

PendulumStep pendulum_step(const PendulumSpec& spec, const State& s, int a, Rng& rng,
                           bool add_noise) {
    if (a < 0 || a >= static_cast<int>(spec.forces.size())) {
        throw ContractError("pendulum: invalid action " + std::to_string(a));
    }
    double u = spec.forces[static_cast<std::size_t>(a)];
    if (add_noise && spec.noise_half_width > 0.0) {
        u += rng.uniform(-spec.noise_half_width, spec.noise_half_width);
    }
    State next = pendulum_rk4(spec, s, u);
    const bool fallen = std::abs(next[0]) > M_PI / 2.0;
    return {std::move(next), fallen ? -1.0 : 0.0, fallen};
}

PendulumEnv::PendulumEnv(PendulumSpec spec) : spec_(std::move(spec)), actions_{0, 1, 2} {
    spec_.validate();
}

double PendulumEnv::action_value(int a) const { return spec_.forces.at(static_cast<std::size_t>(a)); }

namespace {

State perturbed_origin(const PendulumSpec& spec, Rng& rng) {
    const double w = spec.init_half_width;
    if (w == 0.0) {
        return {0.0, 0.0};
    }
    const double th = rng.uniform(-w, w);
    const double thd = rng.uniform(-w, w);
    return {th, thd};
}

}  // namespace

State PendulumEnv::initial_state(Rng& rng) const { return perturbed_origin(spec_, rng); }

StepResult PendulumEnv::step(const State& s, int a, Rng& rng, bool add_noise) const {
    PendulumStep st = pendulum_step(spec_, s, a, rng, add_noise);
    return {std::move(st.s_next), st.r, st.terminal};
}

// ---------------------------------------------------------------------------
// Data collection

BehaviorFn random_policy(const Environment& env) {
    std::vector<int> actions = env.actions();
    return [actions](const State&, Rng& rng) { return actions[rng.choice(actions.size())]; };
}

BehaviorFn epsilon_greedy(const Environment& env, ActionFn greedy, double epsilon) {
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw ContractError("epsilon_greedy: epsilon must lie in [0, 1]");
    }
    std::vector<int> actions = env.actions();
    return [actions, greedy = std::move(greedy), epsilon](const State& s, Rng& rng) {
        if (rng.uniform01() < epsilon) {
            return actions[rng.choice(actions.size())];
        }
        return greedy(s);
    };
}

Dataset collect_episodes(const Environment& env, const BehaviorFn& policy, const Rng& rng,
                         int episodes, int max_steps, std::string policy_name) {
    if (episodes < 1 || max_steps < 1) {
        throw ContractError("collect_episodes: episodes and max_steps must be >= 1");
    }
    Dataset data;
    data.env_id = env.id();
    data.seed = rng.seed();
    data.policy = std::move(policy_name);
    data.episodes = episodes;
    data.max_steps = max_steps;
    data.transitions.reserve(static_cast<std::size_t>(episodes) * static_cast<std::size_t>(max_steps));

    for (int e = 0; e < episodes; ++e) {
        Rng ep_rng = rng.split(static_cast<std::uint64_t>(e));
        State s = env.initial_state(ep_rng);
        int a = policy(s, ep_rng);
        for (int t = 0; t < max_steps; ++t) {
            StepResult st = env.step(s, a, ep_rng, true);
            const int a_next = policy(st.s_next, ep_rng);
            data.transitions.push_back({s, a, st.r, st.s_next, a_next, st.terminal});
            if (st.terminal) {
                break;
            }
            s = std::move(st.s_next);
            a = a_next;
        }
    }
    return data;
}

BalanceReport evaluate_policy_pendulum(const PendulumSpec& spec, const ActionFn& policy,
                                       const Rng& rng, int trials, int max_steps) {
    if (trials < 1 || max_steps < 1) {
        throw ContractError("evaluate_policy_pendulum: trials and max_steps must be >= 1");
    }
    BalanceReport report;
    report.steps.reserve(static_cast<std::size_t>(trials));
    double total = 0.0;
    for (int t = 0; t < trials; ++t) {
        Rng trial_rng = rng.split(static_cast<std::uint64_t>(t));
        State s = perturbed_origin(spec, trial_rng);
        int survived = 0;
        for (int k = 0; k < max_steps; ++k) {
            const int a = policy(s);
            PendulumStep st = pendulum_step(spec, s, a, trial_rng, false);
            if (st.terminal) {
                break;
            }
            s = std::move(st.s_next);
            ++survived;
        }
        report.steps.push_back(survived);
        total += survived;
    }
    report.mean_steps = total / trials;
    return report;
}

std::vector<std::vector<State>> sample_successors(const Environment& env,
                                                  std::span<const StateAction> pairs,
                                                  int realizations, Rng& rng) {
    if (realizations < 1) {
        throw ContractError("sample_successors: realizations must be >= 1");
    }
    std::vector<std::vector<State>> out(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out[i].reserve(static_cast<std::size_t>(realizations));
        for (int j = 0; j < realizations; ++j) {
            out[i].push_back(env.step(pairs[i].s, pairs[i].a, rng, true).s_next);
        }
    }
    return out;
}

std::unique_ptr<Environment> make_environment(const std::string& id) {
    if (id == "chain20") {
        return std::make_unique<ChainEnv>(ChainSpec::chain20());
    }
    if (id == "chain50") {
        return std::make_unique<ChainEnv>(ChainSpec::chain50());
    }
    if (id == "pendulum") {
        return std::make_unique<PendulumEnv>();
    }
    throw ContractError("unknown environment '" + id + "'");
}

}  // namespace kaelspi
