#pragma once

#include "kaelspi/numkit.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace kaelspi {

/// Continuous or discrete state, stored as doubles (chain states are 1..n).
using State = std::vector<double>;

struct StateAction {
    State s;
    int a = 0;
};

/// Deterministic policy: state -> action id.
using ActionFn = std::function<int(const State&)>;
/// Possibly stochastic policy used while collecting data.
using BehaviorFn = std::function<int(const State&, Rng&)>;

// ---------------------------------------------------------------------------
// Chain walk

inline constexpr int kChainLeft = 1;
inline constexpr int kChainRight = 2;

struct ChainSpec {
    int n = 20;
    double p_success = 0.9;
    double gamma = 0.9;
    std::map<int, double> rewards;  ///< state -> reward; missing states pay 0
    std::vector<int> actions = {kChainLeft, kChainRight};

    /// Rewards at both ends.
    static ChainSpec chain20();
    /// Rewards at states 10 and 41.
    static ChainSpec chain50();

    double reward(int s) const;
    void validate() const;
};

struct ChainStep {
    int s_next;
    double r;
};

/// The intended move succeeds with probability p_success; the move is clamped
/// to [1, n]. The reward is the reward of the landing state.
ChainStep chain_step(const ChainSpec& spec, int s, int a, Rng& rng);

/// Exact successor distribution P(.|s,a) as (state, probability) pairs.
std::vector<std::pair<int, double>> chain_successors(const ChainSpec& spec, int s, int a);

// ---------------------------------------------------------------------------
// Inverted pendulum on a cart

struct PendulumSpec {
    double g = 9.8;
    double m = 2.0;  ///< pendulum mass
    double M = 8.0;  ///< cart mass
    double l = 0.5;
    double dt = 0.1;
    double gamma = 0.95;
    std::vector<double> forces = {-50.0, 0.0, 50.0};  ///< indexed by action id 0,1,2
    double noise_half_width = 10.0;
    /// Initial (theta, theta_dot) drawn uniformly in [-w, w]^2.
    double init_half_width = 0.2;

    double alpha() const { return 1.0 / (m + M); }
    void validate() const;
};

/// Angular acceleration of the pole for control force u.
double pendulum_accel(const PendulumSpec& spec, double theta, double theta_dot, double u);

struct PendulumStep {
    State s_next;
    double r;
    bool terminal;
};

/// One RK4 step of length dt with u held over all stages. With add_noise the
/// force gets uniform noise of noise_half_width. Reward is -1 iff the new
/// |theta| exceeds pi/2, which also ends the episode.
PendulumStep pendulum_step(const PendulumSpec& spec, const State& s, int a, Rng& rng,
                           bool add_noise);

/// Same step with an explicit force (used by the oracle comparisons).
State pendulum_rk4(const PendulumSpec& spec, const State& s, double u);

// ---------------------------------------------------------------------------
// Common environment surface

struct StepResult {
    State s_next;
    double r = 0.0;
    bool terminal = false;
};

class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string id() const = 0;
    virtual std::size_t state_dim() const = 0;
    virtual const std::vector<int>& actions() const = 0;
    virtual double gamma() const = 0;
    /// Scalar encoding of an action id used when (s, a) is joined into one vector.
    virtual double action_value(int a) const = 0;

    virtual State initial_state(Rng& rng) const = 0;
    virtual StepResult step(const State& s, int a, Rng& rng, bool add_noise) const = 0;

    /// Finite environments enumerate their states; continuous ones return empty.
    virtual std::vector<State> states() const { return {}; }
    bool finite() const { return !states().empty(); }
};

class ChainEnv final : public Environment {
public:
    explicit ChainEnv(ChainSpec spec);

    const ChainSpec& spec() const { return spec_; }

    std::string id() const override;
    std::size_t state_dim() const override { return 1; }
    const std::vector<int>& actions() const override { return spec_.actions; }
    double gamma() const override { return spec_.gamma; }
    double action_value(int a) const override { return static_cast<double>(a); }
    /// Uniform over {1..n}.
    State initial_state(Rng& rng) const override;
    StepResult step(const State& s, int a, Rng& rng, bool add_noise) const override;
    std::vector<State> states() const override;

private:
    ChainSpec spec_;
};

class PendulumEnv final : public Environment {
public:
    explicit PendulumEnv(PendulumSpec spec = {});

    const PendulumSpec& spec() const { return spec_; }

    std::string id() const override { return "pendulum"; }
    std::size_t state_dim() const override { return 2; }
    const std::vector<int>& actions() const override { return actions_; }
    double gamma() const override { return spec_.gamma; }
    double action_value(int a) const override;
    State initial_state(Rng& rng) const override;
    StepResult step(const State& s, int a, Rng& rng, bool add_noise) const override;

private:
    PendulumSpec spec_;
    std::vector<int> actions_;
};

// ---------------------------------------------------------------------------
// Data

struct Transition {
    State s;
    int a = 0;
    double r = 0.0;
    State s_next;
    int a_next = 0;  ///< action of the collecting policy at s_next
    bool terminal = false;  ///< s_next is absorbing; its Phi' row is zero
};

struct Dataset {
    std::string env_id;
    std::uint64_t seed = 0;
    std::string policy;
    int episodes = 0;
    int max_steps = 0;
    std::vector<Transition> transitions;

    std::size_t size() const { return transitions.size(); }
};

/// Uniformly random action among env.actions().
BehaviorFn random_policy(const Environment& env);

/// Wraps a deterministic policy with epsilon-uniform exploration.
BehaviorFn epsilon_greedy(const Environment& env, ActionFn greedy, double epsilon);

/// Runs `episodes` episodes of at most `max_steps` steps. Episode e uses
/// rng.split(e), so the dataset does not depend on evaluation order. Episodes
/// stop early only on terminal transitions. Noise follows the environment's
/// training setting (on).
Dataset collect_episodes(const Environment& env, const BehaviorFn& policy, const Rng& rng,
                         int episodes, int max_steps, std::string policy_name = "random");

struct BalanceReport {
    double mean_steps = 0.0;
    std::vector<int> steps;  ///< per trial
};

/// Noise-free rollouts from perturbed initial states; each trial counts the
/// steps completed with |theta| <= pi/2, capped at max_steps.
BalanceReport evaluate_policy_pendulum(const PendulumSpec& spec, const ActionFn& policy,
                                       const Rng& rng, int trials = 200, int max_steps = 3000);

/// Draws `realizations` successor states for each (s, a) pair.
std::vector<std::vector<State>> sample_successors(const Environment& env,
                                                  std::span<const StateAction> pairs,
                                                  int realizations, Rng& rng);

std::unique_ptr<Environment> make_environment(const std::string& id);

}  // namespace kaelspi
