#pragma once

// Least-squares fixed-point policy evaluation, in its classical form and in
// the Koopman-matrix form, plus the policy-iteration loop built on both.

#include "kaelspi/dict.hpp"
#include "kaelspi/envs.hpp"
#include "kaelspi/numkit.hpp"
#include "kaelspi/oracle.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace kaelspi {

struct LinearSystem {
    Matrix phi;       ///< L x k, rows phi(s_i, a_i)
    Matrix phi_next;  ///< L x k, rows phi(s'_i, pi(s'_i))
    Matrix rewards;   ///< L x 1
};

/// Phi', when built here, uses `policy` (the policy being evaluated), not the
/// stored collection actions. Rows of terminal transitions are zero.
LinearSystem build_system(const Dataset& data, const Dictionary& dict, const ActionFn& policy);

/// Phi' from the stored a_next column (the collecting policy); terminal rows zero.
Matrix behavior_next_features(const Dataset& data, const Dictionary& dict);

Matrix dataset_features(const Dataset& data, const Dictionary& dict);
Matrix dataset_rewards(const Dataset& data);

struct FixedPointSolution {
    Vector w;
    Index rank = 0;           ///< numerical rank of the k x k system matrix
    bool degenerate = false;  ///< rank-deficient system or all-zero features
};

/// Minimum-norm solution of Phi^T (Phi - gamma Phi') w = Phi^T R.
FixedPointSolution solve_fixed_point(const Matrix& phi, const Matrix& phi_next,
                                     const Matrix& rewards, double gamma);

/// K = pinv(Phi^T Phi / L) (Phi^T Phi' / L).
Matrix estimate_koopman(const Matrix& phi, const Matrix& phi_next);

/// One (s, a) with several sampled successor states.
struct SuccessorGroup {
    StateAction x;
    std::vector<State> successors;
};

/// Monte-Carlo Koopman estimate: each group contributes one row phi(s, a)
/// paired with the mean of phi(s'^(j), pi(s'^(j))) over its realizations.
Matrix estimate_koopman_mc(std::span<const SuccessorGroup> groups, const Dictionary& dict,
                           const ActionFn& policy);

/// Minimum-norm solution of Phi^T Phi (I - gamma K) w = Phi^T R.
FixedPointSolution solve_koopman_form(const Matrix& phi, const Matrix& rewards, const Matrix& koopman,
                                      double gamma);

struct QWeights {
    Vector w;
    DictionaryPtr dict;
    double gamma = 0.0;

    double value(const State& s, int a) const;
    /// argmax_a phi(s, a) w; ties go to the lowest action id.
    int greedy(const State& s) const;
};

ActionFn greedy_policy(const QWeights& q);

/// Batched greedy actions. When `next_phi` is given it receives the feature
/// rows phi(s_i, greedy(s_i)).
std::vector<int> greedy_actions(const Dictionary& dict, const Vector& w, std::span<const State> states,
                                Matrix* next_phi = nullptr);

enum class SolveMode { classical, koopman };
enum class InitialPolicy {
    lowest_action,  ///< constant lowest action id
    behavior,       ///< the collection policy (stored a_next)
};

struct LspiOptions {
    double gamma = 0.9;
    int max_iterations = 20;
    SolveMode mode = SolveMode::classical;
    InitialPolicy initial = InitialPolicy::lowest_action;
    /// Non-empty for finite environments: convergence is exact policy equality
    /// on these states. Otherwise the weight test below is used.
    std::vector<State> finite_states;
    double weight_tol = 1e-3;
};

struct IterationRecord {
    int iteration = 0;  ///< 1-based; holds pi_iteration = greedy(Q^{pi_{iteration-1}})
    Vector w;
    TablePolicy policy;  ///< greedy policy on finite_states (empty when continuous)
    double weight_norm = 0.0;
    double weight_change = 0.0;       ///< ||w_j - w_{j-1}||, 0 for the first iteration
    double action_change_rate = 0.0;  ///< share of dataset next-states whose greedy action changed
    Index rank = 0;
    bool degenerate = false;
    std::size_t dictionary_size = 0;  ///< features used in this iteration
};

struct PolicyIterTrace {
    std::vector<IterationRecord> iterations;
    bool converged = false;

    int iteration_count() const { return static_cast<int>(iterations.size()); }
};

struct LspiResult {
    QWeights q;
    PolicyIterTrace trace;
};

/// Produces Phi' for the greedy policy of `current`, or for the initial policy
/// when `current` is null. `actions`, if non-null, receives the chosen action
/// per row (used for the action-change metric).
using NextFeatureFn = std::function<Matrix(const QWeights* current, std::vector<int>* actions)>;

/// Generic policy-iteration loop over a fixed (Phi, R). `pi0_table` is the
/// initial policy on finite_states when it is deterministic and known.
LspiResult lspi_loop(const Matrix& phi, const Matrix& rewards, DictionaryPtr dict,
                     const NextFeatureFn& next_features, const LspiOptions& options,
                     const std::optional<TablePolicy>& pi0_table);

/// Policy iteration on a sampled dataset. Phi and R are computed once.
LspiResult lspi(const Dataset& data, DictionaryPtr dict, const LspiOptions& options);

/// Greedy policy of q tabulated on a finite state list.
TablePolicy tabulate(const QWeights& q, std::span<const State> states);

}  // namespace kaelspi
