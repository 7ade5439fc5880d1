#pragma once

// Model-based ground truth for finite MDPs.

#include "kaelspi/dict.hpp"
#include "kaelspi/envs.hpp"
#include "kaelspi/numkit.hpp"

#include <vector>

namespace kaelspi {

/// Deterministic policy over a finite state list: action id per state index.
using TablePolicy = std::vector<int>;

struct TabularMdp {
    std::vector<State> states;
    std::vector<int> actions;  ///< action ids, slot order
    /// Row s * m + a holds P(. | s, a) over state indices.
    Matrix transitions;
    /// Expected immediate reward sum_s' P(s'|s,a) R(s,a,s').
    Vector rewards;
    double gamma = 0.9;

    Index n_states() const { return static_cast<Index>(states.size()); }
    Index n_actions() const { return static_cast<Index>(actions.size()); }
    Index pair_index(Index s, Index a) const { return s * n_actions() + a; }

    void validate() const;

    /// Shares the chain sampler's reward convention (reward of the landing state).
    static TabularMdp from_chain(const ChainSpec& spec);
};

/// Exact Q^pi by a direct solve of (I - gamma P_pi) q = r over all n*m pairs.
/// Returns an n x m matrix.
Matrix exact_policy_eval(const TabularMdp& mdp, const TablePolicy& policy);

/// Greedy action ids from a Q table; ties go to the lowest action id.
TablePolicy greedy_from_q(const TabularMdp& mdp, const Matrix& q);

struct ValueIterationResult {
    Matrix q;
    TablePolicy policy;
    int sweeps = 0;
};

/// Iterates the optimal Bellman operator until the sup-norm change is < tol.
ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = 1e-12,
                                     int max_sweeps = 100000);

/// Exact policy iteration from pi0. Returns pi_1, pi_2, ... up to and
/// including the first repeated policy.
std::vector<TablePolicy> policy_iteration(const TabularMdp& mdp, const TablePolicy& pi0,
                                          int max_iterations = 1000);

/// Rows sum_s' P(s'|s,a) phi(s', pi(s')) for every pair in pair_index order.
Matrix expected_next_features(const TabularMdp& mdp, const Dictionary& dict,
                              const TablePolicy& policy);

/// Phi over every pair in pair_index order.
Matrix all_pair_features(const TabularMdp& mdp, const Dictionary& dict);

/// Exact-expectation Koopman matrix: least-squares fit of
/// expected_next_features against phi(s, a) over all pairs.
Matrix exact_koopman(const TabularMdp& mdp, const Dictionary& dict, const TablePolicy& policy);

/// Bellman backup of Q under a fixed policy (used for fixed-point checks).
Matrix bellman_backup(const TabularMdp& mdp, const TablePolicy& policy, const Matrix& q);

/// Fraction of states on which two policies agree.
double policy_agreement(const TablePolicy& a, const TablePolicy& b);

}  // namespace kaelspi
