#include "kaelspi/oracle.hpp"

#include <cmath>

namespace kaelspi {

void TabularMdp::validate() const {
    const Index nm = n_states() * n_actions();
    if (n_states() < 1 || n_actions() < 1) {
        throw ContractError("TabularMdp: empty state or action set");
    }
    if (transitions.rows() != nm || transitions.cols() != n_states() || rewards.size() != nm) {
        throw ContractError("TabularMdp: inconsistent shapes");
    }
    for (Index i = 0; i < nm; ++i) {
        if (std::abs(transitions.row(i).sum() - 1.0) > 1e-12) {
            throw ContractError("TabularMdp: transition row does not sum to 1");
        }
    }
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ContractError("TabularMdp: gamma must lie in (0, 1)");
    }
}

TabularMdp TabularMdp::from_chain(const ChainSpec& spec) {
    spec.validate();
    TabularMdp mdp;
    mdp.gamma = spec.gamma;
    mdp.actions = spec.actions;
    for (int s = 1; s <= spec.n; ++s) {
        mdp.states.push_back({static_cast<double>(s)});
    }
    const Index m = mdp.n_actions();
    mdp.transitions = Matrix::Zero(spec.n * m, spec.n);
    mdp.rewards = Vector::Zero(spec.n * m);
    for (int s = 1; s <= spec.n; ++s) {
        for (Index a = 0; a < m; ++a) {
            const Index row = mdp.pair_index(s - 1, a);
            for (const auto& [s2, p] : chain_successors(spec, s, spec.actions[static_cast<std::size_t>(a)])) {
                mdp.transitions(row, s2 - 1) += p;
                mdp.rewards(row) += p * spec.reward(s2);
            }
        }
    }
    mdp.validate();
    return mdp;
}

namespace {

Index slot_of(const TabularMdp& mdp, int action_id) {
    return static_cast<Index>(action_slot(mdp.actions, action_id));
}

void check_policy(const TabularMdp& mdp, const TablePolicy& policy) {
    if (static_cast<Index>(policy.size()) != mdp.n_states()) {
        throw ContractError("policy length does not match state count");
    }
    for (int a : policy) {
        slot_of(mdp, a);
    }
}

}  // namespace

Matrix exact_policy_eval(const TabularMdp& mdp, const TablePolicy& policy) {
    check_policy(mdp, policy);
    const Index n = mdp.n_states();
    const Index m = mdp.n_actions();
    const Index nm = n * m;
    // P_pi[(s,a), (s',a')] = P(s'|s,a) [a' = pi(s')]
    Matrix system = Matrix::Identity(nm, nm);
    for (Index row = 0; row < nm; ++row) {
        for (Index s2 = 0; s2 < n; ++s2) {
            const double p = mdp.transitions(row, s2);
            if (p != 0.0) {
                const Index col = mdp.pair_index(s2, slot_of(mdp, policy[static_cast<std::size_t>(s2)]));
                system(row, col) -= mdp.gamma * p;
            }
        }
    }
    const Vector q = system.partialPivLu().solve(mdp.rewards);
    Matrix out(n, m);
    for (Index s = 0; s < n; ++s) {
        for (Index a = 0; a < m; ++a) {
            out(s, a) = q(mdp.pair_index(s, a));
        }
    }
    return out;
}

TablePolicy greedy_from_q(const TabularMdp& mdp, const Matrix& q) {
    TablePolicy policy(static_cast<std::size_t>(mdp.n_states()));
    for (Index s = 0; s < mdp.n_states(); ++s) {
        Index best = 0;
        for (Index a = 1; a < mdp.n_actions(); ++a) {
            if (q(s, a) > q(s, best)) {
                best = a;
            }
        }
        policy[static_cast<std::size_t>(s)] = mdp.actions[static_cast<std::size_t>(best)];
    }
    return policy;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol, int max_sweeps) {
    if (!(tol > 0.0)) {
        throw ContractError("value_iteration: tol must be > 0");
    }
    mdp.validate();
    const Index n = mdp.n_states();
    const Index m = mdp.n_actions();
    Matrix q = Matrix::Zero(n, m);
    ValueIterationResult res;
    for (res.sweeps = 1; res.sweeps <= max_sweeps; ++res.sweeps) {
        const Vector v = q.rowwise().maxCoeff();
        const Vector backed = mdp.rewards + mdp.gamma * (mdp.transitions * v);
        Matrix next(n, m);
        for (Index s = 0; s < n; ++s) {
            for (Index a = 0; a < m; ++a) {
                next(s, a) = backed(mdp.pair_index(s, a));
            }
        }
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        if (change < tol) {
            break;
        }
    }
    res.q = q;
    res.policy = greedy_from_q(mdp, q);
    return res;
}

std::vector<TablePolicy> policy_iteration(const TabularMdp& mdp, const TablePolicy& pi0,
                                          int max_iterations) {
    std::vector<TablePolicy> seq;
    TablePolicy current = pi0;
    for (int it = 0; it < max_iterations; ++it) {
        TablePolicy next = greedy_from_q(mdp, exact_policy_eval(mdp, current));
        seq.push_back(next);
        if (next == current) {
            break;
        }
        current = std::move(next);
    }
    return seq;
}

Matrix all_pair_features(const TabularMdp& mdp, const Dictionary& dict) {
    std::vector<StateAction> pairs;
    for (Index s = 0; s < mdp.n_states(); ++s) {
        for (Index a = 0; a < mdp.n_actions(); ++a) {
            pairs.push_back({mdp.states[static_cast<std::size_t>(s)], mdp.actions[static_cast<std::size_t>(a)]});
        }
    }
    return eval_matrix(dict, pairs);
}

Matrix expected_next_features(const TabularMdp& mdp, const Dictionary& dict,
                              const TablePolicy& policy) {
    check_policy(mdp, policy);
    const Index n = mdp.n_states();
    // phi(s', pi(s')) for every s'
    std::vector<StateAction> next_pairs;
    for (Index s2 = 0; s2 < n; ++s2) {
        next_pairs.push_back({mdp.states[static_cast<std::size_t>(s2)], policy[static_cast<std::size_t>(s2)]});
    }
    const Matrix next_phi = eval_matrix(dict, next_pairs);
    return mdp.transitions * next_phi;
}

Matrix exact_koopman(const TabularMdp& mdp, const Dictionary& dict, const TablePolicy& policy) {
    return lstsq(all_pair_features(mdp, dict), expected_next_features(mdp, dict, policy));
}

Matrix bellman_backup(const TabularMdp& mdp, const TablePolicy& policy, const Matrix& q) {
    check_policy(mdp, policy);
    const Index n = mdp.n_states();
    Vector v(n);
    for (Index s = 0; s < n; ++s) {
        v(s) = q(s, slot_of(mdp, policy[static_cast<std::size_t>(s)]));
    }
    const Vector backed = mdp.rewards + mdp.gamma * (mdp.transitions * v);
    Matrix out(n, mdp.n_actions());
    for (Index s = 0; s < n; ++s) {
        for (Index a = 0; a < mdp.n_actions(); ++a) {
            out(s, a) = backed(mdp.pair_index(s, a));
        }
    }
    return out;
}

double policy_agreement(const TablePolicy& a, const TablePolicy& b) {
    if (a.size() != b.size() || a.empty()) {
        throw ContractError("policy_agreement: policies must have equal non-zero length");
    }
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        same += a[i] == b[i] ? 1 : 0;
    }
    return static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace kaelspi
