#include "kaelspi/lstdq.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace kaelspi {

namespace {

std::vector<StateAction> current_pairs(const Dataset& data) {
    std::vector<StateAction> pairs;
    pairs.reserve(data.size());
    for (const Transition& t : data.transitions) {
        pairs.push_back({t.s, t.a});
    }
    return pairs;
}

std::vector<State> next_states(const Dataset& data) {
    std::vector<State> out;
    out.reserve(data.size());
    for (const Transition& t : data.transitions) {
        out.push_back(t.s_next);
    }
    return out;
}

/// Absorbing successors contribute no future value.
void zero_terminal_rows(const Dataset& data, Matrix& phi_next) {
    for (std::size_t i = 0; i < data.transitions.size(); ++i) {
        if (data.transitions[i].terminal) phi_next.row(static_cast<Index>(i)).setZero();
    }
}

void check_system(const Matrix& phi, const Matrix& phi_next, const Matrix& rewards) {
    if (phi.rows() < 1 || phi.cols() < 1) {
        throw ContractError("least-squares system: Phi must be non-empty");
    }
    if (phi_next.rows() != phi.rows() || phi_next.cols() != phi.cols()) {
        throw ContractError("least-squares system: Phi and Phi' shapes differ");
    }
    if (rewards.rows() != phi.rows() || rewards.cols() != 1) {
        throw ContractError("least-squares system: R must be L x 1");
    }
}

void check_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ContractError("gamma must lie in (0, 1)");
    }
}

FixedPointSolution solve_square(const Matrix& a, const Matrix& b, bool zero_features) {
    FixedPointSolution sol;
    if (zero_features) {
        sol.w = Vector::Zero(a.cols());
        sol.degenerate = true;
        return sol;
    }
    sol.rank = numerical_rank(a);
    sol.degenerate = sol.rank < a.cols();
    sol.w = lstsq(a, b).col(0);
    return sol;
}

std::vector<int> sorted_actions(const Dictionary& dict) {
    std::vector<int> acts = dict.actions();
    std::sort(acts.begin(), acts.end());
    return acts;
}

}  // namespace

Matrix dataset_features(const Dataset& data, const Dictionary& dict) {
    return eval_matrix(dict, current_pairs(data));
}

Matrix dataset_rewards(const Dataset& data) {
    Matrix r(static_cast<Index>(data.size()), 1);
    for (std::size_t i = 0; i < data.size(); ++i) {
        r(static_cast<Index>(i), 0) = data.transitions[i].r;
    }
    return r;
}

Matrix behavior_next_features(const Dataset& data, const Dictionary& dict) {
    std::vector<StateAction> pairs;
    pairs.reserve(data.size());
    for (const Transition& t : data.transitions) {
        pairs.push_back({t.s_next, t.a_next});
    }
    Matrix out = eval_matrix(dict, pairs);
    zero_terminal_rows(data, out);
    return out;
}

LinearSystem build_system(const Dataset& data, const Dictionary& dict, const ActionFn& policy) {
    if (data.size() < 1) {
        throw ContractError("build_system: empty dataset");
    }
    std::vector<StateAction> next;
    next.reserve(data.size());
    for (const Transition& t : data.transitions) {
        next.push_back({t.s_next, policy(t.s_next)});
    }
    Matrix phi_next = eval_matrix(dict, next);
    zero_terminal_rows(data, phi_next);
    return {dataset_features(data, dict), std::move(phi_next), dataset_rewards(data)};
}

FixedPointSolution solve_fixed_point(const Matrix& phi, const Matrix& phi_next,
                                     const Matrix& rewards, double gamma) {
    check_system(phi, phi_next, rewards);
    check_gamma(gamma);
    const Matrix a = phi.transpose() * (phi - gamma * phi_next);
    const Matrix b = phi.transpose() * rewards;
    return solve_square(a, b, phi.isZero(0.0));
}

Matrix estimate_koopman(const Matrix& phi, const Matrix& phi_next) {
    if (phi.rows() < 1 || phi.rows() != phi_next.rows() || phi.cols() != phi_next.cols()) {
        throw ContractError("estimate_koopman: Phi and Phi' must be non-empty and equal shape");
    }
    const double inv_l = 1.0 / static_cast<double>(phi.rows());
    const Matrix g = inv_l * (phi.transpose() * phi);
    const Matrix a = inv_l * (phi.transpose() * phi_next);
    return pinv(g) * a;
}

Matrix estimate_koopman_mc(std::span<const SuccessorGroup> groups, const Dictionary& dict,
                           const ActionFn& policy) {
    if (groups.empty()) {
        throw ContractError("estimate_koopman_mc: no groups");
    }
    std::vector<StateAction> xs;
    xs.reserve(groups.size());
    Matrix mean_next(static_cast<Index>(groups.size()), dict.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const SuccessorGroup& g = groups[i];
        if (g.successors.empty()) {
            throw ContractError("estimate_koopman_mc: group without realizations");
        }
        xs.push_back(g.x);
        std::vector<StateAction> next;
        next.reserve(g.successors.size());
        for (const State& s2 : g.successors) {
            next.push_back({s2, policy(s2)});
        }
        mean_next.row(static_cast<Index>(i)) = eval_matrix(dict, next).colwise().mean();
    }
    return estimate_koopman(eval_matrix(dict, xs), mean_next);
}

FixedPointSolution solve_koopman_form(const Matrix& phi, const Matrix& rewards, const Matrix& koopman,
                                      double gamma) {
    if (phi.rows() < 1 || phi.cols() < 1 || rewards.rows() != phi.rows() || rewards.cols() != 1) {
        throw ContractError("solve_koopman_form: Phi must be L x k and R L x 1");
    }
    if (koopman.rows() != phi.cols() || koopman.cols() != phi.cols()) {
        throw ContractError("solve_koopman_form: K must be k x k");
    }
    check_gamma(gamma);
    const Index k = phi.cols();
    const Matrix gram = phi.transpose() * phi;
    const Matrix a = gram * (Matrix::Identity(k, k) - gamma * koopman);
    const Matrix b = phi.transpose() * rewards;
    return solve_square(a, b, phi.isZero(0.0));
}

// ---------------------------------------------------------------------------

double QWeights::value(const State& s, int a) const { return dict->evaluate(s, a).dot(w); }

int QWeights::greedy(const State& s) const {
    const std::vector<int> acts = sorted_actions(*dict);
    int best = acts.front();
    double best_q = value(s, best);
    for (std::size_t i = 1; i < acts.size(); ++i) {
        const double q = value(s, acts[i]);
        if (q > best_q) {
            best_q = q;
            best = acts[i];
        }
    }
    return best;
}

ActionFn greedy_policy(const QWeights& q) {
    return [q](const State& s) { return q.greedy(s); };
}

std::vector<int> greedy_actions(const Dictionary& dict, const Vector& w, std::span<const State> states,
                                Matrix* next_phi) {
    const std::vector<int> acts = sorted_actions(dict);
    const auto n = static_cast<Index>(states.size());
    std::vector<Matrix> per_action;
    per_action.reserve(acts.size());
    Matrix q(n, static_cast<Index>(acts.size()));
    std::vector<StateAction> pairs(states.size());
    for (std::size_t j = 0; j < acts.size(); ++j) {
        for (std::size_t i = 0; i < states.size(); ++i) {
            pairs[i] = {states[i], acts[j]};
        }
        per_action.push_back(dict.eval_matrix(pairs));
        q.col(static_cast<Index>(j)) = per_action.back() * w;
    }
    std::vector<int> chosen(states.size());
    if (next_phi != nullptr) {
        next_phi->resize(n, dict.size());
    }
    for (Index i = 0; i < n; ++i) {
        Index best = 0;
        for (Index j = 1; j < q.cols(); ++j) {
            if (q(i, j) > q(i, best)) {
                best = j;
            }
        }
        chosen[static_cast<std::size_t>(i)] = acts[static_cast<std::size_t>(best)];
        if (next_phi != nullptr) {
            next_phi->row(i) = per_action[static_cast<std::size_t>(best)].row(i);
        }
    }
    return chosen;
}

TablePolicy tabulate(const QWeights& q, std::span<const State> states) {
    return greedy_actions(*q.dict, q.w, states);
}

LspiResult lspi_loop(const Matrix& phi, const Matrix& rewards, DictionaryPtr dict,
                     const NextFeatureFn& next_features, const LspiOptions& options,
                     const std::optional<TablePolicy>& pi0_table) {
    if (options.max_iterations < 1) {
        throw ContractError("lspi: max_iterations must be >= 1");
    }
    check_gamma(options.gamma);
    const bool finite = !options.finite_states.empty();

    LspiResult result;
    result.q = {Vector::Zero(dict->size()), dict, options.gamma};

    std::vector<int> current_actions;
    Matrix phi_next = next_features(nullptr, &current_actions);
    std::optional<TablePolicy> prev_table = pi0_table;
    std::optional<Vector> prev_w;

    for (int j = 1; j <= options.max_iterations; ++j) {
        const FixedPointSolution sol =
            options.mode == SolveMode::classical
                ? solve_fixed_point(phi, phi_next, rewards, options.gamma)
                : solve_koopman_form(phi, rewards, estimate_koopman(phi, phi_next), options.gamma);
        result.q.w = sol.w;

        IterationRecord rec;
        rec.iteration = j;
        rec.w = sol.w;
        rec.rank = sol.rank;
        rec.degenerate = sol.degenerate;
        rec.weight_norm = sol.w.norm();
        rec.weight_change = prev_w ? (sol.w - *prev_w).norm() : 0.0;
        rec.dictionary_size = static_cast<std::size_t>(dict->size());
        if (finite) {
            rec.policy = tabulate(result.q, options.finite_states);
        }

        std::vector<int> next_actions;
        Matrix next_phi = next_features(&result.q, &next_actions);
        if (!current_actions.empty() && next_actions.size() == current_actions.size()) {
            std::size_t changed = 0;
            for (std::size_t i = 0; i < next_actions.size(); ++i) {
                changed += next_actions[i] != current_actions[i] ? 1 : 0;
            }
            rec.action_change_rate = static_cast<double>(changed) / static_cast<double>(next_actions.size());
        }

        bool converged = false;
        if (finite) {
            converged = prev_table.has_value() && *prev_table == rec.policy;
            prev_table = rec.policy;
        } else {
            converged = prev_w.has_value() &&
                        rec.weight_change <= options.weight_tol * (1.0 + prev_w->norm());
        }
        prev_w = sol.w;
        result.trace.iterations.push_back(std::move(rec));
        if (converged) {
            result.trace.converged = true;
            break;
        }
        phi_next = std::move(next_phi);
        current_actions = std::move(next_actions);
    }
    return result;
}

LspiResult lspi(const Dataset& data, DictionaryPtr dict, const LspiOptions& options) {
    if (data.size() < 1) {
        throw ContractError("lspi: empty dataset");
    }
    const Matrix phi = dataset_features(data, *dict);
    const Matrix rewards = dataset_rewards(data);
    const std::vector<State> s_next = next_states(data);
    const int lowest = sorted_actions(*dict).front();
    const bool single_action = dict->actions().size() == 1;

    NextFeatureFn next = [&](const QWeights* current, std::vector<int>* actions) -> Matrix {
        if (current != nullptr) {
            Matrix out;
            *actions = greedy_actions(*dict, current->w, s_next, &out);
            zero_terminal_rows(data, out);
            return out;
        }
        std::vector<StateAction> pairs;
        pairs.reserve(data.size());
        actions->clear();
        for (const Transition& t : data.transitions) {
            const int a = options.initial == InitialPolicy::lowest_action ? lowest : t.a_next;
            pairs.push_back({t.s_next, a});
            actions->push_back(a);
        }
        Matrix out = eval_matrix(*dict, pairs);
        zero_terminal_rows(data, out);
        return out;
    };

    std::optional<TablePolicy> pi0;
    if (!options.finite_states.empty() &&
        (options.initial == InitialPolicy::lowest_action || single_action)) {
        pi0 = TablePolicy(options.finite_states.size(), lowest);
    }
    return lspi_loop(phi, rewards, dict, next, options, pi0);
}

}  // namespace kaelspi
