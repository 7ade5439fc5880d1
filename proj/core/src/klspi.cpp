#include "kaelspi/klspi.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <stdexcept>

namespace kaelspi {

Vector AldDictionary::kernel_vector(const Vector& z) const {
    Vector k(size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        k(static_cast<Index>(i)) = rbf_kernel(z, points[i], sigma);
    }
    return k;
}

AldDecision ald_admit(AldDictionary& dict, const Vector& z) {
    if (!(dict.sigma > 0.0) || !(dict.mu >= 0.0)) {
        throw ContractError("ald_admit: sigma must be > 0 and mu >= 0");
    }
    if (!dict.points.empty() && z.size() != dict.points.front().size()) {
        throw ContractError("ald_admit: candidate dimension mismatch");
    }
    const double kzz = rbf_kernel(z, z, dict.sigma);
    AldDecision d;
    if (dict.points.empty()) {
        d.delta = kzz;
        d.admitted = d.delta > dict.mu;
        if (d.admitted) {
            dict.points.push_back(z);
            dict.gram = Matrix::Constant(1, 1, kzz);
            dict.gram_inv = Matrix::Constant(1, 1, 1.0 / kzz);
        }
        return d;
    }
    const Vector kz = dict.kernel_vector(z);
    const Vector c = dict.gram_inv * kz;
    d.delta = kzz - kz.dot(c);
    d.admitted = d.delta > dict.mu;
    if (!d.admitted) {
        return d;
    }
    const Index m = dict.size();
    Matrix g(m + 1, m + 1);
    g.topLeftCorner(m, m) = dict.gram;
    g.topRightCorner(m, 1) = kz;
    g.bottomLeftCorner(1, m) = kz.transpose();
    g(m, m) = kzz;
    Matrix gi(m + 1, m + 1);
    const double inv_delta = 1.0 / d.delta;
    gi.topLeftCorner(m, m) = dict.gram_inv + inv_delta * (c * c.transpose());
    gi.topRightCorner(m, 1) = -inv_delta * c;
    gi.bottomLeftCorner(1, m) = -inv_delta * c.transpose();
    gi(m, m) = inv_delta;
    dict.gram = std::move(g);
    dict.gram_inv = std::move(gi);
    dict.points.push_back(z);
    return d;
}

void ald_sweep(AldDictionary& dict, std::span<const Vector> candidates) {
    auto less = [](const Vector& a, const Vector& b) {
        return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
    };
    std::set<Vector, decltype(less)> seen(less);
    for (const Vector& z : candidates) {
        if (!seen.insert(z).second) {
            continue;
        }
        ald_admit(dict, z);
    }
}

namespace {

std::optional<TablePolicy> deterministic_pi0(const ChainEnv& env, const KlspiOptions& options,
                                             std::size_t n_states) {
    const auto& acts = env.actions();
    const int lowest = *std::min_element(acts.begin(), acts.end());
    if (options.initial == InitialPolicy::lowest_action || acts.size() == 1) {
        return TablePolicy(n_states, lowest);
    }
    return std::nullopt;
}

}  // namespace

KlspiResult klspi(const ChainEnv& env, const KlspiOptions& options) {
    if (options.max_iterations < 1) throw ContractError("klspi: max_iterations must be >= 1");
    if (options.episodes < 1 || options.max_steps < 1) {
        throw ContractError("klspi: episodes and max_steps must be >= 1");
    }
    if (!(options.exploration >= 0.0 && options.exploration <= 1.0)) {
        throw ContractError("klspi: exploration must lie in [0, 1]");
    }
    if (!(options.gamma > 0.0 && options.gamma < 1.0)) throw ContractError("klspi: gamma must lie in (0, 1)");

    KernelInput input = KernelInput::chain(env.spec().n, options.scaling);
    const std::vector<State> states = env.states();
    const int lowest = *std::min_element(env.actions().begin(), env.actions().end());
    const Rng base(options.seed);

    KlspiResult result;
    std::optional<TablePolicy> prev_table = deterministic_pi0(env, options, states.size());
    std::optional<QWeights> prev_q;
    AldDictionary ald;
    ald.sigma = options.sigma;
    ald.mu = options.mu;

    for (int j = 1; j <= options.max_iterations; ++j) {
        BehaviorFn behavior = random_policy(env);
        if (prev_q) {
            behavior = epsilon_greedy(env, greedy_policy(*prev_q), options.exploration);
        }
        const Dataset data = collect_episodes(env, behavior, base.split(static_cast<std::uint64_t>(j)),
                                              options.episodes, options.max_steps, "klspi");

        if (!options.grow) {
            ald = AldDictionary{};
            ald.sigma = options.sigma;
            ald.mu = options.mu;
        }
        std::vector<Vector> candidates;
        candidates.reserve(data.size());
        for (const Transition& t : data.transitions) {
            candidates.push_back(input.join(t.s, t.a));
        }
        ald_sweep(ald, candidates);
        if (ald.size() == 0) {
            throw std::runtime_error("klspi: ALD produced an empty dictionary at iteration " + std::to_string(j));
        }
        auto dict = std::make_shared<KernelDictionary>(ald.points, ald.sigma, input);

        // Phi' under pi_{j-1}
        std::vector<StateAction> next;
        next.reserve(data.size());
        std::vector<State> s_next;
        s_next.reserve(data.size());
        for (const Transition& t : data.transitions) {
            s_next.push_back(t.s_next);
        }
        std::vector<int> next_actions;
        if (prev_q) {
            next_actions = greedy_actions(*prev_q->dict, prev_q->w, s_next);
        } else {
            for (const Transition& t : data.transitions) {
                next_actions.push_back(options.initial == InitialPolicy::lowest_action ? lowest : t.a_next);
            }
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            next.push_back({s_next[i], next_actions[i]});
        }

        const Matrix phi = dataset_features(data, *dict);
        const FixedPointSolution sol =
            solve_fixed_point(phi, eval_matrix(*dict, next), dataset_rewards(data), options.gamma);
        QWeights q{sol.w, dict, options.gamma};

        IterationRecord rec;
        rec.iteration = j;
        rec.w = sol.w;
        rec.rank = sol.rank;
        rec.degenerate = sol.degenerate;
        rec.weight_norm = sol.w.norm();
        rec.dictionary_size = static_cast<std::size_t>(dict->size());
        rec.policy = tabulate(q, states);
        if (prev_q) {
            const std::vector<int> now = greedy_actions(*dict, sol.w, s_next);
            std::size_t changed = 0;
            for (std::size_t i = 0; i < now.size(); ++i) changed += now[i] != next_actions[i] ? 1 : 0;
            rec.action_change_rate = static_cast<double>(changed) / static_cast<double>(now.size());
        }

        const bool converged = prev_table.has_value() && *prev_table == rec.policy;
        prev_table = rec.policy;
        result.trace.iterations.push_back(std::move(rec));
        result.q = q;
        prev_q = std::move(q);
        if (converged) {
            result.trace.converged = true;
            break;
        }
    }
    return result;
}

}  // namespace kaelspi
