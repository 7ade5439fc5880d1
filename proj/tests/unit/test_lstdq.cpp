#include "kaelspi/dict.hpp"
#include "kaelspi/lstdq.hpp"
#include "kaelspi/oracle.hpp"
#include "kaelspi/verify.hpp"

#include <gtest/gtest.h>

#include <memory>

using namespace kaelspi;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

Dataset chain20_data(std::uint64_t seed, int episodes = 1000) {
    const ChainEnv env(ChainSpec::chain20());
    return collect_episodes(env, random_policy(env), Rng(seed), episodes, 20);
}

TablePolicy chain20_optimal() {
    TablePolicy p(20, kChainRight);
    for (int i = 0; i < 10; ++i) p[std::size_t(i)] = kChainLeft;
    return p;
}

/// Constant single feature for every action.
class ConstantDictionary final : public Dictionary {
public:
    explicit ConstantDictionary(std::vector<int> actions) : actions_(std::move(actions)) {}
    Index size() const override { return 1; }
    const std::vector<int>& actions() const override { return actions_; }
    std::string kind() const override { return "constant"; }
    RowVector evaluate(const State&, int) const override { return RowVector::Ones(1); }

private:
    std::vector<int> actions_;
};

}  // namespace

TEST(BuildSystem, Shapes) {
    const Dataset d = chain20_data(0);
    const PolyDictionary dict(4, {kChainLeft, kChainRight});
    const LinearSystem sys = build_system(d, dict, [](const State&) { return kChainLeft; });
    EXPECT_EQ(sys.phi.rows(), 20000);
    EXPECT_EQ(sys.phi.cols(), 10);
    EXPECT_EQ(sys.phi_next.rows(), 20000);
    EXPECT_EQ(sys.rewards.rows(), 20000);
    EXPECT_EQ(sys.rewards.cols(), 1);
}

TEST(BuildSystem, SingleTransition) {
    Dataset d = chain20_data(0, 1);
    d.transitions.resize(1);
    const PolyDictionary dict(2, {kChainLeft, kChainRight});
    const LinearSystem sys = build_system(d, dict, [](const State&) { return kChainRight; });
    EXPECT_EQ(sys.phi.rows(), 1);
    EXPECT_EQ(sys.rewards(0, 0), d.transitions[0].r);
}

TEST(BuildSystem, CollectionPolicyMatchesStoredNextActions) {
    const Dataset d = chain20_data(1, 50);
    const PolyDictionary dict(4, {kChainLeft, kChainRight});
    // replay the stored a_next as a "policy" keyed on row order
    std::size_t row = 0;
    const LinearSystem sys =
        build_system(d, dict, [&](const State&) { return d.transitions[row++].a_next; });
    EXPECT_EQ(sys.phi_next, behavior_next_features(d, dict));
}

TEST(BuildSystem, TerminalRowsHaveZeroNextFeatures) {
    const PendulumEnv env;
    const Dataset d = collect_episodes(env, random_policy(env), Rng(2), 100, 20);
    const RbfDictionary dict(RbfGrid::pendulum(), env.actions());
    const LinearSystem sys = build_system(d, dict, [](const State&) { return 1; });
    int terminals = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.transitions[i].terminal) {
            ++terminals;
            EXPECT_EQ(sys.phi_next.row(Index(i)).norm(), 0.0);
        } else {
            EXPECT_GT(sys.phi_next.row(Index(i)).norm(), 0.0);
        }
    }
    EXPECT_GT(terminals, 0);
}

TEST(FixedPoint, ConstantFeatureRegressesToMean) {
    const Dataset d = chain20_data(3, 100);
    const ConstantDictionary dict({kChainLeft, kChainRight});
    const LinearSystem sys = build_system(d, dict, [](const State&) { return kChainLeft; });
    const FixedPointSolution sol = solve_fixed_point(sys.phi, sys.phi_next, sys.rewards, 1e-300);
    EXPECT_NEAR(sol.w(0), sys.rewards.mean(), 1e-14);
}

TEST(FixedPoint, TabularExpectedFeaturesGiveExactQ) {
    ChainSpec spec = ChainSpec::chain20();
    spec.n = 3;
    spec.rewards = {{1, 1.0}};
    const TabularMdp mdp = TabularMdp::from_chain(spec);
    const TabularDictionary dict(mdp.states, mdp.actions);
    for (const TablePolicy& pi : {TablePolicy{1, 1, 1}, TablePolicy{2, 1, 2}, TablePolicy{2, 2, 2}}) {
        const Matrix phi = all_pair_features(mdp, dict);
        const Matrix phi_next = expected_next_features(mdp, dict, pi);
        const FixedPointSolution sol = solve_fixed_point(phi, phi_next, mdp.rewards, mdp.gamma);
        const Matrix q = exact_policy_eval(mdp, pi);
        for (Index s = 0; s < 3; ++s) {
            for (Index a = 0; a < 2; ++a) {
                EXPECT_NEAR(sol.w(dict.index_of(mdp.states[std::size_t(s)], mdp.actions[std::size_t(a)])), q(s, a),
                            1e-10);
            }
        }
    }
}

TEST(FixedPoint, ResidualProperty) {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        const Matrix phi = random_matrix(60, 6, rng);
        const Matrix phi_next = random_matrix(60, 6, rng);
        const Matrix r = random_matrix(60, 1, rng);
        const double gamma = rng.uniform(0.05, 0.95);
        const FixedPointSolution sol = solve_fixed_point(phi, phi_next, r, gamma);
        const Matrix b = phi.transpose() * r;
        EXPECT_LE((phi.transpose() * (phi - gamma * phi_next) * sol.w - b).norm(), 1e-8 * b.norm());
        EXPECT_FALSE(sol.degenerate);
        EXPECT_EQ(sol.rank, 6);
    }
}

TEST(FixedPoint, ZeroFeaturesAreDegenerate) {
    const FixedPointSolution sol = solve_fixed_point(Matrix::Zero(5, 3), Matrix::Zero(5, 3), Matrix::Ones(5, 1), 0.9);
    EXPECT_TRUE(sol.degenerate);
    EXPECT_EQ(sol.w.norm(), 0.0);
}

TEST(Koopman, IdentityWhenNextEqualsCurrent) {
    Rng rng(1);
    const Matrix phi = random_matrix(40, 5, rng);
    EXPECT_LT((estimate_koopman(phi, phi) - Matrix::Identity(5, 5)).norm(), 1e-10);
}

TEST(Koopman, RecoversPlantedMatrix) {
    Rng rng(2);
    const Matrix phi = random_matrix(50, 4, rng);
    const Matrix k = random_matrix(4, 4, rng);
    EXPECT_LT((estimate_koopman(phi, phi * k) - k).norm(), 1e-9 * k.norm());
}

TEST(Koopman, NormalEquationIdentity) {
    Rng rng(3);
    for (int t = 0; t < 30; ++t) {
        const Matrix phi = random_matrix(80, 7, rng);
        const Matrix phi_next = random_matrix(80, 7, rng);
        const Matrix lhs = phi.transpose() * phi * estimate_koopman(phi, phi_next);
        const Matrix rhs = phi.transpose() * phi_next;
        EXPECT_LE((lhs - rhs).norm(), 1e-8 * rhs.norm());
    }
}

TEST(Koopman, FormEquivalenceOnRandomInstances) {
    const EquivalenceReport rep = check_formulation_equivalence(100, 1);
    EXPECT_EQ(rep.instances, 100);
    EXPECT_LE(rep.max_relative_error, 1e-8);
}

TEST(Koopman, ZeroOperatorReducesToRegression) {
    Rng rng(4);
    const Matrix phi = random_matrix(30, 4, rng);
    const Matrix r = random_matrix(30, 1, rng);
    const FixedPointSolution sol = solve_koopman_form(phi, r, Matrix::Zero(4, 4), 0.9);
    EXPECT_LT(relative_error(sol.w, lstsq(phi, r)), 1e-10);
}

TEST(KoopmanMc, SingleRealizationEqualsPlainEstimate) {
    const ChainEnv env(ChainSpec::chain20());
    const Dataset d = chain20_data(5, 30);
    const PolyDictionary dict(4, env.actions());
    const ActionFn pi = [](const State& s) { return s[0] <= 10 ? kChainLeft : kChainRight; };
    std::vector<SuccessorGroup> groups;
    for (const Transition& t : d.transitions) groups.push_back({{t.s, t.a}, {t.s_next}});
    const LinearSystem sys = build_system(d, dict, pi);
    EXPECT_LT(relative_error(estimate_koopman_mc(groups, dict, pi), estimate_koopman(sys.phi, sys.phi_next)), 1e-12);
}

TEST(KoopmanMc, DeterministicSuccessorsIndependentOfCount) {
    const PendulumEnv env;
    PendulumSpec spec;
    spec.noise_half_width = 0.0;
    const RbfDictionary dict(RbfGrid::pendulum(), env.actions());
    const ActionFn pi = [](const State& s) { return s[0] > 0 ? 0 : 2; };
    Rng rng(6);
    std::vector<SuccessorGroup> one;
    std::vector<SuccessorGroup> many;
    for (int i = 0; i < 40; ++i) {
        const State s = {rng.uniform(-0.5, 0.5), rng.uniform(-1, 1)};
        const int a = int(rng.choice(3));
        const State s2 = pendulum_rk4(spec, s, spec.forces[std::size_t(a)]);
        one.push_back({{s, a}, {s2}});
        many.push_back({{s, a}, std::vector<State>(7, s2)});
    }
    EXPECT_LT(relative_error(estimate_koopman_mc(many, dict, pi), estimate_koopman_mc(one, dict, pi)), 1e-10);
}

TEST(KoopmanMc, ConvergesToExactExpectation) {
    const ChainSpec spec = ChainSpec::chain20();
    const ChainEnv env(spec);
    const TabularMdp mdp = TabularMdp::from_chain(spec);
    const TabularDictionary dict(mdp.states, mdp.actions);
    const TablePolicy pi_table = chain20_optimal();
    const ActionFn pi = [&](const State& s) { return pi_table[std::size_t(s[0]) - 1]; };
    std::vector<StateAction> pairs;
    for (const State& s : mdp.states) {
        for (int a : mdp.actions) pairs.push_back({s, a});
    }
    Rng rng(7);
    const auto succ = sample_successors(env, pairs, 10000, rng);
    std::vector<SuccessorGroup> groups;
    for (std::size_t i = 0; i < pairs.size(); ++i) groups.push_back({pairs[i], succ[i]});
    const Matrix mc = estimate_koopman_mc(groups, dict, pi);
    const Matrix exact = exact_koopman(mdp, dict, pi_table);
    EXPECT_LT((mc - exact).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(KoopmanSampled, TabularEntriesWithinBinomialBounds) {
    const ChainSpec spec = ChainSpec::chain20();
    const TabularMdp mdp = TabularMdp::from_chain(spec);
    const TabularDictionary dict(mdp.states, mdp.actions);
    const TablePolicy pi_table = chain20_optimal();
    const ActionFn pi = [&](const State& s) { return pi_table[std::size_t(s[0]) - 1]; };
    const Dataset d = chain20_data(9);
    const LinearSystem sys = build_system(d, dict, pi);
    const Matrix k = estimate_koopman(sys.phi, sys.phi_next);
    const Matrix exact = exact_koopman(mdp, dict, pi_table);
    const Vector visits = sys.phi.colwise().sum().transpose();
    double worst = 0.0;
    for (Index r = 0; r < k.rows(); ++r) {
        for (Index c = 0; c < k.cols(); ++c) {
            const double p = exact(r, c);
            const double sd = std::sqrt(std::max(p * (1 - p), 1e-300) / visits(r));
            if (p > 0.0 && p < 1.0) worst = std::max(worst, std::abs(k(r, c) - p) / sd);
            if (p == 0.0) EXPECT_EQ(k(r, c), 0.0);
        }
    }
    // 80 random entries at 4 sigma (3 sigma per entry would be exceeded by chance)
    EXPECT_LT(worst, 4.0);
}

TEST(KoopmanSampled, PolyWithinFivePercentOfExact) {
    const ChainSpec spec = ChainSpec::chain20();
    const TabularMdp mdp = TabularMdp::from_chain(spec);
    const PolyDictionary dict(4, mdp.actions);
    const TablePolicy pi_table = chain20_optimal();
    const ActionFn pi = [&](const State& s) { return pi_table[std::size_t(s[0]) - 1]; };
    const LinearSystem sys = build_system(chain20_data(10), dict, pi);
    EXPECT_LT(relative_error(estimate_koopman(sys.phi, sys.phi_next), exact_koopman(mdp, dict, pi_table)), 0.05);
}

TEST(Greedy, ZeroWeightsPickLowestAction) {
    auto dict = std::make_shared<PolyDictionary>(4, std::vector<int>{kChainRight, kChainLeft});
    const QWeights q{Vector::Zero(10), dict, 0.9};
    for (int s = 1; s <= 20; ++s) EXPECT_EQ(q.greedy({double(s)}), kChainLeft);
}

TEST(Greedy, ExactQStarGivesOptimalPolicy) {
    const TabularMdp mdp = TabularMdp::from_chain(ChainSpec::chain20());
    auto dict = std::make_shared<TabularDictionary>(mdp.states, mdp.actions);
    const ValueIterationResult vi = value_iteration(mdp);
    Vector w(40);
    for (Index s = 0; s < 20; ++s) {
        for (Index a = 0; a < 2; ++a) w(dict->index_of(mdp.states[std::size_t(s)], mdp.actions[std::size_t(a)])) = vi.q(s, a);
    }
    EXPECT_EQ(tabulate(QWeights{w, dict, 0.9}, mdp.states), chain20_optimal());
}

TEST(Greedy, InvariantUnderPositiveScaling) {
    auto dict = std::make_shared<RbfDictionary>(RbfGrid::pendulum(), std::vector<int>{0, 1, 2});
    Rng rng(11);
    std::vector<State> states;
    for (int i = 0; i < 200; ++i) states.push_back({rng.uniform(-1.5, 1.5), rng.uniform(-3, 3)});
    for (int t = 0; t < 10; ++t) {
        Vector w(30);
        for (Index i = 0; i < 30; ++i) w(i) = rng.normal();
        const double c = std::exp(rng.uniform(-5, 5));
        EXPECT_EQ(greedy_actions(*dict, w, states), greedy_actions(*dict, c * w, states));
    }
}

TEST(Greedy, BatchedMatchesPointwise) {
    auto dict = std::make_shared<PolyDictionary>(3, std::vector<int>{kChainLeft, kChainRight});
    Vector w(8);
    w << 0.1, -0.2, 0.03, -0.001, -0.3, 0.1, 0.01, 0.0005;
    const QWeights q{w, dict, 0.9};
    std::vector<State> states;
    for (int s = 1; s <= 20; ++s) states.push_back({double(s)});
    Matrix next;
    const std::vector<int> acts = greedy_actions(*dict, w, states, &next);
    for (std::size_t i = 0; i < states.size(); ++i) {
        EXPECT_EQ(acts[i], q.greedy(states[i]));
        EXPECT_EQ(RowVector(next.row(Index(i))), dict->evaluate(states[i], acts[i]));
    }
}

TEST(Lspi, OracleEquivalenceSmallChains) {
    const OracleReport rep = check_oracle_equivalence(10, 3);
    ASSERT_EQ(rep.cases.size(), 7u);
    EXPECT_TRUE(rep.all_match());
}

TEST(Lspi, SingleActionConvergesImmediately) {
    ChainSpec spec = ChainSpec::chain20();
    spec.actions = {kChainRight};
    const ChainEnv env(spec);
    const Dataset d = collect_episodes(env, random_policy(env), Rng(0), 100, 20);
    LspiOptions opts;
    opts.finite_states = env.states();
    const LspiResult r = lspi(d, std::make_shared<PolyDictionary>(4, spec.actions), opts);
    EXPECT_TRUE(r.trace.converged);
    EXPECT_EQ(r.trace.iteration_count(), 1);
}

TEST(Lspi, Chain20PolyReachesOptimum) {
    const ChainEnv env(ChainSpec::chain20());
    LspiOptions opts;
    opts.finite_states = env.states();
    const LspiResult r = lspi(chain20_data(0), std::make_shared<PolyDictionary>(4, env.actions()), opts);
    EXPECT_TRUE(r.trace.converged);
    EXPECT_EQ(r.trace.iterations.back().policy, chain20_optimal());
    EXPECT_EQ(r.trace.iterations.back().dictionary_size, 10u);
}

TEST(Lspi, ClassicalAndKoopmanModesAgree) {
    const ChainEnv env(ChainSpec::chain20());
    const Dataset d = chain20_data(1);
    auto dict = std::make_shared<PolyDictionary>(4, env.actions());
    LspiOptions opts;
    opts.finite_states = env.states();
    const LspiResult a = lspi(d, dict, opts);
    opts.mode = SolveMode::koopman;
    const LspiResult b = lspi(d, dict, opts);
    ASSERT_EQ(a.trace.iteration_count(), b.trace.iteration_count());
    for (int i = 0; i < a.trace.iteration_count(); ++i) {
        EXPECT_EQ(a.trace.iterations[std::size_t(i)].policy, b.trace.iterations[std::size_t(i)].policy);
    }
}

TEST(Lspi, Chain50RbfNearOptimal) {
    const ChainSpec spec = ChainSpec::chain50();
    const ChainEnv env(spec);
    const Dataset d = collect_episodes(env, random_policy(env), Rng(0), 1000, 20);
    LspiOptions opts;
    opts.finite_states = env.states();
    const LspiResult r = lspi(d, std::make_shared<RbfDictionary>(RbfGrid::chain50(), env.actions()), opts);
    const TablePolicy opt = value_iteration(TabularMdp::from_chain(spec)).policy;
    int first = -1;
    for (const IterationRecord& it : r.trace.iterations) {
        if (first < 0 && policy_agreement(it.policy, opt) >= 0.9) first = it.iteration;
    }
    EXPECT_GE(first, 1);
    EXPECT_LE(first, 5);
}

TEST(Lspi, ContinuousUsesWeightTolerance) {
    const PendulumEnv env;
    const Dataset d = collect_episodes(env, random_policy(env), Rng(0), 300, 20);
    LspiOptions opts;
    opts.gamma = env.gamma();
    const LspiResult r = lspi(d, std::make_shared<RbfDictionary>(RbfGrid::pendulum(), env.actions()), opts);
    if (r.trace.converged) {
        const IterationRecord& last = r.trace.iterations.back();
        const IterationRecord& prev = r.trace.iterations[r.trace.iterations.size() - 2];
        EXPECT_LE(last.weight_change, 1e-3 * (1.0 + prev.weight_norm));
    }
    for (const IterationRecord& it : r.trace.iterations) EXPECT_TRUE(it.policy.empty());
}
