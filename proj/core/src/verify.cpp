#include "kaelspi/verify.hpp"

#include "kaelspi/dict.hpp"
#include "kaelspi/envs.hpp"
#include "kaelspi/lstdq.hpp"
#include "kaelspi/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>

namespace kaelspi {

namespace {

Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

}  // namespace

EquivalenceReport check_formulation_equivalence(int instances, std::uint64_t seed) {
    EquivalenceReport rep;
    const Rng base(seed);
    for (int i = 0; i < instances; ++i) {
        Rng rng = base.split(static_cast<std::uint64_t>(i));
        const auto l = static_cast<Index>(20 + rng.choice(181));
        const auto k = static_cast<Index>(2 + rng.choice(9));
        const double gamma = rng.uniform(0.01, 0.99);
        const Matrix phi = normal_matrix(l, k, rng);
        const Matrix phi_next = normal_matrix(l, k, rng);
        const Matrix r = normal_matrix(l, 1, rng);
        const Vector w_fp = solve_fixed_point(phi, phi_next, r, gamma).w;
        const Vector w_k = solve_koopman_form(phi, r, estimate_koopman(phi, phi_next), gamma).w;
        const double err = (w_k - w_fp).norm() / std::max(w_fp.norm(), 1e-300);
        rep.errors.push_back(err);
        rep.max_relative_error = std::max(rep.max_relative_error, err);
        ++rep.instances;
    }
    return rep;
}

bool OracleReport::all_match() const {
    return !cases.empty() && std::all_of(cases.begin(), cases.end(),
                                         [](const OracleCase& c) { return c.sequence_match && c.optimal_match; });
}

OracleReport check_oracle_equivalence(int max_n, std::uint64_t seed) {
    if (max_n < 4) throw ContractError("check_oracle_equivalence: max_n must be >= 4");
    OracleReport rep;
    const Rng base(seed);
    for (int n = 4; n <= max_n; ++n) {
        Rng rng = base.split(static_cast<std::uint64_t>(n));
        ChainSpec spec = ChainSpec::chain20();
        spec.n = n;
        spec.rewards.clear();
        const int first = 1 + static_cast<int>(rng.choice(static_cast<std::size_t>(n)));
        int second = first;
        while (second == first) second = 1 + static_cast<int>(rng.choice(static_cast<std::size_t>(n)));
        spec.rewards[first] = rng.uniform(0.5, 1.5);
        spec.rewards[second] = rng.uniform(0.5, 1.5);

        const TabularMdp mdp = TabularMdp::from_chain(spec);
        auto dict = std::make_shared<TabularDictionary>(mdp.states, mdp.actions);
        const TablePolicy pi0(mdp.states.size(), mdp.actions.front());
        const Matrix phi = all_pair_features(mdp, *dict);
        const Matrix rewards = mdp.rewards;

        NextFeatureFn next = [&](const QWeights* current, std::vector<int>* actions) -> Matrix {
            const TablePolicy p = current != nullptr ? tabulate(*current, mdp.states) : pi0;
            if (actions != nullptr) *actions = p;
            return expected_next_features(mdp, *dict, p);
        };
        LspiOptions opts;
        opts.gamma = spec.gamma;
        opts.max_iterations = 100;
        opts.finite_states = mdp.states;
        const LspiResult res = lspi_loop(phi, rewards, dict, next, opts, pi0);

        const std::vector<TablePolicy> seq = policy_iteration(mdp, pi0);
        std::vector<TablePolicy> got;
        for (const IterationRecord& r : res.trace.iterations) got.push_back(r.policy);

        OracleCase c;
        c.n = n;
        c.lspi_iterations = res.trace.iteration_count();
        c.pi_iterations = static_cast<int>(seq.size());
        c.sequence_match = got == seq;
        c.optimal_match = !got.empty() && got.back() == value_iteration(mdp).policy;
        rep.cases.push_back(c);
    }
    return rep;
}

GradientReport check_gradients(int networks, std::uint64_t seed, double h) {
    GradientReport rep;
    const Rng base(seed);
    KaeHyperparams hyper;
    hyper.latent_dim = 2;
    hyper.encoder_layers = {4, 3};
    hyper.decoder_layers = {3, 4};
    const LossConfig cfg = hyper.loss;
    for (int net = 0; net < networks; ++net) {
        Rng rng = base.split(static_cast<std::uint64_t>(net));
        KaeModel model = init_model(2, hyper, rng);
        for (auto& p : model.parameters()) {
            for (double& v : p) v += 0.3 * rng.normal();
        }
        Matrix x = normal_matrix(5, 2, rng);
        Matrix xn = normal_matrix(5, 2, rng);
        xn.row(0) = x.row(1);  // shared rows go through the de-duplicated path

        KaeGradients g;
        kae_loss(model, x, xn, cfg, &g);
        const auto analytic = g.views();
        auto params = model.parameters();
        for (std::size_t t = 0; t < params.size(); ++t) {
            double diff2 = 0.0;
            double a2 = 0.0;
            double n2 = 0.0;
            for (std::size_t i = 0; i < params[t].size(); ++i) {
                double& v = params[t][i];
                const double orig = v;
                v = orig + h;
                const double up = kae_loss(model, x, xn, cfg, nullptr).total;
                v = orig - h;
                const double down = kae_loss(model, x, xn, cfg, nullptr).total;
                v = orig;
                const double fd = (up - down) / (2.0 * h);
                const double an = analytic[t][i];
                diff2 += (an - fd) * (an - fd);
                a2 += an * an;
                n2 += fd * fd;
            }
            const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
            const double err = std::sqrt(diff2) / scale;
            rep.per_tensor.push_back(err);
            rep.max_relative_error = std::max(rep.max_relative_error, err);
        }
        ++rep.networks;
    }
    return rep;
}

double check_rk4_vs_euler(const PendulumSpec& spec, const State& s, double u, int substeps) {
    if (substeps < 1 || s.size() != 2) throw ContractError("check_rk4_vs_euler: need a 2-d state and substeps >= 1");
    const State rk = pendulum_rk4(spec, s, u);
    const double h = spec.dt / substeps;
    double th = s[0];
    double om = s[1];
    for (int i = 0; i < substeps; ++i) {
        const double acc = pendulum_accel(spec, th, om, u);
        th += h * om;
        om += h * acc;
    }
    return std::max(std::abs(rk[0] - th), std::abs(rk[1] - om));
}

FrequencyReport check_chain_frequencies(const ChainSpec& spec, int samples, std::uint64_t seed) {
    if (samples < 1) throw ContractError("check_chain_frequencies: samples must be >= 1");
    FrequencyReport rep;
    const Rng base(seed);
    std::uint64_t idx = 0;
    for (int s = 1; s <= spec.n; ++s) {
        for (int a : spec.actions) {
            Rng rng = base.split(idx++);
            std::map<int, long> counts;
            for (int i = 0; i < samples; ++i) ++counts[chain_step(spec, s, a, rng).s_next];
            for (const auto& [s2, p] : chain_successors(spec, s, a)) {
                const double mean = samples * p;
                const double sd = std::sqrt(samples * p * (1.0 - p));
                const double diff = std::abs(static_cast<double>(counts[s2]) - mean);
                const double z = sd > 0.0 ? diff / sd : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
                rep.max_z = std::max(rep.max_z, z);
                counts.erase(s2);
            }
            for (const auto& [s2, c] : counts) {
                if (c > 0) rep.max_z = std::numeric_limits<double>::infinity();  // impossible successor
            }
            ++rep.pairs;
        }
    }
    return rep;
}

}  // namespace kaelspi
