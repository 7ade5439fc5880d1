// kaelspi: chain / pendulum experiments, KAE training and self-verification.

#include "kaelspi/experiment.hpp"
#include "kaelspi/io.hpp"
#include "kaelspi/kae.hpp"
#include "kaelspi/verify.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using namespace kaelspi;

namespace {

struct Common {
    std::string config_file;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    std::optional<int> iters;
    std::optional<int> jobs;
    std::optional<std::string> initial;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_file, "JSON experiment config")->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out, "output directory (beats KLSPI_OUT and the config)");
    cmd->add_option("--seed", c.seed, "single seed");
    cmd->add_option("--seeds", c.seeds, "list of seeds")->delimiter(',');
    cmd->add_option("--iters", c.iters, "max policy iterations")->check(CLI::PositiveNumber);
    cmd->add_option("--jobs", c.jobs, "parallel runs")->check(CLI::PositiveNumber);
    cmd->add_option("--initial", c.initial, "initial policy: auto | lowest | behavior");
}

ExperimentConfig base_config(const Common& c) {
    ExperimentConfig cfg = c.config_file.empty() ? ExperimentConfig{} : load_config(c.config_file);
    if (const char* env = std::getenv("KLSPI_OUT"); env != nullptr && *env != '\0') cfg.out = env;
    if (c.out) cfg.out = *c.out;
    if (!c.seeds.empty()) cfg.seeds = c.seeds;
    if (c.seed) cfg.seeds = {*c.seed};
    if (c.iters) cfg.max_iterations = *c.iters;
    if (c.jobs) cfg.jobs = *c.jobs;
    if (c.initial) cfg.initial_policy = *c.initial;
    return cfg;
}

void print_chain(const RunResult& r) {
    const double last = r.agreement.empty() ? 0.0 : r.agreement.back();
    std::printf("seed %llu: %d iterations%s, first optimal %d, first >=90%% %d, final agreement %.3f, dictionary %zu\n",
                static_cast<unsigned long long>(r.seed), r.trace.iteration_count(),
                r.trace.converged ? " (converged)" : "", r.first_optimal, r.first_agree90, last, r.dictionary_size);
}

int cmd_chain(int states, const std::optional<std::string>& algo, const std::optional<int>& degree,
              const std::optional<int>& k, const Common& common) {
    ExperimentConfig cfg = base_config(common);
    if (states != 0) cfg.environment = "chain" + std::to_string(states);
    if (algo) cfg.algorithm = parse_algorithm(*algo);
    if (degree) cfg.dictionary.degree = *degree;
    if (k) cfg.latent_dim = *k;
    const ExperimentConfig resolved = cfg.resolved();
    const auto results = run_chain_all(resolved);
    for (const RunResult& r : results) print_chain(r);
    emit(resolved, results, resolved.out);
    std::printf("wrote %s (config %s)\n", resolved.out.c_str(), resolved.hash().c_str());
    return 0;
}

int cmd_pendulum(const std::optional<std::string>& algo, const std::vector<int>& episodes,
                 const std::optional<int>& runs, const std::optional<std::string>& scale, const std::optional<int>& k,
                 const Common& common) {
    ExperimentConfig cfg = base_config(common);
    cfg.environment = "pendulum";
    if (algo) cfg.algorithm = parse_algorithm(*algo);
    if (!episodes.empty()) cfg.episode_grid = episodes;
    if (scale) {
        cfg.scale = *scale;
        if (!runs) cfg.runs = 0;
        cfg.test_rollouts = 0;
    }
    if (runs) cfg.runs = *runs;
    if (k) cfg.latent_dim = *k;
    const ExperimentConfig resolved = cfg.resolved();
    const auto results = run_pendulum(resolved);
    for (const RunResult& r : results) {
        std::printf("episodes %d run %d: %zu samples, %d iterations, mean balancing steps %.1f\n", r.episodes, r.run,
                    r.samples, r.trace.iteration_count(), r.balance.mean_steps);
    }
    emit(resolved, results, resolved.out);
    std::printf("wrote %s (config %s)\n", resolved.out.c_str(), resolved.hash().c_str());
    return 0;
}

int cmd_kae_train(const std::string& env_id, const std::string& config_file, const std::string& out,
                  const std::optional<std::uint64_t>& seed, const std::optional<int>& episodes,
                  const std::optional<int>& epochs, const std::string& dataset_out) {
    ExperimentConfig cfg = config_file.empty() ? ExperimentConfig{} : load_config(config_file);
    cfg.environment = env_id;
    cfg.algorithm = Algorithm::kae_lspi;
    if (seed) cfg.seeds = {*seed};
    if (episodes) cfg.episodes = *episodes;
    KaeHyperparams hyper = cfg.resolved().resolved_kae();
    if (epochs) hyper.epochs = *epochs;
    const std::uint64_t s = cfg.seeds.front();
    hyper.seed = Rng(s).split(2).seed();

    const auto env = make_environment(env_id);
    const Dataset data = collect_episodes(*env, random_policy(*env), Rng(s).split(0), cfg.episodes, cfg.max_steps);
    if (!dataset_out.empty()) write_dataset(data, dataset_out);
    const TrainResult tr = train(data, *env, hyper);
    save_model(tr.model, out);
    std::printf("trained %s KAE on %zu samples: loss %.6g -> %.6g over %zu epochs; model written to %s\n",
                env_id.c_str(), data.size(), tr.history.empty() ? 0.0 : tr.history.front().total,
                tr.history.empty() ? 0.0 : tr.history.back().total, tr.history.size(), out.c_str());
    return 0;
}

int cmd_verify(const std::string& out_dir, std::uint64_t seed) {
    fs::create_directories(out_dir);
    CsvWriter csv(fs::path(out_dir) / "verify.csv", {"check", "case", "metric", "value", "pass"});
    bool ok = true;
    auto record = [&](const std::string& check, const std::string& c, const std::string& metric, double v,
                      bool pass) {
        csv.row({check, c, metric, format_double(v), pass ? "1" : "0"});
        ok = ok && pass;
    };

    const EquivalenceReport eq = check_formulation_equivalence(100, seed);
    record("formulation_equivalence", "100", "max_relative_error", eq.max_relative_error, eq.max_relative_error <= 1e-8);

    const OracleReport orc = check_oracle_equivalence(10, seed);
    for (const OracleCase& c : orc.cases) {
        record("oracle_equivalence", "n=" + std::to_string(c.n), "sequence_match", c.sequence_match ? 1 : 0,
               c.sequence_match);
        record("oracle_equivalence", "n=" + std::to_string(c.n), "optimal_match", c.optimal_match ? 1 : 0,
               c.optimal_match);
    }

    const GradientReport gr = check_gradients(5, seed);
    record("gradient_check", "5", "max_relative_error", gr.max_relative_error, gr.max_relative_error <= 1e-4);

    const double rk = check_rk4_vs_euler(PendulumSpec{}, {0.1, 0.0}, 0.0);
    record("rk4_vs_euler", "theta=0.1", "max_abs_diff", rk, rk <= 1e-4);

    const FrequencyReport fr = check_chain_frequencies(ChainSpec::chain20(), 100000, seed);
    record("chain_frequencies", "chain20", "max_z", fr.max_z, fr.max_z <= 3.0);

    std::printf("verify: %s (%s)\n", ok ? "all checks passed" : "FAILURES", (fs::path(out_dir) / "verify.csv").c_str());
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 32 << 20);  // keep large training buffers off mmap
#endif
    CLI::App app{"least-squares policy iteration with fixed, kernel and Koopman-autoencoder features"};
    app.set_version_flag("--version", std::string(KAELSPI_VERSION));
    app.require_subcommand(1);

    Common chain_common;
    int states = 0;
    std::optional<std::string> chain_algo;
    std::optional<int> degree;
    std::optional<int> chain_k;
    auto* chain = app.add_subcommand("chain", "run LSPI / KLSPI / KAE-LSPI on a chain walk");
    chain->add_option("--states", states, "20 or 50")->check(CLI::IsMember({20, 50}));
    chain->add_option("--algo", chain_algo, "lspi | klspi | kae-lspi");
    chain->add_option("--degree", degree, "polynomial degree");
    chain->add_option("--k", chain_k, "KAE latent dimension");
    add_common(chain, chain_common);

    Common pend_common;
    std::optional<std::string> pend_algo;
    std::vector<int> episodes;
    std::optional<int> runs;
    std::optional<std::string> scale;
    std::optional<int> pend_k;
    auto* pend = app.add_subcommand("pendulum", "episode-count sweep on the inverted pendulum");
    pend->add_option("--algo", pend_algo, "lspi | kae-lspi");
    pend->add_option("--episodes", episodes, "episode counts, comma separated")->delimiter(',');
    pend->add_option("--runs", runs, "learning runs per episode count")->check(CLI::PositiveNumber);
    pend->add_option("--scale", scale, "desk | full")->check(CLI::IsMember({"desk", "full"}));
    pend->add_option("--k", pend_k, "KAE latent dimension");
    add_common(pend, pend_common);

    std::string train_env;
    std::string train_config;
    std::string train_out = "kae_model.json";
    std::string train_dataset;
    std::optional<std::uint64_t> train_seed;
    std::optional<int> train_episodes;
    std::optional<int> train_epochs;
    auto* kt = app.add_subcommand("kae-train", "train a Koopman autoencoder and write its model file");
    kt->add_option("--env", train_env, "chain20 | chain50 | pendulum")
        ->required()
        ->check(CLI::IsMember({"chain20", "chain50", "pendulum"}));
    kt->add_option("--config", train_config, "JSON experiment config")->check(CLI::ExistingFile);
    kt->add_option("--out", train_out, "model file");
    kt->add_option("--seed", train_seed, "seed");
    kt->add_option("--episodes", train_episodes, "random-policy episodes")->check(CLI::PositiveNumber);
    kt->add_option("--epochs", train_epochs, "override epochs");
    kt->add_option("--dataset-out", train_dataset, "also write the training dataset CSV");

    std::string verify_out = "verify_out";
    std::uint64_t verify_seed = 0;
    auto* ver = app.add_subcommand("verify", "oracle-equivalence, gradient and environment checks");
    ver->add_option("--out", verify_out, "output directory");
    ver->add_option("--seed", verify_seed, "seed");

    CLI11_PARSE(app, argc, argv);
    try {
        if (chain->parsed()) return cmd_chain(states, chain_algo, degree, chain_k, chain_common);
        if (pend->parsed()) return cmd_pendulum(pend_algo, episodes, runs, scale, pend_k, pend_common);
        if (kt->parsed()) {
            return cmd_kae_train(train_env, train_config, train_out, train_seed, train_episodes, train_epochs,
                                 train_dataset);
        }
        if (ver->parsed()) return cmd_verify(verify_out, verify_seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
