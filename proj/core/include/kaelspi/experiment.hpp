#pragma once

// Experiment configuration, end-to-end chain and pendulum runs, and output
// emission (results.csv, config.json, plotdata/).

#include "kaelspi/dict.hpp"
#include "kaelspi/envs.hpp"
#include "kaelspi/kae.hpp"
#include "kaelspi/lstdq.hpp"
#include "kaelspi/oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kaelspi {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Algorithm { lspi, klspi, kae_lspi };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

struct KlspiSettings {
    KernelScaling scaling = KernelScaling::raw;
    bool grow = false;
    double exploration = 0.1;
    double sigma = 0.4;
    double mu = 0.001;
};

struct ExperimentConfig {
    std::string environment = "chain20";  ///< chain20 | chain50 | pendulum
    Algorithm algorithm = Algorithm::lspi;
    /// type "auto" picks poly (chain20), rbf (chain50, pendulum) or kae
    /// (kae-lspi).
    DictionarySpec dictionary{"auto", 4, ""};
    std::optional<double> gamma;  ///< environment default when unset
    int max_iterations = 20;
    std::vector<std::uint64_t> seeds = {0};
    int episodes = 1000;  ///< chain training episodes
    int max_steps = 20;
    std::vector<int> episode_grid = {10, 50, 100, 200, 300, 400, 500, 600, 800, 1000};
    std::string scale = "desk";  ///< desk | full
    int runs = 0;                ///< 0: 5 (desk) or 15 (full)
    int test_rollouts = 0;       ///< 0: 50 (desk) or 200 (full)
    int test_cap = 3000;
    std::optional<KaeHyperparams> kae;  ///< environment preset when unset
    std::optional<int> latent_dim;      ///< overrides kae.latent_dim
    std::string initial_policy = "auto";  ///< auto | lowest | behavior
    KlspiSettings klspi;
    std::string out = "out";
    int jobs = 1;

    /// Fills every "auto"/unset field; throws ConfigError on inconsistency.
    ExperimentConfig resolved() const;
    void validate() const;

    double resolved_gamma() const;
    KaeHyperparams resolved_kae() const;
    InitialPolicy resolved_initial() const;
    /// FNV-1a (64-bit, hex) of the canonical JSON, excluding out and jobs.
    std::string hash() const;
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json_text(const ExperimentConfig& config, bool include_runtime = true);

std::uint64_t fnv1a64(const std::string& bytes);

struct MetricRow {
    std::uint64_t seed = 0;
    long step = 0;
    std::string metric;
    double value = 0.0;
};

struct RunResult {
    std::string environment;
    Algorithm algorithm = Algorithm::lspi;
    std::uint64_t seed = 0;
    int run = 0;
    int episodes = 0;
    std::size_t samples = 0;
    PolicyIterTrace trace;
    std::vector<State> states;        ///< finite environments
    TablePolicy optimal;              ///< value-iteration policy (finite)
    std::vector<double> agreement;    ///< per iteration (finite)
    int first_optimal = -1;           ///< 1-based iteration, -1 if never
    int first_agree90 = -1;
    std::size_t dictionary_size = 0;
    BalanceReport balance;            ///< pendulum
    std::vector<LossReport> kae_history;
    std::optional<double> koopman_residual;
    double wall_seconds = 0.0;

    std::vector<MetricRow> metrics() const;
};

/// One chain run for `seed`: 1000x20 random-policy samples (KLSPI
/// regenerates its own), dictionary or KAE fit, the chosen algorithm, and a
/// per-iteration comparison against value iteration.
RunResult run_chain(const ExperimentConfig& config, std::uint64_t seed);

/// All chain seeds in the config, `config.jobs` at a time.
std::vector<RunResult> run_chain_all(const ExperimentConfig& config);

/// One pendulum learning run at a given episode count.
RunResult run_pendulum_once(const ExperimentConfig& config, int episodes, int run);

/// Every (episode count, run) pair of the config.
std::vector<RunResult> run_pendulum(const ExperimentConfig& config);

/// Writes results.csv, config.json, run_meta.json (timings) and plotdata/.
void emit(const ExperimentConfig& config, std::span<const RunResult> results, const std::filesystem::path& dir);

/// Builds the dictionary named by the config for a fixed-dictionary run.
DictionaryPtr make_fixed_dictionary(const ExperimentConfig& config, const Environment& env);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace kaelspi
