#pragma once

// Self-checks shared by the `verify` command and the acceptance runner.

#include "kaelspi/envs.hpp"
#include "kaelspi/kae.hpp"
#include "kaelspi/numkit.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kaelspi {

struct EquivalenceReport {
    int instances = 0;
    double max_relative_error = 0.0;
    std::vector<double> errors;
};

/// Random (Phi, Phi', R, gamma) with L in [20, 200], k in [2, 10]: the
/// Koopman-form solution against the classical fixed point.
EquivalenceReport check_formulation_equivalence(int instances, std::uint64_t seed);

struct OracleCase {
    int n = 0;
    bool sequence_match = false;
    bool optimal_match = false;
    int lspi_iterations = 0;
    int pi_iterations = 0;
};

struct OracleReport {
    std::vector<OracleCase> cases;
    bool all_match() const;
};

/// Tabular LSPI with exact-expectation Phi' against model-based policy
/// iteration and value iteration on chains of length 4..max_n with
/// randomly placed rewards.
OracleReport check_oracle_equivalence(int max_n, std::uint64_t seed);

struct GradientReport {
    int networks = 0;
    double max_relative_error = 0.0;  ///< max over tensors of ||g_a - g_fd|| / max(||g_a||, ||g_fd||)
    std::vector<double> per_tensor;
};

/// Central differences (h = 1e-5) on random 2-4-3-2 | 2-3-4-2 networks,
/// batch 5.
GradientReport check_gradients(int networks, std::uint64_t seed, double h = 1e-5);

/// Max-abs difference between one RK4 step and `substeps` explicit Euler
/// steps of dt / substeps from the same state and force.
double check_rk4_vs_euler(const PendulumSpec& spec, const State& s, double u, int substeps = 1000);

struct FrequencyReport {
    double max_z = 0.0;  ///< max |count - N p| / sqrt(N p (1 - p)) over outcomes
    int pairs = 0;
};

/// Empirical successor frequencies of chain_step against chain_successors,
/// `samples` draws per (s, a).
FrequencyReport check_chain_frequencies(const ChainSpec& spec, int samples, std::uint64_t seed);

}  // namespace kaelspi
