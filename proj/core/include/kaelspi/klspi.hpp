#pragma once

// Kernel LSPI: ALD-sparsified RBF dictionaries rebuilt from on-policy data at
// every policy-iteration step.

#include "kaelspi/dict.hpp"
#include "kaelspi/envs.hpp"
#include "kaelspi/lstdq.hpp"
#include "kaelspi/numkit.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace kaelspi {

struct AldDictionary {
    double sigma = 0.4;
    double mu = 0.001;
    std::vector<Vector> points;
    Matrix gram;
    Matrix gram_inv;

    Index size() const { return static_cast<Index>(points.size()); }
    /// k_z = (k(z, d_i))_i
    Vector kernel_vector(const Vector& z) const;
};

struct AldDecision {
    bool admitted = false;
    double delta = 0.0;
};

/// delta = k(z, z) - k_z^T G^-1 k_z; z is admitted iff delta > mu, in which
/// case G and G^-1 grow by one row/column (block-inverse update).
AldDecision ald_admit(AldDictionary& dict, const Vector& z);

/// Runs ald_admit over every candidate in order. Exact duplicates of earlier
/// candidates are skipped (their delta can only have shrunk since).
void ald_sweep(AldDictionary& dict, std::span<const Vector> candidates);

struct KlspiOptions {
    double gamma = 0.9;
    int max_iterations = 20;
    int episodes = 1000;
    int max_steps = 20;
    double exploration = 0.1;
    double sigma = 0.4;
    double mu = 0.001;
    KernelScaling scaling = KernelScaling::raw;
    /// Keep the previous dictionary and only add new points instead of
    /// rebuilding it from each iteration's data.
    bool grow = false;
    InitialPolicy initial = InitialPolicy::behavior;
    std::uint64_t seed = 0;
};

struct KlspiResult {
    QWeights q;
    PolicyIterTrace trace;
};

/// Chain environments only. Iteration j collects fresh episodes (uniform
/// random for j = 1, epsilon-greedy on pi_{j-1} afterwards), rebuilds the
/// dictionary, evaluates pi_{j-1} and improves greedily.
KlspiResult klspi(const ChainEnv& env, const KlspiOptions& options);

}  // namespace kaelspi
