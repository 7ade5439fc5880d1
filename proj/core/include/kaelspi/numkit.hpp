#pragma once

// Dense linear algebra and seeded random numbers shared by every module.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kaelspi {

/// Row-major, 64-bit dense matrix. Row vectors are feature rows phi(s,a).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Raised when a caller breaks a documented precondition (shapes, ranges).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Singular-value cutoff used for rank decisions:
/// 10 * max(m, n) * sigma_max * 2^-52.
double svd_cutoff(Index rows, Index cols, double sigma_max);

/// Moore-Penrose pseudoinverse by SVD with the cutoff above.
Matrix pinv(const Matrix& a);

/// Numerical rank under the same cutoff as pinv.
Index numerical_rank(const Matrix& a);

/// Minimum-norm least-squares solution of A X = B (Frobenius norm).
Matrix lstsq(const Matrix& a, const Matrix& b);

/// Frobenius-relative difference ||a - b|| / max(||b||, tiny).
double relative_error(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& a);

/// splitmix64 finalizer; used for seed derivation and hashing.
std::uint64_t mix64(std::uint64_t x);

/// Seeded generator. The engine (mt19937_64) is bit-specified by the standard,
/// and all conversions to doubles/indices are done here so that the stream is
/// identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01();
    double uniform(double lo, double hi);
    /// Uniform index in [0, n).
    std::size_t choice(std::size_t n);
    /// Standard normal (Box-Muller, cached pair).
    double normal();

    /// Independent child stream: seed = mix64(seed ^ mix64(index)).
    Rng split(std::uint64_t index) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// In-place Fisher-Yates shuffle driven by Rng (portable, unlike std::shuffle).
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.choice(i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace kaelspi
