#include "kaelspi/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kaelspi {

namespace {

using ColMatrix = Eigen::MatrixXd;

constexpr double kEps52 = 0x1p-52;
constexpr double kCutoffSafety = 10.0;

struct Svd {
    ColMatrix u;
    Vector s;
    ColMatrix v;
};

// BDCSVD bidiagonalizes and falls back to Jacobi sweeps on small blocks.
Svd thin_svd(const Matrix& a) {
    Eigen::BDCSVD<ColMatrix> svd(ColMatrix(a), Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

}  // namespace

double svd_cutoff(Index rows, Index cols, double sigma_max) {
    return kCutoffSafety * static_cast<double>(std::max(rows, cols)) * sigma_max * kEps52;
}

Matrix pinv(const Matrix& a) {
    if (a.size() == 0) {
        return Matrix::Zero(a.cols(), a.rows());
    }
    const Svd svd = thin_svd(a);
    const double smax = svd.s.size() > 0 ? svd.s(0) : 0.0;
    const double tau = svd_cutoff(a.rows(), a.cols(), smax);
    Vector inv = Vector::Zero(svd.s.size());
    for (Index i = 0; i < svd.s.size(); ++i) {
        if (svd.s(i) > tau && svd.s(i) > 0.0) {
            inv(i) = 1.0 / svd.s(i);
        }
    }
    return svd.v * inv.asDiagonal() * svd.u.transpose();
}

Index numerical_rank(const Matrix& a) {
    if (a.size() == 0) {
        return 0;
    }
    const Svd svd = thin_svd(a);
    const double smax = svd.s.size() > 0 ? svd.s(0) : 0.0;
    const double tau = svd_cutoff(a.rows(), a.cols(), smax);
    Index r = 0;
    for (Index i = 0; i < svd.s.size(); ++i) {
        if (svd.s(i) > tau && svd.s(i) > 0.0) {
            ++r;
        }
    }
    return r;
}

Matrix lstsq(const Matrix& a, const Matrix& b) {
    if (a.rows() < 1 || a.cols() < 1) {
        throw ContractError("lstsq: A must be non-empty");
    }
    if (a.rows() != b.rows()) {
        throw ContractError("lstsq: A has " + std::to_string(a.rows()) + " rows but b has " +
                            std::to_string(b.rows()));
    }
    return pinv(a) * b;
}

double relative_error(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ContractError("relative_error: shape mismatch");
    }
    const double denom = std::max(b.norm(), std::numeric_limits<double>::min());
    return (a - b).norm() / denom;
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

double Rng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }

double Rng::uniform(double lo, double hi) {
    if (!(lo < hi)) {
        throw ContractError("Rng::uniform: need lo < hi");
    }
    return lo + (hi - lo) * uniform01();
}

std::size_t Rng::choice(std::size_t n) {
    if (n == 0) {
        throw ContractError("Rng::choice: n must be >= 1");
    }
    const std::uint64_t bound = n;
    // Reject the top partial bucket so every index is equally likely.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) {
        u1 = uniform01();
    }
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
}

Rng Rng::split(std::uint64_t index) const { return Rng(mix64(seed_ ^ mix64(index))); }

}  // namespace kaelspi
