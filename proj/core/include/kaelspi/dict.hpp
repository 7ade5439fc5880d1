#pragma once

#include "kaelspi/envs.hpp"
#include "kaelspi/numkit.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kaelspi {

/// Feature map phi(s, a) -> row vector of fixed width k.
class Dictionary {
public:
    virtual ~Dictionary() = default;

    virtual Index size() const = 0;
    virtual const std::vector<int>& actions() const = 0;
    virtual std::string kind() const = 0;

    virtual RowVector evaluate(const State& s, int a) const = 0;

    /// Row i = evaluate(pairs[i]). Implementations may batch.
    virtual Matrix eval_matrix(std::span<const StateAction> pairs) const;
};

using DictionaryPtr = std::shared_ptr<const Dictionary>;

/// Phi = [phi(s_i, a_i)] stacked row-wise.
Matrix eval_matrix(const Dictionary& dict, std::span<const StateAction> pairs);

/// Position of action a within actions, or throws.
std::size_t action_slot(const std::vector<int>& actions, int a);

/// Per-action blocks (1, s, s^2, ..., s^degree); zeros in other blocks.
class PolyDictionary final : public Dictionary {
public:
    PolyDictionary(int degree, std::vector<int> actions);

    Index size() const override { return width_; }
    const std::vector<int>& actions() const override { return actions_; }
    std::string kind() const override { return "poly"; }
    RowVector evaluate(const State& s, int a) const override;

    int degree() const { return degree_; }

private:
    int degree_;
    std::vector<int> actions_;
    Index width_;
};

struct RbfGrid {
    std::vector<State> centers;
    double sigma = 1.0;

    void validate() const;

    /// mu_j = 1 + 49 (j - 1) / 9 for j = 1..10, sigma = 4.
    static RbfGrid chain50();
    /// {-pi/4, 0, pi/4} x {-1, 0, 1}, sigma = 1.
    static RbfGrid pendulum();
};

/// Per-action blocks (1, exp(-|s - mu_1|^2 / 2 sigma^2), ...).
class RbfDictionary final : public Dictionary {
public:
    RbfDictionary(RbfGrid grid, std::vector<int> actions);

    Index size() const override { return width_; }
    const std::vector<int>& actions() const override { return actions_; }
    std::string kind() const override { return "rbf"; }
    RowVector evaluate(const State& s, int a) const override;

    const RbfGrid& grid() const { return grid_; }

private:
    RbfGrid grid_;
    std::vector<int> actions_;
    Index width_;
};

/// One indicator per (state, action) pair of a finite environment.
class TabularDictionary final : public Dictionary {
public:
    TabularDictionary(std::vector<State> states, std::vector<int> actions);

    Index size() const override { return static_cast<Index>(states_.size() * actions_.size()); }
    const std::vector<int>& actions() const override { return actions_; }
    std::string kind() const override { return "tabular"; }
    RowVector evaluate(const State& s, int a) const override;

    Index index_of(const State& s, int a) const;

private:
    std::vector<State> states_;
    std::vector<int> actions_;
};

/// How (s, a) is joined into the kernel input vector z.
enum class KernelScaling {
    raw,       ///< z = (s, a)
    rescaled,  ///< chain: z = (s / n, 0.1 a)
};

struct KernelInput {
    KernelScaling scaling = KernelScaling::raw;
    int chain_n = 0;  ///< required for rescaled chain inputs
    /// Encodes action ids as the value placed in z (id itself for chains).
    std::vector<double> action_values;
    std::vector<int> action_ids;

    Vector join(const State& s, int a) const;

    static KernelInput chain(int n, KernelScaling scaling);
};

double rbf_kernel(const Vector& z1, const Vector& z2, double sigma);

/// phi(s, a) = (k(z, d_1), ..., k(z, d_m)) for dictionary points d_i.
class KernelDictionary final : public Dictionary {
public:
    KernelDictionary(std::vector<Vector> points, double sigma, KernelInput input);

    Index size() const override { return static_cast<Index>(points_.size()); }
    const std::vector<int>& actions() const override { return input_.action_ids; }
    std::string kind() const override { return "kernel"; }
    RowVector evaluate(const State& s, int a) const override;

    const std::vector<Vector>& points() const { return points_; }
    double sigma() const { return sigma_; }
    const KernelInput& input() const { return input_; }

private:
    std::vector<Vector> points_;
    double sigma_;
    KernelInput input_;
};

/// Dictionary choice as it appears in experiment configs.
struct DictionarySpec {
    std::string type = "poly";  ///< poly | rbf | tabular | kae
    int degree = 4;
    std::string model_path;  ///< for kae
};

}  // namespace kaelspi
