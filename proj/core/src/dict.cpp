#include "kaelspi/dict.hpp"

#include <algorithm>
#include <cmath>

namespace kaelspi {

Matrix Dictionary::eval_matrix(std::span<const StateAction> pairs) const {
    Matrix out(static_cast<Index>(pairs.size()), size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out.row(static_cast<Index>(i)) = evaluate(pairs[i].s, pairs[i].a);
    }
    return out;
}

Matrix eval_matrix(const Dictionary& dict, std::span<const StateAction> pairs) {
    if (pairs.empty()) {
        throw ContractError("eval_matrix: need at least one (s, a) pair");
    }
    return dict.eval_matrix(pairs);
}

std::size_t action_slot(const std::vector<int>& actions, int a) {
    const auto it = std::find(actions.begin(), actions.end(), a);
    if (it == actions.end()) {
        throw ContractError("dictionary: action " + std::to_string(a) + " not in action set");
    }
    return static_cast<std::size_t>(it - actions.begin());
}

// ---------------------------------------------------------------------------

PolyDictionary::PolyDictionary(int degree, std::vector<int> actions)
    : degree_(degree), actions_(std::move(actions)) {
    if (degree_ < 0) {
        throw ContractError("PolyDictionary: degree must be >= 0");
    }
    if (actions_.empty()) {
        throw ContractError("PolyDictionary: empty action set");
    }
    width_ = static_cast<Index>(actions_.size()) * (degree_ + 1);
}

RowVector PolyDictionary::evaluate(const State& s, int a) const {
    RowVector phi = RowVector::Zero(width_);
    const Index base = static_cast<Index>(action_slot(actions_, a)) * (degree_ + 1);
    const double x = s.at(0);
    double p = 1.0;
    for (int d = 0; d <= degree_; ++d) {
        phi(base + d) = p;
        p *= x;
    }
    return phi;
}

// ---------------------------------------------------------------------------

void RbfGrid::validate() const {
    if (centers.empty()) {
        throw ContractError("RbfGrid: need at least one center");
    }
    if (!(sigma > 0.0)) {
        throw ContractError("RbfGrid: sigma must be > 0");
    }
}

RbfGrid RbfGrid::chain50() {
    RbfGrid grid;
    grid.sigma = 4.0;
    for (int j = 1; j <= 10; ++j) {
        grid.centers.push_back({1.0 + 49.0 * (j - 1) / 9.0});
    }
    return grid;
}

RbfGrid RbfGrid::pendulum() {
    RbfGrid grid;
    grid.sigma = 1.0;
    for (double th : {-M_PI / 4.0, 0.0, M_PI / 4.0}) {
        for (double w : {-1.0, 0.0, 1.0}) {
            grid.centers.push_back({th, w});
        }
    }
    return grid;
}

RbfDictionary::RbfDictionary(RbfGrid grid, std::vector<int> actions)
    : grid_(std::move(grid)), actions_(std::move(actions)) {
    grid_.validate();
    if (actions_.empty()) {
        throw ContractError("RbfDictionary: empty action set");
    }
    width_ = static_cast<Index>(actions_.size() * (grid_.centers.size() + 1));
}

RowVector RbfDictionary::evaluate(const State& s, int a) const {
    RowVector phi = RowVector::Zero(width_);
    const Index block = static_cast<Index>(grid_.centers.size()) + 1;
    const Index base = static_cast<Index>(action_slot(actions_, a)) * block;
    const double denom = 2.0 * grid_.sigma * grid_.sigma;
    phi(base) = 1.0;
    for (std::size_t j = 0; j < grid_.centers.size(); ++j) {
        const State& mu = grid_.centers[j];
        if (mu.size() != s.size()) {
            throw ContractError("RbfDictionary: state/center dimension mismatch");
        }
        double d2 = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            d2 += (s[i] - mu[i]) * (s[i] - mu[i]);
        }
        phi(base + 1 + static_cast<Index>(j)) = std::exp(-d2 / denom);
    }
    return phi;
}

// ---------------------------------------------------------------------------

TabularDictionary::TabularDictionary(std::vector<State> states, std::vector<int> actions)
    : states_(std::move(states)), actions_(std::move(actions)) {
    if (states_.empty() || actions_.empty()) {
        throw ContractError("TabularDictionary: need states and actions");
    }
}

Index TabularDictionary::index_of(const State& s, int a) const {
    const auto it = std::find(states_.begin(), states_.end(), s);
    if (it == states_.end()) {
        throw ContractError("TabularDictionary: unknown state");
    }
    const auto si = static_cast<Index>(it - states_.begin());
    return si * static_cast<Index>(actions_.size()) + static_cast<Index>(action_slot(actions_, a));
}

RowVector TabularDictionary::evaluate(const State& s, int a) const {
    RowVector phi = RowVector::Zero(size());
    phi(index_of(s, a)) = 1.0;
    return phi;
}

// ---------------------------------------------------------------------------

Vector KernelInput::join(const State& s, int a) const {
    const std::size_t slot = action_slot(action_ids, a);
    Vector z(static_cast<Index>(s.size()) + 1);
    const bool rescale = scaling == KernelScaling::rescaled;
    for (std::size_t i = 0; i < s.size(); ++i) {
        z(static_cast<Index>(i)) = rescale ? s[i] / chain_n : s[i];
    }
    const double av = action_values[slot];
    z(static_cast<Index>(s.size())) = rescale ? 0.1 * av : av;
    return z;
}

KernelInput KernelInput::chain(int n, KernelScaling scaling) {
    if (n < 1) {
        throw ContractError("KernelInput::chain: n must be >= 1");
    }
    KernelInput in;
    in.scaling = scaling;
    in.chain_n = n;
    in.action_ids = {kChainLeft, kChainRight};
    in.action_values = {1.0, 2.0};
    return in;
}

double rbf_kernel(const Vector& z1, const Vector& z2, double sigma) {
    return std::exp(-(z1 - z2).squaredNorm() / (2.0 * sigma * sigma));
}

KernelDictionary::KernelDictionary(std::vector<Vector> points, double sigma, KernelInput input)
    : points_(std::move(points)), sigma_(sigma), input_(std::move(input)) {
    if (points_.empty()) {
        throw ContractError("KernelDictionary: need at least one dictionary point");
    }
    if (!(sigma_ > 0.0)) {
        throw ContractError("KernelDictionary: sigma must be > 0");
    }
    if (input_.action_ids.size() != input_.action_values.size() || input_.action_ids.empty()) {
        throw ContractError("KernelDictionary: inconsistent action encoding");
    }
}

RowVector KernelDictionary::evaluate(const State& s, int a) const {
    const Vector z = input_.join(s, a);
    RowVector phi(size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
        phi(static_cast<Index>(i)) = rbf_kernel(z, points_[i], sigma_);
    }
    return phi;
}

}  // namespace kaelspi
