#pragma once

// Koopman autoencoder: an MLP encoder to a tanh-bounded latent space, a linear
// latent map K (z' = z K), and an MLP decoder back to the input space. Trained
// with reconstruction, prediction and latent-dynamics losses; the trained
// encoder becomes an LSPI dictionary.

#include "kaelspi/dict.hpp"
#include "kaelspi/envs.hpp"
#include "kaelspi/numkit.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kaelspi {

class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, int epoch, int batch)
        : std::runtime_error(what), epoch_(epoch), batch_(batch) {}

    int epoch() const { return epoch_; }
    int batch() const { return batch_; }

private:
    int epoch_;
    int batch_;
};

struct LossConfig {
    double lambda_rec = 1.0;
    double lambda_pred = 1.0;
    double lambda_dyn = 0.1;
    double eps_rec = 1e-6;
    double eps_pred = 1e-6;
    double eps_dyn = 1e-6;
};

struct KaeHyperparams {
    int latent_dim = 15;
    std::vector<int> encoder_layers = {128, 64, 32};
    std::vector<int> decoder_layers = {32, 64, 128};
    double learning_rate = 1e-4;
    int batch_size = 256;
    int epochs = 300;
    LossConfig loss;
    std::uint64_t seed = 0;
    /// Refit K in closed form from the encoded training set every N epochs
    /// (0 disables; K is then trained only by gradient steps).
    int koopman_refit_every = 0;

    void validate() const;

    static KaeHyperparams chain20();
    static KaeHyperparams chain50();
    static KaeHyperparams pendulum();
};

/// Per-component z-score statistics (population standard deviation).
struct NormStats {
    Vector mean;
    Vector std;
    std::vector<bool> constant;  ///< components whose std was forced to 1

    Index dim() const { return mean.size(); }
};

/// Needs at least one row. Constant columns get std := 1.
NormStats zscore_fit(const Matrix& rows);
RowVector zscore_apply(const NormStats& stats, const RowVector& x);
Matrix zscore_apply(const NormStats& stats, const Matrix& rows);
Matrix zscore_invert(const NormStats& stats, const Matrix& rows);

struct DenseLayer {
    Matrix weight;  ///< fan_in x fan_out; y = x W + b
    RowVector bias;
};

struct KaeModel {
    std::vector<DenseLayer> encoder;
    std::vector<DenseLayer> decoder;
    Matrix koopman;  ///< k x k
    NormStats norm;
    KaeHyperparams hyper;
    /// How (s, a) is joined into the network input.
    std::vector<int> action_ids;
    std::vector<double> action_values;
    std::size_t state_dim = 1;

    Index input_dim() const { return encoder.front().weight.rows(); }
    Index latent_dim() const { return koopman.rows(); }

    /// Raw (unnormalized) input row (s, value(a)).
    RowVector join(const State& s, int a) const;

    /// Every trainable tensor, in a fixed order: encoder (W, b)..., decoder
    /// (W, b)..., K.
    std::vector<std::span<double>> parameters();
    std::vector<std::span<const double>> parameters() const;

    void validate() const;
};

/// Glorot-uniform weights, zero biases, K = I.
KaeModel init_model(Index input_dim, const KaeHyperparams& hyper, Rng& rng);

/// Rows of normalized inputs -> latent rows in (-1, 1)^k. Hidden layers use
/// ReLU; the latent layer is affine followed by tanh.
Matrix encode(const KaeModel& model, const Matrix& x_norm);
/// Latent rows -> reconstructed (normalized) inputs. Hidden layers use ReLU;
/// the output layer is linear.
Matrix decode(const KaeModel& model, const Matrix& z);

struct LossReport {
    double rec = 0.0;
    double pred = 0.0;
    double dyn = 0.0;
    double total = 0.0;
};

/// Same tensor layout as KaeModel::parameters().
struct KaeGradients {
    std::vector<DenseLayer> encoder;
    std::vector<DenseLayer> decoder;
    Matrix koopman;

    static KaeGradients zeros_like(const KaeModel& model);
    std::vector<std::span<const double>> views() const;
};

/// Batch-mean losses for normalized pairs (x, x'). When `grads` is non-null
/// it receives the gradient of the total loss w.r.t. every parameter.
/// Repeated input rows within a batch are pushed through the networks once.
LossReport kae_loss(const KaeModel& model, const Matrix& x, const Matrix& x_next,
                    const LossConfig& config, KaeGradients* grads);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Vector> m;
    std::vector<Vector> v;
};

/// Bias-corrected Adam update applied in place.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr);

struct TrainResult {
    KaeModel model;
    std::vector<LossReport> history;  ///< per-epoch sample-weighted means
};

/// Fits z-score statistics on all x and x' jointly, then runs shuffled
/// mini-batch Adam for hyper.epochs epochs. Deterministic in hyper.seed.
TrainResult train(const Dataset& data, const Environment& env, const KaeHyperparams& hyper);

/// Training inputs joined from a dataset: rows (s, a) and (s', pi(s')).
struct PairMatrices {
    Matrix x;
    Matrix x_next;
};
PairMatrices training_pairs(const Dataset& data, const Environment& env);

/// Frozen encoder exposed as a dictionary: phi(s, a) = encode(zscore(join(s, a))).
class KaeDictionary final : public Dictionary {
public:
    explicit KaeDictionary(std::shared_ptr<const KaeModel> model);

    Index size() const override { return model_->latent_dim(); }
    const std::vector<int>& actions() const override { return model_->action_ids; }
    std::string kind() const override { return "kae"; }
    RowVector evaluate(const State& s, int a) const override;
    Matrix eval_matrix(std::span<const StateAction> pairs) const override;

    const KaeModel& model() const { return *model_; }

private:
    std::shared_ptr<const KaeModel> model_;
};

DictionaryPtr export_dictionary(std::shared_ptr<const KaeModel> model);

/// Median over pairs of ||z K - z'|| / ||z'|| (Koopman-relation residual).
double koopman_residual_median(const KaeModel& model, const Matrix& x_raw, const Matrix& x_next_raw);

/// JSON model container: shapes, 64-bit weights, K, normalization and
/// hyperparameters.
void save_model(const KaeModel& model, const std::filesystem::path& path);
KaeModel load_model(const std::filesystem::path& path);

}  // namespace kaelspi
