#include "kaelspi/kae.hpp"

#include "json_io.hpp"
#include "kaelspi/lstdq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace kaelspi {

// --- hyperparameters --------------------------------------------------------

void KaeHyperparams::validate() const {
    if (latent_dim < 1) {
        throw ContractError("kae: latent_dim must be >= 1");
    }
    for (int w : encoder_layers) {
        if (w < 1) throw ContractError("kae: encoder layer widths must be >= 1");
    }
    for (int w : decoder_layers) {
        if (w < 1) throw ContractError("kae: decoder layer widths must be >= 1");
    }
    if (!(learning_rate > 0.0)) throw ContractError("kae: learning_rate must be > 0");
    if (batch_size < 1) throw ContractError("kae: batch_size must be >= 1");
    if (epochs < 0) throw ContractError("kae: epochs must be >= 0");
    if (koopman_refit_every < 0) throw ContractError("kae: koopman_refit_every must be >= 0");
    const LossConfig& c = loss;
    if (c.lambda_rec < 0.0 || c.lambda_pred < 0.0 || c.lambda_dyn < 0.0) {
        throw ContractError("kae: loss weights must be non-negative");
    }
    if (!(c.eps_rec > 0.0 && c.eps_pred > 0.0 && c.eps_dyn > 0.0)) {
        throw ContractError("kae: loss epsilons must be > 0");
    }
}

KaeHyperparams KaeHyperparams::chain20() { return {}; }

KaeHyperparams KaeHyperparams::chain50() {
    KaeHyperparams h;
    h.latent_dim = 45;
    h.encoder_layers = {256, 128, 64};
    h.decoder_layers = {64, 128, 256};
    h.epochs = 500;
    return h;
}

KaeHyperparams KaeHyperparams::pendulum() {
    KaeHyperparams h;
    h.latent_dim = 46;
    h.encoder_layers = {512, 256, 128};
    h.decoder_layers = {128, 256, 512};
    h.epochs = 500;
    return h;
}

// --- normalization ----------------------------------------------------------

NormStats zscore_fit(const Matrix& rows) {
    if (rows.rows() < 1 || rows.cols() < 1) {
        throw ContractError("zscore_fit: need at least one row");
    }
    NormStats st;
    st.mean = rows.colwise().mean().transpose();
    // second pass removes the rounding left by the first
    st.mean += (rows.rowwise() - st.mean.transpose()).colwise().mean().transpose();
    st.std.resize(rows.cols());
    st.constant.assign(static_cast<std::size_t>(rows.cols()), false);
    for (Index c = 0; c < rows.cols(); ++c) {
        const double var = (rows.col(c).array() - st.mean(c)).square().mean();
        const double sd = std::sqrt(var);
        if (sd <= 1e-12 * std::max(1.0, std::abs(st.mean(c)))) {
            st.std(c) = 1.0;
            st.constant[static_cast<std::size_t>(c)] = true;
        } else {
            st.std(c) = sd;
        }
    }
    return st;
}

RowVector zscore_apply(const NormStats& stats, const RowVector& x) {
    if (x.size() != stats.dim()) throw ContractError("zscore_apply: dimension mismatch");
    return (x - stats.mean.transpose()).cwiseQuotient(stats.std.transpose());
}

Matrix zscore_apply(const NormStats& stats, const Matrix& rows) {
    if (rows.cols() != stats.dim()) throw ContractError("zscore_apply: dimension mismatch");
    Matrix out = rows.rowwise() - stats.mean.transpose();
    return out.array().rowwise() / stats.std.transpose().array();
}

Matrix zscore_invert(const NormStats& stats, const Matrix& rows) {
    if (rows.cols() != stats.dim()) throw ContractError("zscore_invert: dimension mismatch");
    Matrix out = rows.array().rowwise() * stats.std.transpose().array();
    return out.rowwise() + stats.mean.transpose();
}

// --- model ------------------------------------------------------------------

RowVector KaeModel::join(const State& s, int a) const {
    if (s.size() != state_dim) throw ContractError("kae: state dimension mismatch");
    RowVector x(static_cast<Index>(state_dim) + 1);
    for (std::size_t i = 0; i < state_dim; ++i) {
        x(static_cast<Index>(i)) = s[i];
    }
    x(static_cast<Index>(state_dim)) = action_values[action_slot(action_ids, a)];
    return x;
}

namespace {

template <typename Span, typename Layers, typename K>
std::vector<Span> tensor_views(Layers& enc, Layers& dec, K& koopman) {
    std::vector<Span> out;
    for (auto* layers : {&enc, &dec}) {
        for (auto& l : *layers) {
            out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
            out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
        }
    }
    out.emplace_back(koopman.data(), static_cast<std::size_t>(koopman.size()));
    return out;
}

DenseLayer glorot(Index fan_in, Index fan_out, Rng& rng) {
    DenseLayer l;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    l.weight.resize(fan_in, fan_out);
    for (Index i = 0; i < l.weight.size(); ++i) {
        l.weight.data()[i] = rng.uniform(-limit, limit);
    }
    l.bias = RowVector::Zero(fan_out);
    return l;
}

enum class OutAct { tanh, linear };

// acts[0] is the input, acts[i + 1] the post-activation output of layer i.
struct Tape {
    std::vector<Matrix> acts;
};

Matrix mlp_forward(const std::vector<DenseLayer>& layers, const Matrix& x, OutAct out, Tape* tape) {
    Matrix h = x;
    if (tape != nullptr) {
        tape->acts.clear();
        tape->acts.push_back(x);
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Matrix y(h.rows(), layers[i].weight.cols());
        y.noalias() = h * layers[i].weight;
        y.rowwise() += layers[i].bias;
        if (i + 1 < layers.size()) {
            y = y.cwiseMax(0.0);
        } else if (out == OutAct::tanh) {
            y = y.array().tanh().matrix();
        }
        if (tape != nullptr) tape->acts.push_back(y);
        h = std::move(y);
    }
    return h;
}

// Accumulates parameter gradients into `grads`; returns dL/d(input).
Matrix mlp_backward(const std::vector<DenseLayer>& layers, const Tape& tape, Matrix g, OutAct out,
                    std::vector<DenseLayer>& grads) {
    for (std::size_t k = layers.size(); k-- > 0;) {
        const Matrix& y = tape.acts[k + 1];
        if (k + 1 < layers.size()) {
            g = (y.array() > 0.0).select(g, 0.0);
        } else if (out == OutAct::tanh) {
            g.array() *= 1.0 - y.array().square();
        }
        grads[k].weight.noalias() += tape.acts[k].transpose() * g;
        grads[k].bias += g.colwise().sum();
        Matrix next(g.rows(), layers[k].weight.rows());
        next.noalias() = g * layers[k].weight.transpose();
        g = std::move(next);
    }
    return g;
}

void check_model(const KaeModel& m) {
    if (m.encoder.empty() || m.decoder.empty()) throw ContractError("kae: model has no layers");
}

// Loss on a batch given as indices into a matrix of distinct normalized rows.
LossReport loss_on_unique(const KaeModel& model, const Matrix& u, std::span<const Index> x_ids,
                          std::span<const Index> xn_ids, const LossConfig& cfg, KaeGradients* grads) {
    const auto batch = static_cast<Index>(x_ids.size());
    const Index nu = u.rows();
    const Index k = model.latent_dim();

    // distinct x rows (positions into the decoder input)
    std::vector<Index> pos(static_cast<std::size_t>(nu), -1);
    std::vector<Index> ux;
    for (Index id : x_ids) {
        if (pos[static_cast<std::size_t>(id)] < 0) {
            pos[static_cast<std::size_t>(id)] = static_cast<Index>(ux.size());
            ux.push_back(id);
        }
    }
    const auto nx = static_cast<Index>(ux.size());

    Tape enc_tape;
    const Matrix zu = mlp_forward(model.encoder, u, OutAct::tanh, grads ? &enc_tape : nullptr);
    Matrix zx(nx, k);
    for (Index j = 0; j < nx; ++j) zx.row(j) = zu.row(ux[static_cast<std::size_t>(j)]);
    Matrix dec_in(2 * nx, k);
    dec_in.topRows(nx) = zx;
    dec_in.bottomRows(nx).noalias() = zx * model.koopman;
    Tape dec_tape;
    const Matrix out = mlp_forward(model.decoder, dec_in, OutAct::linear, grads ? &dec_tape : nullptr);

    Matrix g_out;
    Matrix g_zk;
    Matrix g_zu;
    if (grads != nullptr) {
        g_out = Matrix::Zero(2 * nx, out.cols());
        g_zk = Matrix::Zero(nx, k);
        g_zu = Matrix::Zero(nu, k);
    }
    const double c = 1.0 / static_cast<double>(batch);
    LossReport rep;
    for (Index i = 0; i < batch; ++i) {
        const Index xi = x_ids[static_cast<std::size_t>(i)];
        const Index ni = xn_ids[static_cast<std::size_t>(i)];
        const Index p = pos[static_cast<std::size_t>(xi)];
        const auto x = u.row(xi);
        const auto xn = u.row(ni);

        const double d_rec = x.squaredNorm() + cfg.eps_rec;
        const double l_rec = (out.row(p) - x).squaredNorm() / d_rec;

        const double d_pred = xn.squaredNorm() + cfg.eps_pred;
        const double l_pred = (out.row(nx + p) - xn).squaredNorm() / d_pred;

        const auto zn = zu.row(ni);
        const auto zk = dec_in.row(nx + p);
        const double d_dyn = zn.squaredNorm() + cfg.eps_dyn;
        const double l_dyn = (zk - zn).squaredNorm() / d_dyn;

        rep.rec += l_rec;
        rep.pred += l_pred;
        rep.dyn += l_dyn;

        if (grads != nullptr) {
            g_out.row(p) += (c * cfg.lambda_rec * 2.0 / d_rec) * (out.row(p) - x);
            g_out.row(nx + p) += (c * cfg.lambda_pred * 2.0 / d_pred) * (out.row(nx + p) - xn);
            const double s = c * cfg.lambda_dyn * 2.0 / d_dyn;
            g_zk.row(p) += s * (zk - zn);
            // the target z' also sits in the denominator
            g_zu.row(ni) -= s * ((zk - zn) + l_dyn * zn);
        }
    }
    rep.rec *= c;
    rep.pred *= c;
    rep.dyn *= c;
    rep.total = cfg.lambda_rec * rep.rec + cfg.lambda_pred * rep.pred + cfg.lambda_dyn * rep.dyn;

    if (grads != nullptr) {
        const Matrix g_dec_in = mlp_backward(model.decoder, dec_tape, std::move(g_out), OutAct::linear,
                                             grads->decoder);
        g_zk += g_dec_in.bottomRows(nx);
        grads->koopman.noalias() += zx.transpose() * g_zk;
        Matrix g_zx = g_dec_in.topRows(nx);
        g_zx.noalias() += g_zk * model.koopman.transpose();
        for (Index j = 0; j < nx; ++j) g_zu.row(ux[static_cast<std::size_t>(j)]) += g_zx.row(j);
        mlp_backward(model.encoder, enc_tape, std::move(g_zu), OutAct::tanh, grads->encoder);
    }
    return rep;
}

// Distinct rows of `rows` in first-appearance order plus the row -> id map.
struct Uniques {
    Matrix rows;
    std::vector<Index> ids;
};

Uniques uniquify(const Matrix& rows) {
    std::map<std::vector<double>, Index> seen;
    Uniques u;
    u.ids.resize(static_cast<std::size_t>(rows.rows()));
    std::vector<Index> first;
    std::vector<double> key(static_cast<std::size_t>(rows.cols()));
    for (Index r = 0; r < rows.rows(); ++r) {
        for (Index c = 0; c < rows.cols(); ++c) key[static_cast<std::size_t>(c)] = rows(r, c);
        auto [it, inserted] = seen.emplace(key, static_cast<Index>(first.size()));
        if (inserted) first.push_back(r);
        u.ids[static_cast<std::size_t>(r)] = it->second;
    }
    u.rows.resize(static_cast<Index>(first.size()), rows.cols());
    for (std::size_t i = 0; i < first.size(); ++i) u.rows.row(static_cast<Index>(i)) = rows.row(first[i]);
    return u;
}

}  // namespace

std::vector<std::span<double>> KaeModel::parameters() {
    return tensor_views<std::span<double>>(encoder, decoder, koopman);
}

std::vector<std::span<const double>> KaeModel::parameters() const {
    return tensor_views<std::span<const double>>(encoder, decoder, koopman);
}

void KaeModel::validate() const {
    check_model(*this);
    const Index k = koopman.rows();
    if (koopman.cols() != k || encoder.back().weight.cols() != k || decoder.front().weight.rows() != k) {
        throw ContractError("kae: latent widths disagree");
    }
    if (decoder.back().weight.cols() != input_dim()) {
        throw ContractError("kae: decoder output width must equal input width");
    }
    for (const auto* layers : {&encoder, &decoder}) {
        for (std::size_t i = 0; i < layers->size(); ++i) {
            const DenseLayer& l = (*layers)[i];
            if (l.bias.size() != l.weight.cols()) throw ContractError("kae: bias width mismatch");
            if (i > 0 && (*layers)[i - 1].weight.cols() != l.weight.rows()) {
                throw ContractError("kae: consecutive layer widths disagree");
            }
        }
    }
    if (norm.dim() != input_dim() || norm.std.size() != input_dim()) {
        throw ContractError("kae: normalization width mismatch");
    }
    if (action_ids.empty() || action_ids.size() != action_values.size()) {
        throw ContractError("kae: action ids and values must be non-empty and paired");
    }
    if (static_cast<Index>(state_dim) + 1 != input_dim()) {
        throw ContractError("kae: input width must be state_dim + 1");
    }
}

KaeModel init_model(Index input_dim, const KaeHyperparams& hyper, Rng& rng) {
    hyper.validate();
    if (input_dim < 1) throw ContractError("init_model: input_dim must be >= 1");
    KaeModel m;
    m.hyper = hyper;
    std::vector<Index> enc{input_dim};
    for (int w : hyper.encoder_layers) enc.push_back(w);
    enc.push_back(hyper.latent_dim);
    std::vector<Index> dec{hyper.latent_dim};
    for (int w : hyper.decoder_layers) dec.push_back(w);
    dec.push_back(input_dim);
    for (std::size_t i = 0; i + 1 < enc.size(); ++i) m.encoder.push_back(glorot(enc[i], enc[i + 1], rng));
    for (std::size_t i = 0; i + 1 < dec.size(); ++i) m.decoder.push_back(glorot(dec[i], dec[i + 1], rng));
    m.koopman = Matrix::Identity(hyper.latent_dim, hyper.latent_dim);
    m.norm.mean = Vector::Zero(input_dim);
    m.norm.std = Vector::Ones(input_dim);
    m.norm.constant.assign(static_cast<std::size_t>(input_dim), false);
    m.state_dim = static_cast<std::size_t>(std::max<Index>(input_dim - 1, 0));
    return m;
}

Matrix encode(const KaeModel& model, const Matrix& x_norm) {
    check_model(model);
    if (x_norm.cols() != model.input_dim()) throw ContractError("encode: input width mismatch");
    return mlp_forward(model.encoder, x_norm, OutAct::tanh, nullptr);
}

Matrix decode(const KaeModel& model, const Matrix& z) {
    check_model(model);
    if (z.cols() != model.latent_dim()) throw ContractError("decode: latent width mismatch");
    return mlp_forward(model.decoder, z, OutAct::linear, nullptr);
}

KaeGradients KaeGradients::zeros_like(const KaeModel& model) {
    KaeGradients g;
    for (const DenseLayer& l : model.encoder) {
        g.encoder.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), RowVector::Zero(l.bias.size())});
    }
    for (const DenseLayer& l : model.decoder) {
        g.decoder.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), RowVector::Zero(l.bias.size())});
    }
    g.koopman = Matrix::Zero(model.koopman.rows(), model.koopman.cols());
    return g;
}

std::vector<std::span<const double>> KaeGradients::views() const {
    return tensor_views<std::span<const double>>(encoder, decoder, koopman);
}

LossReport kae_loss(const KaeModel& model, const Matrix& x, const Matrix& x_next, const LossConfig& config,
                    KaeGradients* grads) {
    check_model(model);
    if (x.rows() < 1 || x.rows() != x_next.rows() || x.cols() != model.input_dim() ||
        x_next.cols() != model.input_dim()) {
        throw ContractError("kae_loss: x and x' must be non-empty B x d with matching shapes");
    }
    if (!all_finite(x) || !all_finite(x_next)) throw ContractError("kae_loss: non-finite input");
    Matrix stacked(2 * x.rows(), x.cols());
    stacked << x, x_next;
    const Uniques u = uniquify(stacked);
    const std::span<const Index> ids(u.ids);
    const auto b = static_cast<std::size_t>(x.rows());
    if (grads != nullptr) *grads = KaeGradients::zeros_like(model);
    return loss_on_unique(model, u.rows, ids.subspan(0, b), ids.subspan(b, b), config, grads);
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr) {
    if (params.size() != grads.size()) throw ContractError("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.push_back(Vector::Zero(static_cast<Index>(p.size())));
            state.v.push_back(Vector::Zero(static_cast<Index>(p.size())));
        }
    }
    if (state.m.size() != params.size()) throw ContractError("adam_step: state does not match parameters");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    const double step_size = lr / bc1;
    const double root_bc2 = std::sqrt(bc2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size() || static_cast<Index>(params[i].size()) != state.m[i].size()) {
            throw ContractError("adam_step: tensor size mismatch");
        }
        const auto n = static_cast<Index>(params[i].size());
        Eigen::Map<Vector> p(params[i].data(), n);
        const Eigen::Map<const Vector> g(grads[i].data(), n);
        Vector& m = state.m[i];
        Vector& v = state.v[i];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.array().square().matrix();
        p.array() -= step_size * m.array() / (v.array().sqrt() / root_bc2 + state.eps);
    }
}

PairMatrices training_pairs(const Dataset& data, const Environment& env) {
    if (data.size() < 1) throw ContractError("training_pairs: empty dataset");
    const auto d = static_cast<Index>(env.state_dim());
    PairMatrices pm{Matrix(static_cast<Index>(data.size()), d + 1), Matrix(static_cast<Index>(data.size()), d + 1)};
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Transition& t = data.transitions[i];
        const auto r = static_cast<Index>(i);
        if (static_cast<Index>(t.s.size()) != d || static_cast<Index>(t.s_next.size()) != d) {
            throw ContractError("training_pairs: state dimension mismatch");
        }
        for (Index c = 0; c < d; ++c) {
            pm.x(r, c) = t.s[static_cast<std::size_t>(c)];
            pm.x_next(r, c) = t.s_next[static_cast<std::size_t>(c)];
        }
        pm.x(r, d) = env.action_value(t.a);
        pm.x_next(r, d) = env.action_value(t.a_next);
    }
    return pm;
}

TrainResult train(const Dataset& data, const Environment& env, const KaeHyperparams& hyper) {
    hyper.validate();
    const PairMatrices pm = training_pairs(data, env);
    const Index n = pm.x.rows();
    Matrix stacked(2 * n, pm.x.cols());
    stacked << pm.x, pm.x_next;

    Rng rng(hyper.seed);
    TrainResult res;
    KaeModel& model = res.model;
    model = init_model(pm.x.cols(), hyper, rng);
    model.norm = zscore_fit(stacked);
    model.action_ids = env.actions();
    for (int a : model.action_ids) model.action_values.push_back(env.action_value(a));
    model.state_dim = env.state_dim();

    const Matrix normed = zscore_apply(model.norm, stacked);
    const Uniques u = uniquify(normed);
    const std::span<const Index> all_ids(u.ids);
    const std::span<const Index> gx = all_ids.subspan(0, static_cast<std::size_t>(n));
    const std::span<const Index> gxn = all_ids.subspan(static_cast<std::size_t>(n));

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::vector<Index> local(static_cast<std::size_t>(u.rows.rows()), -1);
    AdamState adam;
    KaeGradients grads = KaeGradients::zeros_like(model);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        shuffle(order, rng);
        LossReport sum;
        int batch_no = 0;
        for (Index start = 0; start < n; start += hyper.batch_size, ++batch_no) {
            const Index end = std::min<Index>(n, start + hyper.batch_size);
            std::vector<Index> used;
            std::vector<Index> lx;
            std::vector<Index> lxn;
            auto local_id = [&](Index g) {
                Index& slot = local[static_cast<std::size_t>(g)];
                if (slot < 0) {
                    slot = static_cast<Index>(used.size());
                    used.push_back(g);
                }
                return slot;
            };
            for (Index i = start; i < end; ++i) {
                const auto row = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
                lx.push_back(local_id(gx[row]));
                lxn.push_back(local_id(gxn[row]));
            }
            Matrix ub(static_cast<Index>(used.size()), u.rows.cols());
            for (std::size_t j = 0; j < used.size(); ++j) {
                ub.row(static_cast<Index>(j)) = u.rows.row(used[j]);
                local[static_cast<std::size_t>(used[j])] = -1;
            }

            for (auto* layers : {&grads.encoder, &grads.decoder}) {
                for (DenseLayer& l : *layers) {
                    l.weight.setZero();
                    l.bias.setZero();
                }
            }
            grads.koopman.setZero();
            const LossReport rep = loss_on_unique(model, ub, lx, lxn, hyper.loss, &grads);
            if (!std::isfinite(rep.total) || !all_finite(grads.koopman)) {
                throw TrainingError("kae: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                        std::to_string(batch_no),
                                    epoch, batch_no);
            }
            const auto params = model.parameters();
            const auto gviews = grads.views();
            adam_step(params, gviews, adam, hyper.learning_rate);

            const auto w = static_cast<double>(end - start);
            sum.rec += w * rep.rec;
            sum.pred += w * rep.pred;
            sum.dyn += w * rep.dyn;
            sum.total += w * rep.total;
        }
        const double inv = 1.0 / static_cast<double>(n);
        res.history.push_back({sum.rec * inv, sum.pred * inv, sum.dyn * inv, sum.total * inv});

        if (hyper.koopman_refit_every > 0 && (epoch + 1) % hyper.koopman_refit_every == 0) {
            model.koopman = estimate_koopman(encode(model, normed.topRows(n)), encode(model, normed.bottomRows(n)));
        }
    }
    model.validate();
    return res;
}

// --- dictionary -------------------------------------------------------------

KaeDictionary::KaeDictionary(std::shared_ptr<const KaeModel> model) : model_(std::move(model)) {
    if (!model_) throw ContractError("KaeDictionary: null model");
    model_->validate();
}

RowVector KaeDictionary::evaluate(const State& s, int a) const {
    Matrix x(1, model_->input_dim());
    x.row(0) = zscore_apply(model_->norm, model_->join(s, a));
    return encode(*model_, x).row(0);
}

Matrix KaeDictionary::eval_matrix(std::span<const StateAction> pairs) const {
    Matrix x(static_cast<Index>(pairs.size()), model_->input_dim());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        x.row(static_cast<Index>(i)) = model_->join(pairs[i].s, pairs[i].a);
    }
    return encode(*model_, zscore_apply(model_->norm, x));
}

DictionaryPtr export_dictionary(std::shared_ptr<const KaeModel> model) {
    return std::make_shared<KaeDictionary>(std::move(model));
}

double koopman_residual_median(const KaeModel& model, const Matrix& x_raw, const Matrix& x_next_raw) {
    if (x_raw.rows() < 1 || x_raw.rows() != x_next_raw.rows()) {
        throw ContractError("koopman_residual_median: need matching non-empty inputs");
    }
    const Matrix z = encode(model, zscore_apply(model.norm, x_raw));
    const Matrix zn = encode(model, zscore_apply(model.norm, x_next_raw));
    const Matrix err = z * model.koopman - zn;
    std::vector<double> r(static_cast<std::size_t>(z.rows()));
    for (Index i = 0; i < z.rows(); ++i) {
        r[static_cast<std::size_t>(i)] = err.row(i).norm() / std::max(zn.row(i).norm(), 1e-300);
    }
    const auto mid = r.begin() + static_cast<std::ptrdiff_t>(r.size() / 2);
    std::nth_element(r.begin(), mid, r.end());
    if (r.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(r.begin(), mid);
    return 0.5 * (lo + hi);
}

// --- serialization ----------------------------------------------------------

Json matrix_to_json(const Matrix& m) {
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const Json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
        throw ContractError("model file: matrix shape does not match data length");
    }
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

void to_json(Json& j, const LossConfig& c) {
    j = Json{{"lambda_rec", c.lambda_rec}, {"lambda_pred", c.lambda_pred}, {"lambda_dyn", c.lambda_dyn},
             {"eps_rec", c.eps_rec},       {"eps_pred", c.eps_pred},       {"eps_dyn", c.eps_dyn}};
}

void from_json(const Json& j, LossConfig& c) {
    c.lambda_rec = j.value("lambda_rec", c.lambda_rec);
    c.lambda_pred = j.value("lambda_pred", c.lambda_pred);
    c.lambda_dyn = j.value("lambda_dyn", c.lambda_dyn);
    c.eps_rec = j.value("eps_rec", c.eps_rec);
    c.eps_pred = j.value("eps_pred", c.eps_pred);
    c.eps_dyn = j.value("eps_dyn", c.eps_dyn);
}

void to_json(Json& j, const KaeHyperparams& h) {
    j = Json{{"latent_dim", h.latent_dim},
             {"encoder_layers", h.encoder_layers},
             {"decoder_layers", h.decoder_layers},
             {"learning_rate", h.learning_rate},
             {"batch_size", h.batch_size},
             {"epochs", h.epochs},
             {"loss", h.loss},
             {"seed", h.seed},
             {"koopman_refit_every", h.koopman_refit_every}};
}

void from_json(const Json& j, KaeHyperparams& h) {
    h.latent_dim = j.value("latent_dim", h.latent_dim);
    h.encoder_layers = j.value("encoder_layers", h.encoder_layers);
    h.decoder_layers = j.value("decoder_layers", h.decoder_layers);
    h.learning_rate = j.value("learning_rate", h.learning_rate);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.epochs = j.value("epochs", h.epochs);
    if (j.contains("loss")) h.loss = j.at("loss").get<LossConfig>();
    h.seed = j.value("seed", h.seed);
    h.koopman_refit_every = j.value("koopman_refit_every", h.koopman_refit_every);
}

namespace {

Json layers_to_json(const std::vector<DenseLayer>& layers) {
    Json arr = Json::array();
    for (const DenseLayer& l : layers) {
        arr.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", matrix_to_json(l.bias)}});
    }
    return arr;
}

std::vector<DenseLayer> layers_from_json(const Json& arr) {
    std::vector<DenseLayer> out;
    for (const Json& j : arr) {
        DenseLayer l;
        l.weight = matrix_from_json(j.at("weight"));
        const Matrix b = matrix_from_json(j.at("bias"));
        if (b.rows() != 1) throw ContractError("model file: bias must be a single row");
        l.bias = b.row(0);
        out.push_back(std::move(l));
    }
    return out;
}

}  // namespace

void save_model(const KaeModel& model, const std::filesystem::path& path) {
    model.validate();
    Json j;
    j["format"] = "kaelspi-kae";
    j["version"] = 1;
    j["input_dim"] = model.input_dim();
    j["latent_dim"] = model.latent_dim();
    j["state_dim"] = model.state_dim;
    j["action_ids"] = model.action_ids;
    j["action_values"] = model.action_values;
    j["hyper"] = model.hyper;
    j["norm"] = {{"mean", std::vector<double>(model.norm.mean.data(), model.norm.mean.data() + model.norm.dim())},
                 {"std", std::vector<double>(model.norm.std.data(), model.norm.std.data() + model.norm.dim())},
                 {"constant", model.norm.constant}};
    j["encoder"] = layers_to_json(model.encoder);
    j["decoder"] = layers_to_json(model.decoder);
    j["koopman"] = matrix_to_json(model.koopman);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file " + path.string());
    out << j.dump() << '\n';
}

KaeModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read model file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ContractError(std::string("model file: ") + e.what());
    }
    if (j.value("format", std::string{}) != "kaelspi-kae" || j.value("version", 0) != 1) {
        throw ContractError("model file: unknown format or version");
    }
    KaeModel m;
    try {
        m.hyper = j.at("hyper").get<KaeHyperparams>();
        m.state_dim = j.at("state_dim").get<std::size_t>();
        m.action_ids = j.at("action_ids").get<std::vector<int>>();
        m.action_values = j.at("action_values").get<std::vector<double>>();
        const auto mean = j.at("norm").at("mean").get<std::vector<double>>();
        const auto sd = j.at("norm").at("std").get<std::vector<double>>();
        m.norm.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size()));
        m.norm.std = Eigen::Map<const Vector>(sd.data(), static_cast<Index>(sd.size()));
        m.norm.constant = j.at("norm").value("constant", std::vector<bool>(mean.size(), false));
        m.encoder = layers_from_json(j.at("encoder"));
        m.decoder = layers_from_json(j.at("decoder"));
        m.koopman = matrix_from_json(j.at("koopman"));
    } catch (const Json::exception& e) {
        throw ContractError(std::string("model file: ") + e.what());
    }
    m.validate();
    return m;
}

}  // namespace kaelspi
