#include "igsc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "igsc/error.hpp"
#include "igsc/eval.hpp"

namespace igsc {

namespace {

// The test-only fault build flips the sign of the generated classifier's tanh derivative.
#ifdef IGSC_FAULT_INJECTION
constexpr double kClassifierTanhSign = -1.0;
#else
constexpr double kClassifierTanhSign = 1.0;
#endif

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void check_target(std::size_t target, std::size_t classes) {
    if (target >= classes) {
        throw UsageError("sample target " + std::to_string(target) + " outside " +
                         std::to_string(classes) + " training classes");
    }
}

// Scores of one sample against every training prototype, plus what the reverse pass needs.
struct ScoreTrace {
    Vector scores;
    Matrix hidden;  // nonlinear only: tanh(M1 phi_c + b1), one row per class
};

ScoreTrace score_forward(const GeneratedClassifier& clf, const Matrix& prototypes) {
    ScoreTrace t;
    t.scores.resize(prototypes.rows());
    if (const auto* lin = std::get_if<LinearClassifier>(&clf)) {
        if (prototypes.cols() != lin->m.size()) {
            throw ShapeError("prototypes have " + std::to_string(prototypes.cols()) +
                             " dims, classifier expects " + std::to_string(lin->m.size()));
        }
        for (std::size_t c = 0; c < prototypes.rows(); ++c) {
            t.scores[c] = dot(lin->m, prototypes.row(c)) + lin->b;
        }
        return t;
    }
    const auto& nl = std::get<NonlinearClassifier>(clf);
    if (prototypes.cols() != nl.M1.cols()) {
        throw ShapeError("prototypes have " + std::to_string(prototypes.cols()) +
                         " dims, classifier expects " + std::to_string(nl.M1.cols()));
    }
    t.hidden = Matrix(prototypes.rows(), nl.M1.rows());
    for (std::size_t c = 0; c < prototypes.rows(); ++c) {
        const Vector u = affine(prototypes.row(c), nl.M1, nl.b1);
        auto hrow = t.hidden.row(c);
        double s = nl.b2;
        for (std::size_t k = 0; k < u.size(); ++k) {
            hrow[k] = std::tanh(u[k]);
            s += nl.m2[k] * hrow[k];
        }
        t.scores[c] = s;
    }
    return t;
}

double sample_loss(std::span<const double> probs, std::size_t target, bool pure) {
    double l = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        const double p = clamp_prob(probs[j]);
        if (j == target) l -= std::log(p);
        else if (!pure) l -= std::log(1.0 - p);
    }
    return l;
}

// d loss / d scores for one sample.
Vector score_gradient(std::span<const double> scores, std::span<const double> probs,
                      std::size_t target, const LossOptions& opts) {
    const Vector dp = loss_gradient(probs, target, opts.pure_softmax_ce);
    if (opts.mode == ScoringMode::softmax) return softmax_backward(probs, dp);
    Vector ds(scores.size());
    for (std::size_t j = 0; j < ds.size(); ++j) ds[j] = dp[j] * probs[j] * (1.0 - probs[j]);
    return ds;
}

// d loss / d packed classifier vector, in the unpack() layout.
Vector packed_gradient(const GeneratedClassifier& clf, const ScoreTrace& trace,
                       std::span<const double> ds, const Matrix& prototypes) {
    const std::size_t d = prototypes.cols();
    if (std::holds_alternative<LinearClassifier>(clf)) {
        Vector g(d + 1, 0.0);
        for (std::size_t c = 0; c < prototypes.rows(); ++c) {
            const auto phi = prototypes.row(c);
            for (std::size_t j = 0; j < d; ++j) g[j] += ds[c] * phi[j];
            g[d] += ds[c];
        }
        return g;
    }
    const auto& nl = std::get<NonlinearClassifier>(clf);
    const std::size_t h = nl.M1.rows();
    Vector g(h * (d + 2) + 1, 0.0);
    double* gM1 = g.data();
    double* gb1 = gM1 + h * d;
    double* gm2 = gb1 + h;
    double& gb2 = g[h * (d + 2)];
    for (std::size_t c = 0; c < prototypes.rows(); ++c) {
        const auto phi = prototypes.row(c);
        const auto hid = trace.hidden.row(c);
        gb2 += ds[c];
        for (std::size_t k = 0; k < h; ++k) {
            gm2[k] += ds[c] * hid[k];
            const double du = ds[c] * nl.m2[k] * kClassifierTanhSign * (1.0 - hid[k] * hid[k]);
            gb1[k] += du;
            double* row = gM1 + k * d;
            for (std::size_t j = 0; j < d; ++j) row[j] += du * phi[j];
        }
    }
    return g;
}

void activation_backward_inplace(Vector& grad, const Vector& z, const Vector& a, Activation kind) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= activation_derivative(z[i], a[i], kind);
}

}  // namespace

double loss(std::span<const double> probs, std::span<const double> onehot, bool pure_softmax_ce) {
    if (probs.size() != onehot.size() || probs.empty()) {
        throw ShapeError("loss: probs [" + std::to_string(probs.size()) + "], onehot [" +
                         std::to_string(onehot.size()) + "]");
    }
    std::size_t target = onehot.size();
    for (std::size_t j = 0; j < onehot.size(); ++j) {
        if (onehot[j] == 1.0) {
            if (target != onehot.size()) throw UsageError("loss: one-hot vector has more than one 1");
            target = j;
        } else if (onehot[j] != 0.0) {
            throw UsageError("loss: one-hot vector holds " + std::to_string(onehot[j]));
        }
    }
    if (target == onehot.size()) throw UsageError("loss: one-hot vector has no 1");
    return sample_loss(probs, target, pure_softmax_ce);
}

Vector loss_gradient(std::span<const double> probs, std::size_t target, bool pure_softmax_ce) {
    check_target(target, probs.size());
    Vector dp(probs.size(), 0.0);
    for (std::size_t j = 0; j < probs.size(); ++j) {
        const double p = probs[j];
        if (p <= kProbClamp || p >= 1.0 - kProbClamp) continue;  // clamp is flat here
        if (j == target) dp[j] = -1.0 / p;
        else if (!pure_softmax_ce) dp[j] = 1.0 / (1.0 - p);
    }
    return dp;
}

double batch_loss(std::span<const Sample> batch, const Matrix& prototypes, const HypernetParams& W,
                  const LossOptions& opts) {
    double total = 0.0;
    for (const Sample& s : batch) {
        check_target(s.target, prototypes.rows());
        const auto clf = generate_classifier(s.image, W);
        const Vector probs = normalize_scores(score_forward(clf, prototypes).scores, opts.mode);
        total += sample_loss(probs, s.target, opts.pure_softmax_ce);
    }
    return total;
}

BatchGradient backward(std::span<const Sample> batch, const Matrix& prototypes,
                       const HypernetParams& W, const LossOptions& opts) {
    if (batch.empty()) throw UsageError("backward: empty batch");
    W.validate();
    BatchGradient out;
    out.grad = HypernetParams::zeros(W.input_dim(), W.hidden1(), W.hidden2(), W.form,
                                     W.hidden_activation);
    HypernetParams& g = out.grad;

    for (const Sample& s : batch) {
        check_target(s.target, prototypes.rows());
        const HypernetTrace fwd = hypernet_forward(s.image, W);
        require_finite(fwd.packed, "generated classifier (Wout output)");
        const GeneratedClassifier clf = unpack(fwd.packed, W.form);
        const ScoreTrace st = score_forward(clf, prototypes);
        require_finite(st.scores, "label scores");
        const Vector probs = normalize_scores(st.scores, opts.mode);
        out.loss += sample_loss(probs, s.target, opts.pure_softmax_ce);

        const Vector ds = score_gradient(st.scores, probs, s.target, opts);
        const Vector dpacked = packed_gradient(clf, st, ds, prototypes);

        Vector da2(fwd.a2.size(), 0.0);
        affine_backward(fwd.a2, W.Wout, dpacked, g.Wout, g.bout, da2);
        activation_backward_inplace(da2, fwd.z2, fwd.a2, W.hidden_activation);
        Vector da1(fwd.a1.size(), 0.0);
        affine_backward(fwd.a1, W.W2, da2, g.W2, g.b2, da1);
        activation_backward_inplace(da1, fwd.z1, fwd.a1, W.hidden_activation);
        affine_backward(s.image, W.W1, da1, g.W1, g.b1, {});
    }

    const auto tensors = std::as_const(g).tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        require_finite(tensors[i], std::string("gradient of ") + HypernetParams::kTensorNames[i]);
    }
    return out;
}

AdamState AdamState::for_params(const HypernetParams& W) {
    AdamState s;
    for (const auto t : W.tensors()) {
        s.m.emplace_back(t.size(), 0.0);
        s.v.emplace_back(t.size(), 0.0);
    }
    return s;
}

void adam_step(HypernetParams& W, const HypernetParams& grads, AdamState& state,
               const AdamConfig& config) {
    auto params = W.tensors();
    const auto gs = grads.tensors();
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adam_step: moment state does not mirror the parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (gs[i].size() != params[i].size() || state.m[i].size() != params[i].size() ||
            state.v[i].size() != params[i].size()) {
            throw ShapeError(std::string("adam_step: shape mismatch for ") +
                             HypernetParams::kTensorNames[i]);
        }
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i];
        const auto g = gs[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bias1;
            const double v_hat = v[k] / bias2;
            p[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

void TrainConfig::validate() const {
    form.validate();
    if (h1 == 0 || h2 == 0) throw ValidationError("train: hidden widths must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ValidationError("train: learning rate must be finite and >= 0");
    }
    if (batch_size == 0) throw ValidationError("train: batch size must be >= 1");
    if (epochs == 0) throw ValidationError("train: epochs must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ValidationError("train: Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ValidationError("train: Adam eps must be > 0");
}

HypernetParams init_params(std::size_t input_dim, const TrainConfig& config, std::mt19937_64& rng) {
    HypernetParams W = HypernetParams::zeros(input_dim, config.h1, config.h2, config.form,
                                             config.hidden_activation);
    auto glorot = [&](std::span<double> values, std::size_t fan_in, std::size_t fan_out) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& x : values) x = dist(rng);
    };
    for (Matrix* m : {&W.W1, &W.W2, &W.Wout}) glorot(m->flat(), m->cols(), m->rows());
    return W;
}

std::vector<ClassId> training_classes(const Dataset& dataset) {
    std::set<ClassId> classes;
    for (const auto i : dataset.splits.train_idx) classes.insert(dataset.labels[i]);
    return {classes.begin(), classes.end()};
}

TrainResult train(const Dataset& input, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    const Dataset* ds = &input;
    Dataset merged;
    if (config.merge_val && !input.splits.val_idx.empty()) {
        merged = merge_validation_into_train(input);
        ds = &merged;
    }
    if (ds->splits.train_idx.empty()) throw UsageError("train: the train split is empty");
    if (config.form.d != ds->prototype_dim()) {
        throw ShapeError("train: classifier form has d=" + std::to_string(config.form.d) +
                         " but prototypes have " + std::to_string(ds->prototype_dim()) + " dims");
    }

    const std::vector<ClassId> classes = training_classes(*ds);
    Matrix protos(classes.size(), ds->prototype_dim());
    std::vector<std::size_t> target_of(ds->class_count(), 0);
    for (std::size_t r = 0; r < classes.size(); ++r) {
        std::ranges::copy(ds->prototypes.row(classes[r]), protos.row(r).begin());
        target_of[classes[r]] = r;
    }

    std::vector<ClassId> val_classes;
    {
        std::set<ClassId> vc;
        for (const auto i : ds->splits.val_idx) vc.insert(ds->labels[i]);
        val_classes.assign(vc.begin(), vc.end());
    }

    std::mt19937_64 rng(config.seed);
    TrainResult result;
    result.params = init_params(ds->feature_dim(), config, rng);
    HypernetParams& W = result.params;
    AdamState adam = AdamState::for_params(W);
    const AdamConfig adam_cfg = config.adam();
    const LossOptions loss_opts = config.loss_options();

    std::vector<std::uint32_t> order = ds->splits.train_idx;
    std::vector<Sample> batch;
    batch.reserve(config.batch_size);

    std::optional<double> best_val;
    HypernetParams best_params;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t k = start; k < stop; ++k) {
                const auto idx = order[k];
                batch.push_back({ds->features.row(idx), target_of[ds->labels[idx]]});
            }
            const BatchGradient bg = backward(batch, protos, W, loss_opts);
            epoch_loss += bg.loss;
            adam_step(W, bg.grad, adam, adam_cfg);
        }
        for (const auto t : std::as_const(W).tensors()) {
            for (const double x : t) {
                if (!std::isfinite(x)) {
                    throw NumericError("train: parameters diverged in epoch " + std::to_string(epoch));
                }
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(order.size());
        if (!val_classes.empty()) {
            const IgscModel model(W);
            rec.val_accuracy = evaluate_split_zsl(model, *ds, ds->splits.val_idx, val_classes);
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.history.push_back(rec);

        bool stop = false;
        if (rec.val_accuracy) {
            if (!best_val || *rec.val_accuracy > *best_val) {
                best_val = rec.val_accuracy;
                since_best = 0;
                if (config.select_best_on_val) best_params = W;
            } else {
                ++since_best;
                if (config.early_stop_patience > 0 && since_best >= config.early_stop_patience) stop = true;
            }
        }
        if (on_epoch && !on_epoch(rec, W)) stop = true;
        if (stop) break;
    }

    if (config.select_best_on_val && best_val) W = std::move(best_params);
    return result;
}

}  // namespace igsc
