#include "igsc/model.hpp"

#include <algorithm>
#include <cmath>

#include "igsc/error.hpp"

namespace igsc {

void ClassifierForm::validate() const {
    if (d == 0) throw ValidationError("classifier form: d must be >= 1");
    if (!is_linear() && h == 0) throw ValidationError("classifier form: h must be >= 1 for nonlinear");
}

std::string to_string(ClassifierForm::Variant v) {
    return v == ClassifierForm::Variant::linear ? "linear" : "nonlinear";
}

ClassifierForm::Variant variant_from_string(const std::string& name) {
    if (name == "linear") return ClassifierForm::Variant::linear;
    if (name == "nonlinear") return ClassifierForm::Variant::nonlinear;
    throw UsageError("unknown classifier form '" + name + "'");
}

std::size_t packed_size(const ClassifierForm& form) {
    if (form.is_linear()) return form.d + 1;
    return form.h * (form.d + 2) + 1;
}

GeneratedClassifier unpack(std::span<const double> flat, const ClassifierForm& form) {
    const std::size_t expected = packed_size(form);
    if (flat.size() != expected) {
        throw ShapeError("unpack: got " + std::to_string(flat.size()) + " values, form needs " +
                         std::to_string(expected));
    }
    const std::size_t d = form.d;
    if (form.is_linear()) {
        return LinearClassifier{Vector(flat.begin(), flat.begin() + d), flat[d]};
    }
    const std::size_t h = form.h;
    NonlinearClassifier clf;
    auto it = flat.begin();
    clf.M1 = Matrix(h, d, std::vector<double>(it, it + h * d));
    it += h * d;
    clf.b1.assign(it, it + h);
    it += h;
    clf.m2.assign(it, it + h);
    it += h;
    clf.b2 = *it;
    return clf;
}

Vector pack(const GeneratedClassifier& clf) {
    Vector out;
    if (const auto* lin = std::get_if<LinearClassifier>(&clf)) {
        out = lin->m;
        out.push_back(lin->b);
        return out;
    }
    const auto& nl = std::get<NonlinearClassifier>(clf);
    const auto m1 = nl.M1.flat();
    out.assign(m1.begin(), m1.end());
    out.insert(out.end(), nl.b1.begin(), nl.b1.end());
    out.insert(out.end(), nl.m2.begin(), nl.m2.end());
    out.push_back(nl.b2);
    return out;
}

HypernetParams HypernetParams::zeros(std::size_t input_dim, std::size_t h1, std::size_t h2,
                                     const ClassifierForm& form, Activation hidden) {
    form.validate();
    if (input_dim == 0 || h1 == 0 || h2 == 0) {
        throw ValidationError("hypernetwork dimensions must be >= 1");
    }
    const std::size_t p = packed_size(form);
    HypernetParams W;
    W.W1 = Matrix(h1, input_dim);
    W.b1.assign(h1, 0.0);
    W.W2 = Matrix(h2, h1);
    W.b2.assign(h2, 0.0);
    W.Wout = Matrix(p, h2);
    W.bout.assign(p, 0.0);
    W.hidden_activation = hidden;
    W.form = form;
    return W;
}

std::array<std::span<double>, HypernetParams::kTensorCount> HypernetParams::tensors() {
    return {W1.flat(), std::span<double>(b1), W2.flat(), std::span<double>(b2), Wout.flat(),
            std::span<double>(bout)};
}

std::array<std::span<const double>, HypernetParams::kTensorCount> HypernetParams::tensors() const {
    return {W1.flat(), std::span<const double>(b1), W2.flat(), std::span<const double>(b2),
            Wout.flat(), std::span<const double>(bout)};
}

std::size_t HypernetParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto t : tensors()) n += t.size();
    return n;
}

Vector HypernetParams::flatten() const {
    Vector out;
    out.reserve(parameter_count());
    for (const auto t : tensors()) out.insert(out.end(), t.begin(), t.end());
    return out;
}

void HypernetParams::assign_flat(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
        throw ShapeError("assign_flat: got " + std::to_string(flat.size()) + " values, need " +
                         std::to_string(parameter_count()));
    }
    auto it = flat.begin();
    for (auto t : tensors()) {
        std::copy(it, it + static_cast<std::ptrdiff_t>(t.size()), t.begin());
        it += static_cast<std::ptrdiff_t>(t.size());
    }
}

void HypernetParams::validate() const {
    form.validate();
    const std::size_t p = packed_size(form);
    const bool ok = W1.rows() >= 1 && W1.cols() >= 1 && b1.size() == W1.rows() &&
                    W2.cols() == W1.rows() && W2.rows() >= 1 && b2.size() == W2.rows() &&
                    Wout.cols() == W2.rows() && Wout.rows() == p && bout.size() == p;
    if (!ok) {
        throw ShapeError("hypernetwork shapes inconsistent: W1 " + W1.shape_string() + ", W2 " +
                         W2.shape_string() + ", Wout " + Wout.shape_string() + ", packed size " +
                         std::to_string(p));
    }
}

HypernetTrace hypernet_forward(std::span<const double> image, const HypernetParams& W) {
    if (image.size() != W.input_dim()) {
        throw ShapeError("image has " + std::to_string(image.size()) +
                         " dims, hypernetwork expects " + std::to_string(W.input_dim()));
    }
    HypernetTrace t;
    t.z1 = affine(image, W.W1, W.b1);
    t.a1 = activation(t.z1, W.hidden_activation);
    t.z2 = affine(t.a1, W.W2, W.b2);
    t.a2 = activation(t.z2, W.hidden_activation);
    t.packed = affine(t.a2, W.Wout, W.bout);
    return t;
}

GeneratedClassifier generate_classifier(std::span<const double> image, const HypernetParams& W) {
    return unpack(hypernet_forward(image, W).packed, W.form);
}

double score_label(const GeneratedClassifier& clf, std::span<const double> prototype) {
    if (const auto* lin = std::get_if<LinearClassifier>(&clf)) {
        if (prototype.size() != lin->m.size()) {
            throw ShapeError("prototype has " + std::to_string(prototype.size()) +
                             " dims, classifier expects " + std::to_string(lin->m.size()));
        }
        return dot(lin->m, prototype) + lin->b;
    }
    const auto& nl = std::get<NonlinearClassifier>(clf);
    if (prototype.size() != nl.M1.cols()) {
        throw ShapeError("prototype has " + std::to_string(prototype.size()) +
                         " dims, classifier expects " + std::to_string(nl.M1.cols()));
    }
    const Vector hidden = affine(prototype, nl.M1, nl.b1);
    double s = nl.b2;
    for (std::size_t k = 0; k < hidden.size(); ++k) s += nl.m2[k] * std::tanh(hidden[k]);
    return s;
}

Vector score_labels(const GeneratedClassifier& clf, const Matrix& prototypes) {
    Vector s(prototypes.rows());
    for (std::size_t c = 0; c < prototypes.rows(); ++c) s[c] = score_label(clf, prototypes.row(c));
    return s;
}

std::string to_string(ScoringMode m) { return m == ScoringMode::softmax ? "softmax" : "sigmoid"; }

ScoringMode scoring_mode_from_string(const std::string& name) {
    if (name == "softmax") return ScoringMode::softmax;
    if (name == "sigmoid") return ScoringMode::sigmoid;
    throw UsageError("unknown scoring mode '" + name + "'");
}

Vector normalize_scores(std::span<const double> scores, ScoringMode mode) {
    if (scores.empty()) throw ShapeError("no scores to normalize");
    if (mode == ScoringMode::softmax) return softmax(scores);
    return activation(scores, Activation::sigmoid);
}

Vector compatibility(std::span<const double> image, const Matrix& prototypes, const HypernetParams& W,
                     ScoringMode mode) {
    if (prototypes.rows() == 0) throw ShapeError("compatibility needs at least one prototype");
    return normalize_scores(score_labels(generate_classifier(image, W), prototypes), mode);
}

ClassId argmax_over(std::span<const double> scores, std::span<const ClassId> candidates) {
    if (candidates.empty()) throw UsageError("prediction needs a non-empty candidate set");
    ClassId best = 0;
    double best_score = 0.0;
    bool have = false;
    for (const ClassId c : candidates) {
        if (c >= scores.size()) {
            throw UsageError("candidate class " + std::to_string(c) + " has no score");
        }
        const double s = scores[c];
        if (!have || s > best_score || (s == best_score && c < best)) {
            best = c;
            best_score = s;
            have = true;
        }
    }
    return best;
}

ClassId calibrated_argmax(std::span<const double> scores, const std::vector<bool>& seen_flags,
                          double gamma) {
    if (scores.empty()) throw UsageError("prediction needs a non-empty class set");
    if (seen_flags.size() != scores.size()) {
        throw ShapeError("seen flags cover " + std::to_string(seen_flags.size()) + " classes, scores " +
                         std::to_string(scores.size()));
    }
    ClassId best = 0;
    double best_score = 0.0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        const double s = seen_flags[c] ? scores[c] - gamma : scores[c];
        // Strict comparison keeps the lowest id on ties.
        if (c == 0 || s > best_score) {
            best = static_cast<ClassId>(c);
            best_score = s;
        }
    }
    return best;
}

ClassId predict_zsl(std::span<const double> image, const Matrix& prototypes,
                    std::span<const ClassId> candidate_ids, const HypernetParams& W) {
    if (candidate_ids.empty()) throw UsageError("predict_zsl: empty candidate set");
    return argmax_over(score_labels(generate_classifier(image, W), prototypes), candidate_ids);
}

ClassId predict_gzsl(std::span<const double> image, const Matrix& prototypes,
                     const std::vector<bool>& seen_flags, double gamma, const HypernetParams& W) {
    return calibrated_argmax(score_labels(generate_classifier(image, W), prototypes), seen_flags,
                             gamma);
}

IgscModel::IgscModel(HypernetParams params) : params_(std::move(params)) { params_.validate(); }

Vector IgscModel::scores(std::span<const double> image, const Matrix& prototypes) const {
    return score_labels(generate_classifier(image, params_), prototypes);
}

}  // namespace igsc
