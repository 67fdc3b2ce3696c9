#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "igsc/netcore.hpp"

namespace igsc {

using ClassId = std::uint32_t;

/// Shape of the per-image label classifier produced by the hypernetwork.
struct ClassifierForm {
    enum class Variant { linear, nonlinear };

    Variant variant = Variant::nonlinear;
    std::size_t d = 1;  ///< prototype dimension
    std::size_t h = 30; ///< hidden width, nonlinear only

    static ClassifierForm linear(std::size_t d) { return {Variant::linear, d, 0}; }
    static ClassifierForm nonlinear(std::size_t d, std::size_t h) { return {Variant::nonlinear, d, h}; }

    bool is_linear() const { return variant == Variant::linear; }
    /// Throws ValidationError when d or (for nonlinear) h is zero.
    void validate() const;

    friend bool operator==(const ClassifierForm&, const ClassifierForm&) = default;
};

std::string to_string(ClassifierForm::Variant v);
ClassifierForm::Variant variant_from_string(const std::string& name);

/// g(phi) = m . phi + b
struct LinearClassifier {
    Vector m;
    double b = 0.0;
};

/// g(phi) = m2 . tanh(M1 phi + b1) + b2
struct NonlinearClassifier {
    Matrix M1;
    Vector b1;
    Vector m2;
    double b2 = 0.0;
};

using GeneratedClassifier = std::variant<LinearClassifier, NonlinearClassifier>;

/// Number of values the hypernetwork emits: d+1 (linear) or h(d+2)+1 (nonlinear).
std::size_t packed_size(const ClassifierForm& form);

/// Flat layout: linear [m, b]; nonlinear [M1 row-major, b1, m2, b2].
GeneratedClassifier unpack(std::span<const double> flat, const ClassifierForm& form);
Vector pack(const GeneratedClassifier& clf);

/// Trainable parameters of the hypernetwork: two hidden affine layers and the output layer.
struct HypernetParams {
    Matrix W1;
    Vector b1;
    Matrix W2;
    Vector b2;
    Matrix Wout;
    Vector bout;
    Activation hidden_activation = Activation::tanh;
    ClassifierForm form;

    static constexpr std::size_t kTensorCount = 6;
    static constexpr std::array<const char*, kTensorCount> kTensorNames = {"W1", "b1", "W2",
                                                                          "b2", "Wout", "bout"};

    /// Zero-filled parameters of the given sizes.
    static HypernetParams zeros(std::size_t input_dim, std::size_t h1, std::size_t h2,
                                const ClassifierForm& form,
                                Activation hidden = Activation::tanh);

    std::size_t input_dim() const { return W1.cols(); }
    std::size_t hidden1() const { return W1.rows(); }
    std::size_t hidden2() const { return W2.rows(); }

    /// Views of every tensor in the fixed order of kTensorNames.
    std::array<std::span<double>, kTensorCount> tensors();
    std::array<std::span<const double>, kTensorCount> tensors() const;

    std::size_t parameter_count() const;
    Vector flatten() const;
    void assign_flat(std::span<const double> flat);

    /// Checks that all tensor shapes agree with each other and with `form`.
    void validate() const;

    friend bool operator==(const HypernetParams&, const HypernetParams&) = default;
};

/// Intermediate values of one hypernetwork forward pass, kept for the reverse pass.
struct HypernetTrace {
    Vector z1, a1, z2, a2;
    Vector packed;
};

HypernetTrace hypernet_forward(std::span<const double> image, const HypernetParams& W);

GeneratedClassifier generate_classifier(std::span<const double> image, const HypernetParams& W);

double score_label(const GeneratedClassifier& clf, std::span<const double> prototype);

/// Scores of one classifier against every row of `prototypes`.
Vector score_labels(const GeneratedClassifier& clf, const Matrix& prototypes);

enum class ScoringMode { softmax, sigmoid };

std::string to_string(ScoringMode m);
ScoringMode scoring_mode_from_string(const std::string& name);

/// Normalizes raw scores with softmax or an elementwise sigmoid.
Vector normalize_scores(std::span<const double> scores, ScoringMode mode);

Vector compatibility(std::span<const double> image, const Matrix& prototypes, const HypernetParams& W,
                     ScoringMode mode);

/// Argmax of scores over the candidate ids; ties go to the lowest id.
ClassId argmax_over(std::span<const double> scores, std::span<const ClassId> candidates);

/// Argmax of scores[y] - gamma * seen_flags[y] over all classes; ties go to the lowest id.
ClassId calibrated_argmax(std::span<const double> scores, const std::vector<bool>& seen_flags,
                          double gamma);

ClassId predict_zsl(std::span<const double> image, const Matrix& prototypes,
                    std::span<const ClassId> candidate_ids, const HypernetParams& W);

ClassId predict_gzsl(std::span<const double> image, const Matrix& prototypes,
                     const std::vector<bool>& seen_flags, double gamma, const HypernetParams& W);

/// Anything that maps an image embedding to one raw score per class prototype.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    virtual Vector scores(std::span<const double> image, const Matrix& prototypes) const = 0;
};

class IgscModel final : public ScoreModel {
public:
    explicit IgscModel(HypernetParams params);

    Vector scores(std::span<const double> image, const Matrix& prototypes) const override;
    const HypernetParams& params() const { return params_; }

private:
    HypernetParams params_;
};

}  // namespace igsc
