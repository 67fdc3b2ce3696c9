#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "igsc/error.hpp"
#include "igsc/model.hpp"
#include "test_util.hpp"

using namespace igsc;
using igsc::testing::random_matrix;
using igsc::testing::random_vector;

namespace {

HypernetParams random_params(std::size_t v, std::size_t h1, std::size_t h2, const ClassifierForm& form,
                             std::mt19937_64& rng, Activation act = Activation::tanh) {
    HypernetParams W = HypernetParams::zeros(v, h1, h2, form, act);
    for (auto t : W.tensors()) {
        const Vector r = random_vector(t.size(), rng);
        std::copy(r.begin(), r.end(), t.begin());
    }
    return W;
}

// Written out with raw loops, independently of affine()/activation().
Vector oracle_forward(const Vector& x, const HypernetParams& W) {
    auto layer = [](const Matrix& M, const Vector& b, const Vector& in, bool squash) {
        Vector out(M.rows());
        for (std::size_t i = 0; i < M.rows(); ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < M.cols(); ++j) s += M(i, j) * in[j];
            out[i] = squash ? std::tanh(s) : s;
        }
        return out;
    };
    return layer(W.Wout, W.bout, layer(W.W2, W.b2, layer(W.W1, W.b1, x, true), true), false);
}

double oracle_nonlinear_score(const NonlinearClassifier& c, const Vector& phi) {
    double s = c.b2;
    for (std::size_t k = 0; k < c.M1.rows(); ++k) {
        double z = c.b1[k];
        for (std::size_t j = 0; j < phi.size(); ++j) z += c.M1(k, j) * phi[j];
        s += c.m2[k] * std::tanh(z);
    }
    return s;
}

// Zero weights; bout is the classifier [m = slope, b = 0] for d = 1 prototypes.
HypernetParams constant_linear(double slope) {
    HypernetParams W = HypernetParams::zeros(2, 2, 2, ClassifierForm::linear(1));
    W.bout = {slope, 0.0};
    return W;
}

}  // namespace

TEST(PackedSize, LinearAndNonlinear) {
    EXPECT_EQ(packed_size(ClassifierForm::linear(3)), 4u);
    EXPECT_EQ(packed_size(ClassifierForm::nonlinear(3, 2)), 11u);
}

TEST(PackedSize, PaperScaleNonlinear) {
    EXPECT_EQ(packed_size(ClassifierForm::nonlinear(300, 30)), 9061u);
}

TEST(ClassifierForm, ValidateRejectsZeroDims) {
    EXPECT_THROW(ClassifierForm::linear(0).validate(), ValidationError);
    EXPECT_THROW(ClassifierForm::nonlinear(3, 0).validate(), ValidationError);
    EXPECT_NO_THROW(ClassifierForm::nonlinear(3, 1).validate());
}

TEST(Unpack, LinearLayout) {
    const auto clf = std::get<LinearClassifier>(unpack(Vector{1, 2, 3}, ClassifierForm::linear(2)));
    EXPECT_EQ(clf.m, (Vector{1, 2}));
    EXPECT_EQ(clf.b, 3);
}

TEST(Unpack, NonlinearLayout) {
    const auto clf =
        std::get<NonlinearClassifier>(unpack(Vector{4, 5, 6, 7, 8}, ClassifierForm::nonlinear(2, 1)));
    EXPECT_EQ(clf.M1, Matrix(1, 2, {4, 5}));
    EXPECT_EQ(clf.b1, (Vector{6}));
    EXPECT_EQ(clf.m2, (Vector{7}));
    EXPECT_EQ(clf.b2, 8);
}

TEST(Unpack, RoundTrip) {
    std::mt19937_64 rng(2);
    const ClassifierForm form = ClassifierForm::nonlinear(3, 2);
    const Vector flat = random_vector(11, rng);
    EXPECT_EQ(pack(unpack(flat, form)), flat);
}

TEST(Unpack, LengthMismatchIsShapeError) {
    EXPECT_THROW(unpack(Vector{1, 2}, ClassifierForm::linear(2)), ShapeError);
    EXPECT_THROW(unpack(Vector(12, 0.0), ClassifierForm::nonlinear(3, 2)), ShapeError);
}

TEST(GenerateClassifier, ZeroWeightsGiveUnpackedBias) {
    std::mt19937_64 rng(4);
    const ClassifierForm form = ClassifierForm::nonlinear(3, 2);
    HypernetParams W = HypernetParams::zeros(5, 4, 4, form);
    W.b1 = random_vector(4, rng);
    W.b2 = random_vector(4, rng);
    W.bout = random_vector(packed_size(form), rng);
    for (int trial = 0; trial < 5; ++trial) {
        EXPECT_EQ(pack(generate_classifier(random_vector(5, rng), W)), W.bout);
    }
}

TEST(GenerateClassifier, Deterministic) {
    std::mt19937_64 rng(6);
    const HypernetParams W = random_params(4, 3, 3, ClassifierForm::nonlinear(2, 2), rng);
    const Vector x = random_vector(4, rng);
    EXPECT_EQ(pack(generate_classifier(x, W)), pack(generate_classifier(Vector(x), W)));
}

TEST(GenerateClassifier, MatchesHandRolledComposition) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const HypernetParams W = random_params(4, 3, 3, ClassifierForm::linear(2), rng);
        const Vector x = random_vector(4, rng);
        const Vector got = pack(generate_classifier(x, W));
        const Vector want = oracle_forward(x, W);
        ASSERT_EQ(got.size(), 3u);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
}

TEST(GenerateClassifier, WrongImageDimIsShapeError) {
    std::mt19937_64 rng(9);
    const HypernetParams W = random_params(4, 3, 3, ClassifierForm::linear(2), rng);
    EXPECT_THROW(generate_classifier(Vector(5, 0.0), W), ShapeError);
}

TEST(GenerateClassifier, AlwaysUnpacksExactly) {
    std::mt19937_64 rng(10);
    for (std::size_t v : {1u, 3u})
        for (std::size_t h1 : {1u, 4u})
            for (std::size_t h2 : {1u, 2u})
                for (std::size_t d : {1u, 5u})
                    for (std::size_t h : {0u, 1u, 3u}) {
                        const ClassifierForm form =
                            h == 0 ? ClassifierForm::linear(d) : ClassifierForm::nonlinear(d, h);
                        const HypernetParams W = random_params(v, h1, h2, form, rng);
                        const GeneratedClassifier clf = generate_classifier(random_vector(v, rng), W);
                        EXPECT_EQ(pack(clf).size(), packed_size(form));
                        EXPECT_EQ(std::holds_alternative<LinearClassifier>(clf), form.is_linear());
                    }
}

TEST(ScoreLabel, Linear) {
    const LinearClassifier clf{{1, 0}, 0.0};
    EXPECT_EQ(score_label(clf, Vector{0.5, 9}), 0.5);
}

TEST(ScoreLabel, NonlinearZeroMapIgnoresPrototype) {
    NonlinearClassifier clf{Matrix(2, 3), {0.3, -0.2}, {1.5, 2.0}, 0.25};
    const double expected = 1.5 * std::tanh(0.3) + 2.0 * std::tanh(-0.2) + 0.25;
    EXPECT_NEAR(score_label(clf, Vector{1, 2, 3}), expected, 1e-15);
    EXPECT_NEAR(score_label(clf, Vector{-7, 0, 4}), expected, 1e-15);
}

TEST(ScoreLabel, NonlinearMatchesScalarLoop) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const auto clf = std::get<NonlinearClassifier>(
            unpack(random_vector(11, rng), ClassifierForm::nonlinear(3, 2)));
        const Vector phi = random_vector(3, rng);
        EXPECT_NEAR(score_label(clf, phi), oracle_nonlinear_score(clf, phi), 1e-12);
    }
}

TEST(ScoreLabel, WrongPrototypeDimIsShapeError) {
    EXPECT_THROW(score_label(LinearClassifier{{1, 0}, 0.0}, Vector{1}), ShapeError);
}

TEST(Compatibility, EqualScoresGiveUniformSoftmax) {
    const HypernetParams W = constant_linear(0.0);
    const Matrix protos(4, 1, {1, 2, 3, 4});
    for (double p : compatibility(Vector{0.1, 0.2}, protos, W, ScoringMode::softmax)) {
        EXPECT_NEAR(p, 0.25, 1e-15);
    }
}

TEST(Compatibility, SigmoidOfZeroScoreIsHalf) {
    const HypernetParams W = constant_linear(0.0);
    const Vector p = compatibility(Vector{1, 1}, Matrix(1, 1, {5}), W, ScoringMode::sigmoid);
    EXPECT_EQ(p[0], 0.5);
}

TEST(Compatibility, SoftmaxOfKnownScores) {
    const HypernetParams W = constant_linear(1.0);  // score = prototype value
    const Vector p = compatibility(Vector{0, 0}, Matrix(3, 1, {1, 2, 3}), W, ScoringMode::softmax);
    EXPECT_NEAR(p[0], 0.09003, 1e-5);
    EXPECT_NEAR(p[1], 0.24473, 1e-5);
    EXPECT_NEAR(p[2], 0.66524, 1e-5);
}

TEST(PredictZsl, SingleCandidate) {
    std::mt19937_64 rng(14);
    const HypernetParams W = random_params(3, 2, 2, ClassifierForm::linear(2), rng);
    const Matrix protos = random_matrix(5, 2, rng);
    const std::vector<ClassId> only{3};
    EXPECT_EQ(predict_zsl(random_vector(3, rng), protos, only, W), 3u);
}

TEST(PredictZsl, PicksHigherScore) {
    const HypernetParams W = constant_linear(1.0);
    const Matrix protos(2, 1, {0.1, 0.9});
    const std::vector<ClassId> both{0, 1};
    EXPECT_EQ(predict_zsl(Vector{0, 0}, protos, both, W), 1u);
}

TEST(PredictZsl, EmptyCandidatesIsUsageError) {
    const HypernetParams W = constant_linear(1.0);
    EXPECT_THROW(predict_zsl(Vector{0, 0}, Matrix(2, 1, {0.1, 0.9}), {}, W), UsageError);
}

TEST(Argmax, TiesGoToLowestId) {
    const Vector s{0.5, 0.9, 0.9, 0.1};
    const std::vector<ClassId> reversed{3, 2, 1, 0};
    EXPECT_EQ(argmax_over(s, reversed), 1u);
    EXPECT_EQ(calibrated_argmax(s, {false, false, false, false}, 0.0), 1u);
}

TEST(PredictGzsl, GammaZeroIsPlainArgmax) {
    std::mt19937_64 rng(16);
    const HypernetParams W = random_params(3, 4, 4, ClassifierForm::nonlinear(2, 3), rng);
    const Matrix protos = random_matrix(6, 2, rng);
    const std::vector<bool> seen{true, true, true, false, false, false};
    std::vector<ClassId> all(6);
    std::iota(all.begin(), all.end(), 0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vector x = random_vector(3, rng);
        EXPECT_EQ(predict_gzsl(x, protos, seen, 0.0, W), predict_zsl(x, protos, all, W));
    }
}

TEST(PredictGzsl, HugeGammaPicksUnseen) {
    std::mt19937_64 rng(18);
    const HypernetParams W = random_params(3, 4, 4, ClassifierForm::nonlinear(2, 3), rng);
    const Matrix protos = random_matrix(6, 2, rng);
    const std::vector<bool> seen{true, false, true, false, true, true};
    const std::vector<ClassId> unseen{1, 3};
    for (int trial = 0; trial < 50; ++trial) {
        const Vector x = random_vector(3, rng);
        const Vector s = score_labels(generate_classifier(x, W), protos);
        const double spread = *std::max_element(s.begin(), s.end()) - *std::min_element(s.begin(), s.end());
        const ClassId y = predict_gzsl(x, protos, seen, spread + 1e-9, W);
        EXPECT_FALSE(seen[y]);
        EXPECT_EQ(y, predict_zsl(x, protos, unseen, W));
        EXPECT_FALSE(seen[predict_gzsl(x, protos, seen, std::numeric_limits<double>::infinity(), W)]);
    }
}

TEST(PredictGzsl, CalibrationFlipsToUnseen) {
    const Vector s{1.0, 0.8};
    const std::vector<bool> seen{true, false};
    EXPECT_EQ(calibrated_argmax(s, seen, 0.0), 0u);
    EXPECT_EQ(calibrated_argmax(s, seen, 0.3), 1u);
}

TEST(PredictGzsl, MonotoneSwitchOnlySeenToUnseen) {
    std::mt19937_64 rng(20);
    const std::vector<bool> seen{true, true, false, true, false};
    for (int trial = 0; trial < 200; ++trial) {
        const Vector s = random_vector(5, rng);
        bool went_unseen = false;
        ClassId prev = calibrated_argmax(s, seen, 0.0);
        for (int k = 1; k <= 60; ++k) {
            const ClassId y = calibrated_argmax(s, seen, 0.05 * k);
            if (!seen[prev]) EXPECT_EQ(y, prev) << "unseen prediction changed as gamma grew";
            went_unseen = went_unseen || !seen[y];
            prev = y;
        }
        EXPECT_TRUE(went_unseen);
    }
}

TEST(Properties, ZslArgmaxEqualsSoftmaxArgmax) {
    std::mt19937_64 rng(22);
    const HypernetParams W = random_params(4, 3, 3, ClassifierForm::nonlinear(3, 2), rng);
    const Matrix protos = random_matrix(5, 3, rng);
    const std::vector<ClassId> cands{1, 2, 4};
    for (int trial = 0; trial < 100; ++trial) {
        const Vector x = random_vector(4, rng);
        const Vector p = compatibility(x, protos, W, ScoringMode::softmax);
        const ClassId best = *std::max_element(cands.begin(), cands.end(),
                                               [&](ClassId a, ClassId b) { return p[a] < p[b]; });
        EXPECT_EQ(predict_zsl(x, protos, cands, W), best);
    }
}

TEST(Properties, PermutingPrototypesPermutesScores) {
    std::mt19937_64 rng(24);
    const HypernetParams W = random_params(4, 3, 3, ClassifierForm::nonlinear(3, 2), rng);
    const Matrix protos = random_matrix(6, 3, rng);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix permuted(6, 3);
    for (std::size_t i = 0; i < 6; ++i) std::ranges::copy(protos.row(perm[i]), permuted.row(i).begin());
    const Vector x = random_vector(4, rng);
    const Vector s = IgscModel(W).scores(x, protos);
    const Vector sp = IgscModel(W).scores(x, permuted);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(sp[i], s[perm[i]]);
}

TEST(HypernetParams, FlattenRoundTripAndCounts) {
    std::mt19937_64 rng(26);
    const ClassifierForm form = ClassifierForm::nonlinear(3, 2);
    const HypernetParams W = random_params(5, 4, 3, form, rng);
    EXPECT_EQ(W.parameter_count(), 4u * 5 + 4 + 3 * 4 + 3 + 11 * 3 + 11);
    HypernetParams copy = HypernetParams::zeros(5, 4, 3, form);
    copy.assign_flat(W.flatten());
    EXPECT_EQ(copy, W);
    EXPECT_THROW(copy.assign_flat(Vector(3, 0.0)), ShapeError);
}

TEST(HypernetParams, ValidateCatchesShapeDrift) {
    HypernetParams W = HypernetParams::zeros(5, 4, 3, ClassifierForm::linear(2));
    EXPECT_NO_THROW(W.validate());
    W.bout.push_back(0.0);
    EXPECT_ANY_THROW(W.validate());
}
