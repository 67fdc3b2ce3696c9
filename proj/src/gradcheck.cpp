#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "igsc/trainer.hpp"

namespace igsc {

namespace {

struct RandomCase {
    HypernetParams params;
    Matrix prototypes;
    std::vector<Vector> images;
    std::vector<Sample> batch;
    std::string description;
};

RandomCase draw_case(std::mt19937_64& rng, ClassifierForm::Variant variant, ScoringMode mode) {
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    const std::size_t v = pick(1, 8);
    const std::size_t h1 = pick(1, 6);
    const std::size_t h2 = pick(1, 6);
    const std::size_t d = pick(1, 4);
    const std::size_t h = pick(1, 3);
    const std::size_t classes = pick(2, 4);
    const std::size_t samples = pick(1, 3);

    const ClassifierForm form = variant == ClassifierForm::Variant::linear
                                    ? ClassifierForm::linear(d)
                                    : ClassifierForm::nonlinear(d, h);
    RandomCase rc;
    rc.params = HypernetParams::zeros(v, h1, h2, form, Activation::tanh);
    for (auto t : rc.params.tensors()) {
        for (double& x : t) x = unit(rng);
    }
    rc.prototypes = Matrix(classes, d);
    for (double& x : rc.prototypes.flat()) x = unit(rng);
    for (std::size_t s = 0; s < samples; ++s) {
        Vector img(v);
        for (double& x : img) x = unit(rng);
        rc.images.push_back(std::move(img));
    }
    for (std::size_t s = 0; s < samples; ++s) rc.batch.push_back({rc.images[s], pick(0, classes - 1)});

    std::ostringstream desc;
    desc << to_string(variant) << "/" << to_string(mode) << " v=" << v << " h1=" << h1 << " h2=" << h2
         << " d=" << d << " h=" << h << " C=" << classes << " batch=" << samples;
    rc.description = desc.str();
    return rc;
}

}  // namespace

GradcheckReport gradient_check(const GradcheckConfig& config) {
    GradcheckReport report;
    std::mt19937_64 rng(config.seed);
    const ClassifierForm::Variant variants[] = {ClassifierForm::Variant::linear,
                                                ClassifierForm::Variant::nonlinear};
    const ScoringMode modes[] = {ScoringMode::softmax, ScoringMode::sigmoid};

    for (std::size_t trial = 0; trial < config.trials; ++trial) {
        for (const auto variant : variants) {
            for (const auto mode : modes) {
                RandomCase rc = draw_case(rng, variant, mode);
                const LossOptions opts{mode, false};
                const BatchGradient analytic = backward(rc.batch, rc.prototypes, rc.params, opts);
                const Vector flat_analytic = analytic.grad.flatten();

                HypernetParams probe = rc.params;
                const auto objective = [&](std::span<const double> flat) {
                    probe.assign_flat(flat);
                    return batch_loss(rc.batch, rc.prototypes, probe, opts);
                };
                const Vector numeric = finite_diff_gradient(objective, rc.params.flatten(), config.eps);

                ++report.checks;
                bool failed = false;
                std::size_t offset = 0;
                const auto sizes = std::as_const(rc.params).tensors();
                for (std::size_t t = 0; t < sizes.size(); ++t) {
                    for (std::size_t k = 0; k < sizes[t].size(); ++k) {
                        const double a = flat_analytic[offset + k];
                        const double n = numeric[offset + k];
                        const double rel = std::abs(a - n) / std::max(1.0, std::abs(a));
                        if (rel > config.tolerance) failed = true;
                        if (rel > report.worst_relative_error || report.worst_tensor.empty()) {
                            report.worst_relative_error = std::max(report.worst_relative_error, rel);
                            report.worst_tensor = HypernetParams::kTensorNames[t];
                            report.worst_case = rc.description;
                        }
                    }
                    offset += sizes[t].size();
                }
                if (failed) ++report.failures;
            }
        }
    }
    return report;
}

}  // namespace igsc
