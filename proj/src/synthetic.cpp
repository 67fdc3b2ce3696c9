#include <algorithm>
#include <cmath>
#include <random>

#include "igsc/data.hpp"
#include "igsc/error.hpp"

namespace igsc {

namespace {

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct PlantedProblem {
    Matrix raw_prototypes;  // C x d, already unit rows up to f32 rounding
    Matrix map;             // v x d
};

// Draw order is fixed: prototypes, then the map, then per-sample noise.
PlantedProblem draw_planted(const SyntheticSpec& spec, std::mt19937_64& rng) {
    const std::size_t classes = spec.seen_count + spec.unseen_count;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix protos(classes, spec.d);
    for (double& x : protos.flat()) x = unit(rng);
    protos = l2_normalize_prototypes(protos);
    for (double& x : protos.flat()) x = to_f32(x);

    // Random map with orthonormal columns (Gram-Schmidt on a Gaussian draw) when v >= d,
    // so feature-space geometry mirrors prototype geometry.
    Matrix map(spec.v, spec.d);
    for (double& x : map.flat()) x = normal(rng);
    if (spec.v >= spec.d) {
        for (std::size_t j = 0; j < spec.d; ++j) {
            for (std::size_t k = 0; k < j; ++k) {
                double proj = 0.0;
                for (std::size_t i = 0; i < spec.v; ++i) proj += map(i, j) * map(i, k);
                for (std::size_t i = 0; i < spec.v; ++i) map(i, j) -= proj * map(i, k);
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < spec.v; ++i) norm += map(i, j) * map(i, j);
            norm = std::sqrt(norm);
            for (std::size_t i = 0; i < spec.v; ++i) map(i, j) /= norm;
        }
    }
    return {std::move(protos), std::move(map)};
}

}  // namespace

void SyntheticSpec::validate() const {
    if (seen_count == 0) throw ValidationError("synthetic: seen class count must be >= 1");
    if (unseen_count == 0) throw ValidationError("synthetic: unseen class count must be >= 1");
    if (d == 0) throw ValidationError("synthetic: d must be >= 1");
    if (v == 0) throw ValidationError("synthetic: v must be >= 1");
    if (samples_per_class == 0) throw ValidationError("synthetic: samples per class must be >= 1");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw ValidationError("synthetic: noise sigma must be finite and >= 0");
    }
}

Matrix synthetic_ground_truth_map(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    return draw_planted(spec, rng).map;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    PlantedProblem planted = draw_planted(spec, rng);
    std::normal_distribution<double> noise(0.0, 1.0);

    const std::size_t classes = spec.seen_count + spec.unseen_count;
    const std::size_t per = spec.samples_per_class;
    Dataset ds;
    ds.features = Matrix(classes * per, spec.v);
    ds.labels.reserve(classes * per);

    // 80/20 train/test split per seen class, keeping at least one test sample when possible.
    std::size_t train_per = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(per)));
    if (per >= 2) train_per = std::clamp<std::size_t>(train_per, 1, per - 1);
    else train_per = 0;

    for (std::size_t c = 0; c < classes; ++c) {
        const Vector clean = affine(planted.raw_prototypes.row(c), planted.map, Vector(spec.v, 0.0));
        const bool seen = c < spec.seen_count;
        for (std::size_t k = 0; k < per; ++k) {
            const auto index = static_cast<std::uint32_t>(ds.labels.size());
            auto row = ds.features.row(index);
            for (std::size_t j = 0; j < spec.v; ++j) {
                row[j] = to_f32(clean[j] + spec.noise_sigma * noise(rng));
            }
            ds.labels.push_back(static_cast<ClassId>(c));
            if (!seen) ds.splits.test_unseen_idx.push_back(index);
            else if (k < train_per) ds.splits.train_idx.push_back(index);
            else ds.splits.test_seen_idx.push_back(index);
        }
        (seen ? ds.seen_classes : ds.unseen_classes).push_back(static_cast<ClassId>(c));
    }

    ds.raw_prototypes = std::move(planted.raw_prototypes);
    ds.prototypes = l2_normalize_prototypes(ds.raw_prototypes);
    ds.validate();
    return ds;
}

}  // namespace igsc
