#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "igsc/model.hpp"
#include "igsc/netcore.hpp"

namespace igsc {

using IndexList = std::vector<std::uint32_t>;

struct SplitSet {
    IndexList train_idx;
    IndexList val_idx;
    IndexList test_seen_idx;
    IndexList test_unseen_idx;

    friend bool operator==(const SplitSet&, const SplitSet&) = default;
};

/// Embeddings, labels and class prototypes of one benchmark, with its splits.
///
/// `raw_prototypes` is what the prototype file holds; `prototypes` is its
/// row-wise L2-normalized copy, which is what the model consumes.
struct Dataset {
    Matrix features;  ///< N x v
    std::vector<ClassId> labels;
    Matrix raw_prototypes;  ///< C x d
    Matrix prototypes;      ///< C x d, unit rows
    SplitSet splits;
    std::vector<ClassId> seen_classes;
    std::vector<ClassId> unseen_classes;

    std::size_t sample_count() const { return features.rows(); }
    std::size_t feature_dim() const { return features.cols(); }
    std::size_t class_count() const { return prototypes.rows(); }
    std::size_t prototype_dim() const { return prototypes.cols(); }

    /// One flag per class id: true for seen classes.
    std::vector<bool> seen_flags() const;

    /// Throws ValidationError naming the offending field on the first broken invariant.
    void validate() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr const char* kFeaturesFile = "features.f32bin";
inline constexpr const char* kLabelsFile = "labels.u32bin";
inline constexpr const char* kPrototypesFile = "prototypes.f32bin";
inline constexpr const char* kSplitsFile = "splits.json";

/// IGSCMAT1 matrix file: values are stored as f32 and widened on read.
Matrix read_matrix_file(const std::filesystem::path& path);
void write_matrix_file(const std::filesystem::path& path, const Matrix& m);

/// IGSCLBL1 label file.
std::vector<ClassId> read_labels_file(const std::filesystem::path& path);
void write_labels_file(const std::filesystem::path& path, const std::vector<ClassId>& labels);

struct SplitsFile {
    SplitSet splits;
    std::vector<ClassId> seen_classes;
    std::vector<ClassId> unseen_classes;
};

SplitsFile read_splits_file(const std::filesystem::path& path);
void write_splits_file(const std::filesystem::path& path, const SplitsFile& s);

/// Reads and validates the four dataset files in `dir`.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes the four dataset files into `dir`, creating it if needed.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Scales every row to unit Euclidean norm; a zero row is a ValidationError naming its class.
Matrix l2_normalize_prototypes(const Matrix& prototypes);

/// Copies val_idx into train_idx (val is then left empty).
Dataset merge_validation_into_train(Dataset ds);

struct SyntheticSpec {
    std::size_t seen_count = 20;
    std::size_t unseen_count = 5;
    std::size_t d = 16;
    std::size_t v = 32;
    std::size_t samples_per_class = 30;
    double noise_sigma = 0.01;
    std::uint64_t seed = 7;

    void validate() const;
};

/// Planted linear ZSL problem. Classes 0..seen-1 are seen, the rest unseen.
/// Features are A * phi(c) + N(0, noise^2) and are rounded to f32 so the
/// in-memory dataset equals what a write/load round trip produces.
Dataset make_synthetic(const SyntheticSpec& spec);

/// The ground-truth map A (v x d) that make_synthetic used for `spec`.
Matrix synthetic_ground_truth_map(const SyntheticSpec& spec);

}  // namespace igsc
