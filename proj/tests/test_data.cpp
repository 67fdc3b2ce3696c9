#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "igsc/data.hpp"
#include "igsc/error.hpp"
#include "test_util.hpp"

using namespace igsc;
using igsc::testing::read_bytes;
using igsc::testing::TempDir;
using igsc::testing::write_bytes;

namespace fs = std::filesystem;

namespace {

const fs::path kTiny = fs::path(IGSC_FIXTURE_DIR) / "tiny";

// Copy of the tiny fixture the test may mutate.
fs::path tiny_copy(const TempDir& dir) {
    const fs::path dst = dir / "tiny";
    fs::copy(kTiny, dst, fs::copy_options::recursive);
    return dst;
}

void expect_validation_error(const fs::path& dir, const std::string& field) {
    try {
        load_dataset(dir);
        FAIL() << "expected ValidationError naming " << field;
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
}

void rewrite_splits(const fs::path& dir, const std::function<void(SplitsFile&)>& edit) {
    SplitsFile s = read_splits_file(dir / kSplitsFile);
    edit(s);
    write_splits_file(dir / kSplitsFile, s);
}

}  // namespace

TEST(LoadDataset, TinyFixtureDims) {
    const Dataset ds = load_dataset(kTiny);
    EXPECT_EQ(ds.sample_count(), 8u);
    EXPECT_EQ(ds.feature_dim(), 4u);
    EXPECT_EQ(ds.class_count(), 4u);
    EXPECT_EQ(ds.prototype_dim(), 3u);
    EXPECT_EQ(ds.labels, (std::vector<ClassId>{0, 0, 1, 1, 2, 2, 3, 3}));
    EXPECT_EQ(ds.seen_classes, (std::vector<ClassId>{0, 1}));
    EXPECT_EQ(ds.unseen_classes, (std::vector<ClassId>{2, 3}));
    EXPECT_EQ(ds.splits.test_unseen_idx, (IndexList{4, 5, 6, 7}));
    EXPECT_TRUE(ds.splits.val_idx.empty());
    EXPECT_EQ(ds.features(1, 0), static_cast<double>(0.9f));
}

TEST(LoadDataset, PrototypesNormalizedRawKept) {
    const Dataset ds = load_dataset(kTiny);
    EXPECT_EQ(ds.raw_prototypes(0, 0), 3.0);
    EXPECT_EQ(ds.raw_prototypes(0, 1), 4.0);
    EXPECT_NEAR(ds.prototypes(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(ds.prototypes(0, 1), 0.8, 1e-15);
    EXPECT_NEAR(ds.prototypes(3, 2), 1.0 / std::sqrt(3.0), 1e-15);
}

TEST(LoadDataset, CorruptedMagicIsFormatError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    for (const char* file : {kFeaturesFile, kLabelsFile, kPrototypesFile}) {
        const std::string good = read_bytes(ds / file);
        std::string bad = good;
        bad[0] = 'J';
        write_bytes(ds / file, bad);
        EXPECT_THROW(load_dataset(ds), FormatError) << file;
        write_bytes(ds / file, good);
    }
    EXPECT_NO_THROW(load_dataset(ds));
}

TEST(LoadDataset, HeaderSizeMismatchIsFormatError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    const std::string good = read_bytes(ds / kFeaturesFile);
    write_bytes(ds / kFeaturesFile, good.substr(0, good.size() - 4));
    EXPECT_THROW(load_dataset(ds), FormatError);
    write_bytes(ds / kFeaturesFile, good + "abcd");
    EXPECT_THROW(load_dataset(ds), FormatError);
}

TEST(LoadDataset, MissingFileIsIoError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    fs::remove(ds / kLabelsFile);
    EXPECT_THROW(load_dataset(ds), IoError);
    EXPECT_THROW(load_dataset(dir / "nowhere"), IoError);
}

TEST(LoadDataset, IndexEqualToSampleCountIsValidationError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    rewrite_splits(ds, [](SplitsFile& s) { s.splits.test_unseen_idx.push_back(8); });
    expect_validation_error(ds, "test_unseen_idx");
}

TEST(LoadDataset, LabelCountMismatchIsValidationError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    write_labels_file(ds / kLabelsFile, {0, 0, 1, 1, 2, 2, 3});
    expect_validation_error(ds, "labels");
}

TEST(LoadDataset, LabelOutOfRangeIsValidationError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    write_labels_file(ds / kLabelsFile, {0, 0, 1, 1, 2, 2, 3, 4});
    expect_validation_error(ds, "labels");
}

TEST(LoadDataset, OverlappingClassListsAreValidationError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    rewrite_splits(ds, [](SplitsFile& s) { s.unseen_classes.push_back(1); });
    expect_validation_error(ds, "seen_classes/unseen_classes");
}

TEST(LoadDataset, TrainLabelOutsideSeenIsValidationError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    rewrite_splits(ds, [](SplitsFile& s) { s.splits.train_idx.push_back(4); });
    expect_validation_error(ds, "train_idx");
}

TEST(LoadDataset, UnseenSplitWithSeenLabelIsValidationError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    rewrite_splits(ds, [](SplitsFile& s) { s.splits.test_unseen_idx.push_back(1); });
    expect_validation_error(ds, "test_unseen_idx");
}

TEST(LoadDataset, TrainTestOverlapIsValidationError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    rewrite_splits(ds, [](SplitsFile& s) { s.splits.test_seen_idx.push_back(0); });
    expect_validation_error(ds, "train_idx/test_seen_idx");
}

TEST(LoadDataset, DuplicateIndexIsValidationError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    rewrite_splits(ds, [](SplitsFile& s) { s.splits.train_idx.push_back(0); });
    expect_validation_error(ds, "train_idx");
}

TEST(LoadDataset, MalformedSplitsJsonIsFormatError) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    write_bytes(ds / kSplitsFile, "{\"train_idx\": [0, 2]");
    EXPECT_THROW(load_dataset(ds), FormatError);
    write_bytes(ds / kSplitsFile, R"({"train_idx": [0], "val_idx": [], "test_seen_idx": [1]})");
    EXPECT_THROW(load_dataset(ds), FormatError);
    write_bytes(ds / kSplitsFile,
                R"({"train_idx": [-1], "val_idx": [], "test_seen_idx": [1], "test_unseen_idx": [4],
                    "seen_classes": [0, 1], "unseen_classes": [2, 3]})");
    EXPECT_THROW(load_dataset(ds), FormatError);
}

TEST(LoadDataset, ZeroPrototypeRowNamesClass) {
    TempDir dir("data");
    const fs::path ds = tiny_copy(dir);
    Matrix p = read_matrix_file(ds / kPrototypesFile);
    for (double& x : p.row(2)) x = 0.0;
    write_matrix_file(ds / kPrototypesFile, p);
    expect_validation_error(ds, "class 2");
}

TEST(Normalize, Examples) {
    const Matrix out = l2_normalize_prototypes(Matrix(2, 2, {3, 4, 0, 1}));
    EXPECT_NEAR(out(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(out(0, 1), 0.8, 1e-15);
    EXPECT_EQ(out(1, 0), 0.0);
    EXPECT_EQ(out(1, 1), 1.0);
    EXPECT_THROW(l2_normalize_prototypes(Matrix(2, 2, {1, 0, 0, 0})), ValidationError);
}

TEST(Normalize, UnitNormAndIdempotent) {
    std::mt19937_64 rng(3);
    const Matrix m = igsc::testing::random_matrix(20, 7, rng);
    const Matrix once = l2_normalize_prototypes(m);
    for (std::size_t r = 0; r < once.rows(); ++r) {
        double n = 0.0;
        for (double x : once.row(r)) n += x * x;
        EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
    }
    const Matrix twice = l2_normalize_prototypes(once);
    for (std::size_t k = 0; k < once.size(); ++k) EXPECT_NEAR(twice.flat()[k], once.flat()[k], 1e-15);
}

TEST(MatrixFile, RoundTripOfF32Values) {
    TempDir dir("mat");
    const Matrix m(2, 3, {0.5, -1.25, 3.0, static_cast<double>(0.1f), 1e-7f, -0.0});
    write_matrix_file(dir / "m.f32bin", m);
    EXPECT_EQ(read_matrix_file(dir / "m.f32bin"), m);
    const std::string bytes = read_bytes(dir / "m.f32bin");
    EXPECT_EQ(bytes.size(), 8u + 8u + 6u * 4u);
    EXPECT_EQ(bytes.substr(0, 8), "IGSCMAT1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);  // little-endian rows
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3u);
}

TEST(LabelsFile, RoundTrip) {
    TempDir dir("lbl");
    const std::vector<ClassId> labels{0, 7, 70000, 3};
    write_labels_file(dir / "l.u32bin", labels);
    EXPECT_EQ(read_labels_file(dir / "l.u32bin"), labels);
    EXPECT_EQ(read_bytes(dir / "l.u32bin").substr(0, 8), "IGSCLBL1");
}

TEST(WriteDataset, RoundTripIsBitExact) {
    TempDir dir("ds");
    const Dataset ds = make_synthetic({});
    write_dataset(ds, dir / "syn");
    const Dataset back = load_dataset(dir / "syn");
    EXPECT_EQ(back, ds);
    const Dataset tiny = load_dataset(kTiny);
    write_dataset(tiny, dir / "tiny");
    EXPECT_EQ(load_dataset(dir / "tiny"), tiny);
    for (const char* f : {kFeaturesFile, kLabelsFile, kPrototypesFile}) {
        EXPECT_EQ(read_bytes(dir / "tiny" / f), read_bytes(kTiny / f)) << f;
    }
}

TEST(Synthetic, CountsAndDisjointClasses) {
    const Dataset ds = make_synthetic({});
    EXPECT_EQ(ds.sample_count(), 750u);
    EXPECT_EQ(ds.class_count(), 25u);
    EXPECT_EQ(ds.feature_dim(), 32u);
    EXPECT_EQ(ds.prototype_dim(), 16u);
    EXPECT_EQ(ds.seen_classes.size(), 20u);
    EXPECT_EQ(ds.unseen_classes.size(), 5u);
    std::set<ClassId> all(ds.seen_classes.begin(), ds.seen_classes.end());
    all.insert(ds.unseen_classes.begin(), ds.unseen_classes.end());
    EXPECT_EQ(all.size(), 25u);
    EXPECT_EQ(ds.splits.train_idx.size(), 20u * 24u);
    EXPECT_EQ(ds.splits.test_seen_idx.size(), 20u * 6u);
    EXPECT_EQ(ds.splits.test_unseen_idx.size(), 5u * 30u);
    EXPECT_NO_THROW(ds.validate());
}

TEST(Synthetic, SameSeedIsBitIdentical) {
    SyntheticSpec spec;
    spec.seed = 42;
    EXPECT_EQ(make_synthetic(spec), make_synthetic(spec));
    SyntheticSpec other = spec;
    other.seed = 43;
    EXPECT_NE(make_synthetic(other).features, make_synthetic(spec).features);
}

TEST(Synthetic, RawPrototypesAreUniformDraws) {
    const Dataset ds = make_synthetic({});
    for (double x : ds.prototypes.flat()) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
    }
}

TEST(Synthetic, AlwaysPassesValidation) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SyntheticSpec spec;
        spec.seed = seed;
        spec.seen_count = 1 + seed % 4;
        spec.unseen_count = 1 + seed % 3;
        spec.samples_per_class = 1 + seed % 5;
        spec.d = 1 + seed % 6;
        spec.v = 1 + seed % 9;
        spec.noise_sigma = 0.1 * static_cast<double>(seed % 3);
        const Dataset ds = make_synthetic(spec);
        EXPECT_NO_THROW(ds.validate()) << seed;
        EXPECT_EQ(ds.sample_count(), (spec.seen_count + spec.unseen_count) * spec.samples_per_class);
    }
}

TEST(Synthetic, InvalidSpecIsRejected) {
    SyntheticSpec spec;
    spec.seen_count = 0;
    EXPECT_THROW(make_synthetic(spec), ValidationError);
    spec = {};
    spec.noise_sigma = -1.0;
    EXPECT_THROW(make_synthetic(spec), ValidationError);
}

TEST(Synthetic, NearestPrototypeOracleIsAccurate) {
    const SyntheticSpec spec;
    const Dataset ds = make_synthetic(spec);
    const Matrix A = synthetic_ground_truth_map(spec);
    // Class centers A * phi(c), then nearest center over unseen classes.
    std::map<ClassId, std::pair<int, int>> hits;
    for (const auto i : ds.splits.test_unseen_idx) {
        ClassId best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (const ClassId c : ds.unseen_classes) {
            double dist = 0.0;
            for (std::size_t r = 0; r < A.rows(); ++r) {
                double center = 0.0;
                for (std::size_t k = 0; k < A.cols(); ++k) center += A(r, k) * ds.prototypes(c, k);
                dist += (ds.features(i, r) - center) * (ds.features(i, r) - center);
            }
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        auto& [ok, n] = hits[ds.labels[i]];
        ok += best == ds.labels[i];
        ++n;
    }
    double macro = 0.0;
    for (const auto& [c, h] : hits) macro += static_cast<double>(h.first) / h.second;
    macro /= static_cast<double>(hits.size());
    EXPECT_GE(macro, 0.95);
}

TEST(MergeValidation, MovesValIntoTrain) {
    Dataset ds = load_dataset(kTiny);
    ds.splits.train_idx = {0};
    ds.splits.val_idx = {2};
    const Dataset merged = merge_validation_into_train(ds);
    EXPECT_EQ(merged.splits.train_idx, (IndexList{0, 2}));
    EXPECT_TRUE(merged.splits.val_idx.empty());
    EXPECT_EQ(merged.splits.test_seen_idx, ds.splits.test_seen_idx);
}
