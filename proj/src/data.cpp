#include "igsc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "atomic_file.hpp"
#include "binary_io.hpp"
#include "igsc/error.hpp"

namespace igsc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kMatrixMagic = "IGSCMAT1";
constexpr std::string_view kLabelsMagic = "IGSCLBL1";

std::ifstream open_input(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("missing file " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

IndexList read_index_array(const json& doc, const char* key, const fs::path& path) {
    if (!doc.contains(key)) {
        throw FormatError(path.string() + ": missing array \"" + key + "\"");
    }
    const json& arr = doc.at(key);
    if (!arr.is_array()) throw FormatError(path.string() + ": \"" + key + "\" is not an array");
    IndexList out;
    out.reserve(arr.size());
    for (const json& v : arr) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
            v.get<std::int64_t>() > static_cast<std::int64_t>(UINT32_MAX)) {
            throw FormatError(path.string() + ": \"" + key + "\" holds a non-index value " + v.dump());
        }
        out.push_back(v.get<std::uint32_t>());
    }
    return out;
}

void check_unique(const IndexList& idx, const char* field) {
    std::set<std::uint32_t> seen;
    for (const auto i : idx) {
        if (!seen.insert(i).second) {
            throw ValidationError(std::string(field) + ": duplicate index " + std::to_string(i));
        }
    }
}

void check_indices(const IndexList& idx, std::size_t n, const char* field) {
    for (const auto i : idx) {
        if (i >= n) {
            throw ValidationError(std::string(field) + ": index " + std::to_string(i) +
                                  " out of range for " + std::to_string(n) + " samples");
        }
    }
    check_unique(idx, field);
}

void check_labels_within(const Dataset& ds, const IndexList& idx, const std::set<ClassId>& allowed,
                         const char* field, const char* class_list) {
    for (const auto i : idx) {
        if (!allowed.contains(ds.labels[i])) {
            throw ValidationError(std::string(field) + ": sample " + std::to_string(i) + " has class " +
                                  std::to_string(ds.labels[i]) + " which is not in " + class_list);
        }
    }
}

}  // namespace

std::vector<bool> Dataset::seen_flags() const {
    std::vector<bool> flags(class_count(), false);
    for (const auto c : seen_classes) {
        if (c < flags.size()) flags[c] = true;
    }
    return flags;
}

void Dataset::validate() const {
    const std::size_t n = features.rows();
    const std::size_t classes = prototypes.rows();
    if (n == 0 || features.cols() == 0) throw ValidationError("features: empty matrix");
    if (classes == 0 || prototypes.cols() == 0) throw ValidationError("prototypes: empty matrix");
    if (raw_prototypes.rows() != classes || raw_prototypes.cols() != prototypes.cols()) {
        throw ValidationError("prototypes: raw and normalized shapes differ");
    }
    if (labels.size() != n) {
        throw ValidationError("labels: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(n) + " feature rows");
    }
    require_finite(features.flat(), "features");
    require_finite(raw_prototypes.flat(), "prototypes");
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= classes) {
            throw ValidationError("labels: sample " + std::to_string(i) + " has class " +
                                  std::to_string(labels[i]) + " but only " + std::to_string(classes) +
                                  " prototypes exist");
        }
    }
    for (const auto* list : {&seen_classes, &unseen_classes}) {
        const char* name = list == &seen_classes ? "seen_classes" : "unseen_classes";
        for (const auto c : *list) {
            if (c >= classes) {
                throw ValidationError(std::string(name) + ": class " + std::to_string(c) +
                                      " out of range for " + std::to_string(classes) + " prototypes");
            }
        }
        std::set<ClassId> uniq(list->begin(), list->end());
        if (uniq.size() != list->size()) {
            throw ValidationError(std::string(name) + ": duplicate class id");
        }
    }
    const std::set<ClassId> seen(seen_classes.begin(), seen_classes.end());
    const std::set<ClassId> unseen(unseen_classes.begin(), unseen_classes.end());
    for (const auto c : seen) {
        if (unseen.contains(c)) {
            throw ValidationError("seen_classes/unseen_classes: class " + std::to_string(c) +
                                  " is in both lists");
        }
    }

    check_indices(splits.train_idx, n, "train_idx");
    check_indices(splits.val_idx, n, "val_idx");
    check_indices(splits.test_seen_idx, n, "test_seen_idx");
    check_indices(splits.test_unseen_idx, n, "test_unseen_idx");

    const std::set<std::uint32_t> train(splits.train_idx.begin(), splits.train_idx.end());
    for (const auto i : splits.test_seen_idx) {
        if (train.contains(i)) {
            throw ValidationError("train_idx/test_seen_idx: sample " + std::to_string(i) +
                                  " is in both splits");
        }
    }

    check_labels_within(*this, splits.train_idx, seen, "train_idx", "seen_classes");
    check_labels_within(*this, splits.val_idx, seen, "val_idx", "seen_classes");
    check_labels_within(*this, splits.test_seen_idx, seen, "test_seen_idx", "seen_classes");
    check_labels_within(*this, splits.test_unseen_idx, unseen, "test_unseen_idx", "unseen_classes");
}

Matrix read_matrix_file(const fs::path& path) {
    auto in = open_input(path);
    const std::string what = path.filename().string();
    binio::expect_magic(in, kMatrixMagic, what);
    const std::uint32_t rows = binio::read_u32(in, what);
    const std::uint32_t cols = binio::read_u32(in, what);
    const auto expected = static_cast<std::uintmax_t>(rows) * cols * 4 + 16;
    if (fs::file_size(path) != expected) {
        throw FormatError(what + ": header says " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " but file holds " + std::to_string(fs::file_size(path)) + " bytes");
    }
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& v : data) v = binio::read_f32(in, what);
    return Matrix(rows, cols, std::move(data));
}

void write_matrix_file(const fs::path& path, const Matrix& m) {
    if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) {
        throw ShapeError("matrix " + m.shape_string() + " too large for the file format");
    }
    detail::write_file_atomically(path, [&](std::ostream& out) {
        binio::write_magic(out, kMatrixMagic);
        binio::write_u32(out, static_cast<std::uint32_t>(m.rows()));
        binio::write_u32(out, static_cast<std::uint32_t>(m.cols()));
        for (const double v : m.flat()) binio::write_f32(out, static_cast<float>(v));
    });
}

std::vector<ClassId> read_labels_file(const fs::path& path) {
    auto in = open_input(path);
    const std::string what = path.filename().string();
    binio::expect_magic(in, kLabelsMagic, what);
    const std::uint32_t count = binio::read_u32(in, what);
    const auto expected = static_cast<std::uintmax_t>(count) * 4 + 12;
    if (fs::file_size(path) != expected) {
        throw FormatError(what + ": header says " + std::to_string(count) + " labels but file holds " +
                          std::to_string(fs::file_size(path)) + " bytes");
    }
    std::vector<ClassId> labels(count);
    for (auto& l : labels) l = binio::read_u32(in, what);
    return labels;
}

void write_labels_file(const fs::path& path, const std::vector<ClassId>& labels) {
    detail::write_file_atomically(path, [&](std::ostream& out) {
        binio::write_magic(out, kLabelsMagic);
        binio::write_u32(out, static_cast<std::uint32_t>(labels.size()));
        for (const auto l : labels) binio::write_u32(out, l);
    });
}

SplitsFile read_splits_file(const fs::path& path) {
    auto in = open_input(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.filename().string() + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object()) throw FormatError(path.filename().string() + ": top level is not an object");
    SplitsFile s;
    s.splits.train_idx = read_index_array(doc, "train_idx", path.filename());
    s.splits.val_idx = read_index_array(doc, "val_idx", path.filename());
    s.splits.test_seen_idx = read_index_array(doc, "test_seen_idx", path.filename());
    s.splits.test_unseen_idx = read_index_array(doc, "test_unseen_idx", path.filename());
    s.seen_classes = read_index_array(doc, "seen_classes", path.filename());
    s.unseen_classes = read_index_array(doc, "unseen_classes", path.filename());
    return s;
}

void write_splits_file(const fs::path& path, const SplitsFile& s) {
    json doc = {
        {"train_idx", s.splits.train_idx},
        {"val_idx", s.splits.val_idx},
        {"test_seen_idx", s.splits.test_seen_idx},
        {"test_unseen_idx", s.splits.test_unseen_idx},
        {"seen_classes", s.seen_classes},
        {"unseen_classes", s.unseen_classes},
    };
    detail::write_file_atomically(path, [&](std::ostream& out) { out << doc.dump() << '\n'; });
}

Dataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
    Dataset ds;
    ds.features = read_matrix_file(dir / kFeaturesFile);
    ds.labels = read_labels_file(dir / kLabelsFile);
    ds.raw_prototypes = read_matrix_file(dir / kPrototypesFile);
    auto splits = read_splits_file(dir / kSplitsFile);
    ds.splits = std::move(splits.splits);
    ds.seen_classes = std::move(splits.seen_classes);
    ds.unseen_classes = std::move(splits.unseen_classes);
    require_finite(ds.raw_prototypes.flat(), "prototypes");
    ds.prototypes = l2_normalize_prototypes(ds.raw_prototypes);
    ds.validate();
    return ds;
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create dataset directory " + dir.string());
    }
    write_matrix_file(dir / kFeaturesFile, ds.features);
    write_labels_file(dir / kLabelsFile, ds.labels);
    write_matrix_file(dir / kPrototypesFile, ds.raw_prototypes);
    write_splits_file(dir / kSplitsFile, {ds.splits, ds.seen_classes, ds.unseen_classes});
}

Matrix l2_normalize_prototypes(const Matrix& prototypes) {
    Matrix out = prototypes;
    for (std::size_t c = 0; c < out.rows(); ++c) {
        auto row = out.row(c);
        double sq = 0.0;
        for (const double v : row) sq += v * v;
        const double norm = std::sqrt(sq);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw ValidationError("prototypes: class " + std::to_string(c) +
                                  " has a zero or non-finite norm");
        }
        for (double& v : row) v /= norm;
    }
    return out;
}

Dataset merge_validation_into_train(Dataset ds) {
    auto& s = ds.splits;
    s.train_idx.insert(s.train_idx.end(), s.val_idx.begin(), s.val_idx.end());
    s.val_idx.clear();
    ds.validate();
    return ds;
}

}  // namespace igsc
