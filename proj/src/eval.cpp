#include "igsc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "igsc/error.hpp"

namespace igsc {

using nlohmann::json;

namespace {

std::vector<ClassId> union_classes(const Dataset& ds) {
    std::set<ClassId> u(ds.seen_classes.begin(), ds.seen_classes.end());
    u.insert(ds.unseen_classes.begin(), ds.unseen_classes.end());
    return {u.begin(), u.end()};
}

// Seen flags over all C classes; classes outside the union can never be predicted.
struct UnionMask {
    std::vector<bool> seen;
    std::vector<bool> member;
};

UnionMask union_mask(const Dataset& ds) {
    UnionMask m{std::vector<bool>(ds.class_count(), false), std::vector<bool>(ds.class_count(), false)};
    for (const auto c : ds.seen_classes) m.seen[c] = m.member[c] = true;
    for (const auto c : ds.unseen_classes) m.member[c] = true;
    return m;
}

ClassId predict_calibrated(std::span<const double> scores, const UnionMask& mask, double gamma) {
    ClassId best = 0;
    double best_score = 0.0;
    bool have = false;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        if (!mask.member[c]) continue;
        const double s = mask.seen[c] ? scores[c] - gamma : scores[c];
        if (!have || s > best_score) {
            best = static_cast<ClassId>(c);
            best_score = s;
            have = true;
        }
    }
    if (!have) throw UsageError("prediction needs a non-empty class set");
    return best;
}

std::vector<ClassId> truths_of(const Dataset& ds, std::span<const std::uint32_t> indices) {
    std::vector<ClassId> out;
    out.reserve(indices.size());
    for (const auto i : indices) out.push_back(ds.labels[i]);
    return out;
}

EvalReport report_from_scores(const Dataset& ds, const Matrix& seen_scores, const Matrix& unseen_scores,
                              const UnionMask& mask, double gamma) {
    EvalReport r;
    r.gamma = gamma;
    r.confusion = Matrix(ds.class_count(), ds.class_count());
    auto run = [&](const Matrix& scores, std::span<const std::uint32_t> idx,
                   std::span<const ClassId> class_set) {
        std::vector<ClassId> preds(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            preds[k] = predict_calibrated(scores.row(k), mask, gamma);
            r.confusion(ds.labels[idx[k]], preds[k]) += 1.0;
        }
        const auto truths = truths_of(ds, idx);
        for (const auto& [c, acc] : per_class_accuracies(preds, truths, class_set)) r.per_class_acc[c] = acc;
        return per_class_top1(preds, truths, class_set);
    };
    r.acc_s = run(seen_scores, ds.splits.test_seen_idx, ds.seen_classes);
    r.acc_u = run(unseen_scores, ds.splits.test_unseen_idx, ds.unseen_classes);
    r.H = harmonic_mean(r.acc_s, r.acc_u);
    return r;
}

void require_gzsl_splits(const Dataset& ds) {
    if (ds.splits.test_seen_idx.empty()) throw UsageError("evaluation needs a non-empty test_seen split");
    if (ds.splits.test_unseen_idx.empty()) {
        throw UsageError("evaluation needs a non-empty test_unseen split");
    }
}

}  // namespace

std::map<ClassId, double> per_class_accuracies(std::span<const ClassId> predictions,
                                               std::span<const ClassId> truths,
                                               std::span<const ClassId> class_set) {
    if (predictions.size() != truths.size()) {
        throw ShapeError("per-class accuracy: " + std::to_string(predictions.size()) +
                         " predictions for " + std::to_string(truths.size()) + " truths");
    }
    if (class_set.empty()) throw UsageError("per-class accuracy: empty class set");
    const std::set<ClassId> wanted(class_set.begin(), class_set.end());
    std::map<ClassId, std::pair<std::size_t, std::size_t>> tally;  // hits, total
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (!wanted.contains(truths[i])) continue;
        auto& t = tally[truths[i]];
        t.second += 1;
        if (predictions[i] == truths[i]) t.first += 1;
    }
    std::map<ClassId, double> out;
    for (const auto& [c, t] : tally) {
        out[c] = static_cast<double>(t.first) / static_cast<double>(t.second);
    }
    return out;
}

double per_class_top1(std::span<const ClassId> predictions, std::span<const ClassId> truths,
                      std::span<const ClassId> class_set) {
    const auto accs = per_class_accuracies(predictions, truths, class_set);
    if (accs.empty()) throw UsageError("per-class accuracy: no samples belong to the class set");
    double total = 0.0;
    for (const auto& [c, acc] : accs) total += acc;
    return total / static_cast<double>(accs.size());
}

double harmonic_mean(double acc_s, double acc_u) {
    const double sum = acc_s + acc_u;
    if (sum <= 0.0) return 0.0;
    return 2.0 * acc_s * acc_u / sum;
}

Matrix score_split(const ScoreModel& model, const Dataset& dataset, std::span<const std::uint32_t> indices) {
    Matrix out(indices.size(), dataset.class_count());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const Vector s = model.scores(dataset.features.row(indices[k]), dataset.prototypes);
        if (s.size() != dataset.class_count()) {
            throw ShapeError("model returned " + std::to_string(s.size()) + " scores for " +
                             std::to_string(dataset.class_count()) + " classes");
        }
        std::ranges::copy(s, out.row(k).begin());
    }
    return out;
}

EvalReport evaluate_gzsl(const ScoreModel& model, const Dataset& dataset, double gamma) {
    require_gzsl_splits(dataset);
    const Matrix seen = score_split(model, dataset, dataset.splits.test_seen_idx);
    const Matrix unseen = score_split(model, dataset, dataset.splits.test_unseen_idx);
    return report_from_scores(dataset, seen, unseen, union_mask(dataset), gamma);
}

double evaluate_split_zsl(const ScoreModel& model, const Dataset& dataset,
                          std::span<const std::uint32_t> indices, std::span<const ClassId> candidates) {
    if (indices.empty()) throw UsageError("zsl evaluation: empty split");
    const Matrix scores = score_split(model, dataset, indices);
    std::vector<ClassId> preds(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) preds[k] = argmax_over(scores.row(k), candidates);
    return per_class_top1(preds, truths_of(dataset, indices), candidates);
}

double evaluate_zsl(const ScoreModel& model, const Dataset& dataset) {
    if (dataset.splits.test_unseen_idx.empty()) {
        throw UsageError("zsl evaluation needs a non-empty test_unseen split");
    }
    return evaluate_split_zsl(model, dataset, dataset.splits.test_unseen_idx, dataset.unseen_classes);
}

SweepCurve calibration_sweep(const ScoreModel& model, const Dataset& dataset,
                             std::span<const double> gammas) {
    if (gammas.empty()) throw UsageError("calibration sweep: no gammas given");
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        if (!std::isfinite(gammas[i])) throw UsageError("calibration sweep: non-finite gamma");
        if (i > 0 && !(gammas[i] > gammas[i - 1])) {
            throw UsageError("calibration sweep: gammas must be strictly increasing");
        }
    }
    require_gzsl_splits(dataset);
    const Matrix seen = score_split(model, dataset, dataset.splits.test_seen_idx);
    const Matrix unseen = score_split(model, dataset, dataset.splits.test_unseen_idx);
    const UnionMask mask = union_mask(dataset);

    SweepCurve curve;
    double best_h = -1.0;
    for (const double g : gammas) {
        curve.points.push_back(report_from_scores(dataset, seen, unseen, mask, g));
        if (curve.points.back().H > best_h) {
            best_h = curve.points.back().H;
            curve.best_gamma = g;
        }
    }
    return curve;
}

double test_score_range(const ScoreModel& model, const Dataset& dataset) {
    const auto members = union_classes(dataset);
    double range = 0.0;
    for (const auto* split : {&dataset.splits.test_seen_idx, &dataset.splits.test_unseen_idx}) {
        const Matrix scores = score_split(model, dataset, *split);
        for (std::size_t k = 0; k < scores.rows(); ++k) {
            double lo = scores(k, members.front());
            double hi = lo;
            for (const auto c : members) {
                lo = std::min(lo, scores(k, c));
                hi = std::max(hi, scores(k, c));
            }
            range = std::max(range, hi - lo);
        }
    }
    return range;
}

std::vector<double> gamma_grid(double max_gamma, std::size_t points) {
    if (points == 0) throw UsageError("gamma grid needs at least one point");
    if (!(max_gamma > 0.0) && points > 1) throw UsageError("gamma grid needs a positive maximum");
    std::vector<double> out(points, 0.0);
    for (std::size_t i = 1; i < points; ++i) {
        out[i] = max_gamma * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return out;
}

std::pair<Matrix, Matrix> split_confusion(const EvalReport& report, const Dataset& dataset) {
    const std::size_t classes = report.confusion.cols();
    auto take = [&](const std::vector<ClassId>& rows) {
        Matrix out(rows.size(), classes);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            std::ranges::copy(report.confusion.row(rows[r]), out.row(r).begin());
        }
        return out;
    };
    return {take(dataset.seen_classes), take(dataset.unseen_classes)};
}

EvalReport average_reports(std::span<const EvalReport> reports) {
    if (reports.empty()) throw UsageError("no reports to average");
    EvalReport out;
    out.gamma = reports.front().gamma;
    out.confusion = Matrix(reports.front().confusion.rows(), reports.front().confusion.cols());
    const double n = static_cast<double>(reports.size());
    for (const auto& r : reports) {
        if (r.confusion.rows() != out.confusion.rows() || r.gamma != out.gamma) {
            throw UsageError("reports to average differ in label space or gamma");
        }
        out.acc_s += r.acc_s / n;
        out.acc_u += r.acc_u / n;
        out.H += r.H / n;
        for (const auto& [c, a] : r.per_class_acc) out.per_class_acc[c] += a / n;
        for (std::size_t i = 0; i < out.confusion.size(); ++i) {
            out.confusion.flat()[i] += r.confusion.flat()[i] / n;
        }
    }
    return out;
}

json report_to_json(const EvalReport& report) {
    json per_class = json::object();
    for (const auto& [c, a] : report.per_class_acc) per_class[std::to_string(c)] = a;
    json confusion = json::array();
    for (std::size_t r = 0; r < report.confusion.rows(); ++r) {
        const auto row = report.confusion.row(r);
        confusion.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return {{"gamma", report.gamma},     {"acc_s", report.acc_s},
            {"acc_u", report.acc_u},     {"H", report.H},
            {"per_class_acc", per_class}, {"confusion", confusion}};
}

EvalReport report_from_json(const json& doc) {
    for (const char* key : {"gamma", "acc_s", "acc_u", "H", "per_class_acc", "confusion"}) {
        if (!doc.contains(key)) throw FormatError(std::string("report: missing key \"") + key + "\"");
    }
    EvalReport r;
    try {
        r.gamma = doc.at("gamma").get<double>();
        r.acc_s = doc.at("acc_s").get<double>();
        r.acc_u = doc.at("acc_u").get<double>();
        r.H = doc.at("H").get<double>();
        for (const auto& [key, value] : doc.at("per_class_acc").items()) {
            r.per_class_acc[static_cast<ClassId>(std::stoul(key))] = value.get<double>();
        }
        const json& conf = doc.at("confusion");
        const std::size_t rows = conf.size();
        r.confusion = Matrix(rows, rows);
        for (std::size_t i = 0; i < rows; ++i) {
            if (conf[i].size() != rows) throw FormatError("report: confusion matrix is not square");
            for (std::size_t j = 0; j < rows; ++j) r.confusion(i, j) = conf[i][j].get<double>();
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    } catch (const std::logic_error& e) {
        throw FormatError(std::string("report: bad class id: ") + e.what());
    }
    return r;
}

json sweep_to_json(const SweepCurve& curve) {
    json points = json::array();
    for (const auto& p : curve.points) points.push_back(report_to_json(p));
    return {{"best_gamma", curve.best_gamma}, {"points", points}};
}

}  // namespace igsc
