#pragma once

#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "igsc/data.hpp"
#include "igsc/model.hpp"

namespace igsc {

struct EvalReport {
    double gamma = 0.0;
    double acc_s = 0.0;
    double acc_u = 0.0;
    double H = 0.0;
    std::map<ClassId, double> per_class_acc;
    Matrix confusion;  ///< C x C counts, rows are the true class

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct SweepCurve {
    std::vector<EvalReport> points;  ///< one per gamma, gammas strictly increasing
    double best_gamma = 0.0;
};

/// Macro top-1: mean over classes of `class_set` that have at least one sample of
/// their within-class accuracy. Samples whose truth is outside `class_set` are ignored.
double per_class_top1(std::span<const ClassId> predictions, std::span<const ClassId> truths,
                      std::span<const ClassId> class_set);

/// Within-class accuracy for each class of `class_set` with at least one sample.
std::map<ClassId, double> per_class_accuracies(std::span<const ClassId> predictions,
                                               std::span<const ClassId> truths,
                                               std::span<const ClassId> class_set);

double harmonic_mean(double acc_s, double acc_u);

/// Raw scores of every sample in `indices` (one row each) against all prototypes.
Matrix score_split(const ScoreModel& model, const Dataset& dataset, std::span<const std::uint32_t> indices);

/// GZSL protocol: both test splits predicted over the union of seen and unseen classes
/// with seen scores lowered by gamma.
EvalReport evaluate_gzsl(const ScoreModel& model, const Dataset& dataset, double gamma);

/// ZSL protocol: test_unseen predicted over unseen candidates only.
double evaluate_zsl(const ScoreModel& model, const Dataset& dataset);

/// Macro top-1 of `indices` predicted over `candidates`.
double evaluate_split_zsl(const ScoreModel& model, const Dataset& dataset,
                          std::span<const std::uint32_t> indices, std::span<const ClassId> candidates);

/// One GZSL report per gamma; best_gamma maximizes H, ties to the smallest gamma.
SweepCurve calibration_sweep(const ScoreModel& model, const Dataset& dataset,
                             std::span<const double> gammas);

/// Largest max-minus-min score spread over all test images, restricted to the union of classes.
double test_score_range(const ScoreModel& model, const Dataset& dataset);

/// Evenly spaced grid of `points` gammas on [0, max_gamma].
std::vector<double> gamma_grid(double max_gamma, std::size_t points);

/// Confusion rows split by the truth's membership: {seen-truth rows, unseen-truth rows},
/// each keeping all C columns.
std::pair<Matrix, Matrix> split_confusion(const EvalReport& report, const Dataset& dataset);

/// Field-wise mean of reports with the same gamma and label space.
EvalReport average_reports(std::span<const EvalReport> reports);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);
nlohmann::json sweep_to_json(const SweepCurve& curve);

}  // namespace igsc
