#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "igsc/data.hpp"
#include "igsc/model.hpp"
#include "igsc/netcore.hpp"

namespace igsc {

/// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] before taking logs.
inline constexpr double kProbClamp = 1e-12;

struct LossOptions {
    ScoringMode mode = ScoringMode::softmax;
    /// Drop the (1 - y) log(1 - p) terms, giving the conventional -log p_target.
    bool pure_softmax_ce = false;
};

/// -sum_j [y_j log p_j + (1 - y_j) log(1 - p_j)] with clamped p.
/// Throws UsageError unless `onehot` holds exactly one 1 and zeros elsewhere.
double loss(std::span<const double> probs, std::span<const double> onehot,
            bool pure_softmax_ce = false);

/// d loss / d probs for a target index; zero where the clamp is active.
Vector loss_gradient(std::span<const double> probs, std::size_t target, bool pure_softmax_ce = false);

/// One training example: an image embedding and the row of the training prototype matrix it belongs to.
struct Sample {
    std::span<const double> image;
    std::size_t target = 0;
};

/// Summed loss of a batch (forward pass only).
double batch_loss(std::span<const Sample> batch, const Matrix& prototypes, const HypernetParams& W,
                  const LossOptions& opts);

struct BatchGradient {
    double loss = 0.0;
    HypernetParams grad;  ///< same shapes as the parameters
};

/// Exact gradient of the summed batch loss with respect to every hypernetwork tensor.
/// Throws NumericError naming the tensor when an intermediate is non-finite.
BatchGradient backward(std::span<const Sample> batch, const Matrix& prototypes,
                       const HypernetParams& W, const LossOptions& opts);

struct AdamConfig {
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment accumulators mirroring every hypernetwork tensor.
struct AdamState {
    std::vector<Vector> m;
    std::vector<Vector> v;
    std::uint64_t t = 0;

    static AdamState for_params(const HypernetParams& W);
};

void adam_step(HypernetParams& W, const HypernetParams& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
    ClassifierForm form = ClassifierForm::nonlinear(1, 30);
    std::size_t h1 = 1024;
    std::size_t h2 = 1024;
    Activation hidden_activation = Activation::tanh;
    double learning_rate = 1e-5;
    std::size_t batch_size = 64;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    ScoringMode scoring_mode = ScoringMode::softmax;
    bool pure_softmax_ce = false;
    /// Train on train + val.
    bool merge_val = false;
    /// Keep the parameters of the epoch with the best validation accuracy.
    bool select_best_on_val = false;
    /// Stop after this many epochs without validation improvement; 0 disables.
    std::size_t early_stop_patience = 0;

    void validate() const;
    AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
    LossOptions loss_options() const { return {scoring_mode, pure_softmax_ce}; }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;  ///< mean per-sample loss over the epoch
    std::optional<double> val_accuracy;
    double seconds = 0.0;
};

using TrainHistory = std::vector<EpochRecord>;

struct TrainResult {
    HypernetParams params;
    TrainHistory history;
};

/// Uniform Glorot initialization of each weight matrix; zero biases.
HypernetParams init_params(std::size_t input_dim, const TrainConfig& config, std::mt19937_64& rng);

/// Called after each epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&, const HypernetParams&)>;

/// Minimizes the batch loss over the train split with Adam. Deterministic in config.seed.
TrainResult train(const Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Sorted distinct classes of the train split; the softmax at training time runs over these.
std::vector<ClassId> training_classes(const Dataset& dataset);

struct GradcheckConfig {
    std::size_t trials = 100;
    std::uint64_t seed = 1;
    double eps = 1e-6;
    double tolerance = 1e-4;
};

struct GradcheckReport {
    std::size_t checks = 0;  ///< number of random nets checked
    std::size_t failures = 0;
    double worst_relative_error = 0.0;
    std::string worst_tensor;
    std::string worst_case;

    bool passed() const { return failures == 0; }
};

/// Compares backward() against central differences on random tiny nets,
/// for both classifier forms and both scoring modes. Relative error uses
/// the denominator max(1, |analytic|).
GradcheckReport gradient_check(const GradcheckConfig& config);

/// IGSCMDL1 checkpoint file.
void save_checkpoint(const std::filesystem::path& path, const HypernetParams& W);
HypernetParams load_checkpoint(const std::filesystem::path& path);

}  // namespace igsc
