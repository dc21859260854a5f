#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lilan/datasets.hpp"
#include "lilan/model.hpp"

namespace lilan {

enum class LossKind { ExpProduct, AbsRelative, RelL2 };

[[nodiscard]] std::string to_string(LossKind k);
[[nodiscard]] LossKind loss_from_string(const std::string& s);

inline constexpr double kExponentClamp = 300.0;

struct LossResult {
    double value = 0.0;
    /// d value / d pred, same shape as pred (empty unless requested).
    Matrix grad;
    /// Samples whose exponent hit kExponentClamp (exp_product only).
    long clamped = 0;
};

// Every loss takes n_x x (N * T) blocks laid out sample-major (column i * T + j).

/// mean_i 10^{ (1/T) Σ_j mean_k |x - x̂| }.
[[nodiscard]] LossResult loss_exp_product(const Matrix& pred, const Matrix& target, Eigen::Index steps,
                                          bool want_grad = false);
/// mean over all entries of |x - x̂| / |x|.
[[nodiscard]] LossResult loss_abs_relative(const Matrix& pred, const Matrix& target, Eigen::Index steps,
                                           bool want_grad = false);
/// mean over samples and times of ||x - x̂|| / ||x||.
[[nodiscard]] LossResult loss_rel_l2(const Matrix& pred, const Matrix& target, Eigen::Index steps,
                                     bool want_grad = false);
[[nodiscard]] LossResult compute_loss(LossKind kind, const Matrix& pred, const Matrix& target, Eigen::Index steps,
                                      bool want_grad = false);

struct TrainConfig {
    LossKind loss = LossKind::ExpProduct;
    double learning_rate = 1e-3;
    int epochs = 100;
    /// 0 means full batch.
    int batch_size = 0;
    std::uint64_t seed = 0;
    /// Validation loss is computed every `val_every` epochs (and at the last one).
    int val_every = 1;
    AdamConfig adam;
    /// Optional CSV of the history, written as training runs.
    std::optional<std::filesystem::path> history_path;
    /// Progress lines to stderr every this many epochs (0 = quiet).
    int log_every = 0;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    /// Missing keys keep their defaults.
    [[nodiscard]] static TrainConfig from_json(const nlohmann::json& j);
};

struct HistoryRow {
    int epoch = 0;
    double train_loss = 0.0;
    /// NaN on epochs without validation.
    double val_loss = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    long clamp_events = 0;
};

/// Network-domain tensors of a dataset under a model's transforms.
struct TrainingData {
    Matrix enc_input;   ///< du x N
    Vector constants;   ///< N
    Vector times;       ///< T, transformed
    Matrix targets;     ///< n_x x (N * T), transformed states
    Eigen::Index n_samples = 0;
    Eigen::Index steps = 0;
};

[[nodiscard]] TrainingData prepare_training_data(const LiLaNModel& model, const TrajectoryDataset& ds);

/// Loss of the model on prepared data, evaluated in chunks.
[[nodiscard]] double evaluate_loss(const LiLaNModel& model, const TrainingData& data, LossKind kind);

/// Mini-batch Adam. The model must already carry transforms fitted on the training set.
/// On return the model holds the parameters of the best validation epoch (or the last
/// epoch when no validation set is given).
TrainResult train(LiLaNModel& model, const TrajectoryDataset& train_ds, const TrajectoryDataset* val_ds,
                  const TrainConfig& cfg);

void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path);

}  // namespace lilan
