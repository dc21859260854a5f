#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "lilan/datasets.hpp"
#include "lilan/model.hpp"
#include "lilan/training.hpp"

namespace lilan {

// Metrics take (N * T) x n_x physical-domain blocks with row i * T + j.

/// mean_i ||x_i(t_j) - x̂_i(t_j)|| / ||x_i(t_j)||.
[[nodiscard]] double metric_r1(const RowMatrix& pred, const RowMatrix& target, Eigen::Index n_times, Eigen::Index j);
[[nodiscard]] std::vector<double> metric_r1_curve(const RowMatrix& pred, const RowMatrix& target,
                                                  Eigen::Index n_times);
/// Time average of the R1 curve.
[[nodiscard]] double metric_r2(const RowMatrix& pred, const RowMatrix& target, Eigen::Index n_times);

struct EvalReport {
    std::vector<double> times;
    std::vector<double> r1;
    double r2 = 0.0;
    Eigen::Index n_samples = 0;
    nlohmann::json model_manifest;
    nlohmann::json dataset_manifest;
    double predict_seconds = 0.0;

    /// r1_curve.csv (time,r1) and summary.csv (metric,value).
    void write_csv(const std::filesystem::path& dir) const;
};

/// Surrogate predictions on the dataset's inputs and time grid, physical domain.
[[nodiscard]] RowMatrix predict_dataset(const LiLaNModel& model, const TrajectoryDataset& ds);
[[nodiscard]] EvalReport evaluate(const LiLaNModel& model, const TrajectoryDataset& ds);

struct SpeedReport {
    std::size_t n_ics = 0;
    double solver_seconds = 0.0;
    double surrogate_seconds = 0.0;
    double ratio = 0.0;
    std::size_t solver_failures = 0;
    bool single_precision = false;

    void write_csv(const std::filesystem::path& path) const;
};

/// Wall-clock comparison on `n_ics` fresh inputs drawn from the problem's sampler with
/// `seed`. Both paths produce full trajectories on the problem's time grid on one thread.
[[nodiscard]] SpeedReport speed_benchmark(const LiLaNModel& model, const ProblemSpec& problem, std::size_t n_ics,
                                          std::uint64_t seed, const ImplicitSolverConfig& cfg,
                                          bool single_precision = false);

enum class StudyKind { SampleReduction, TimeCoarsening, TauAblation, LatentExpansion };
[[nodiscard]] std::string to_string(StudyKind k);
[[nodiscard]] StudyKind study_from_string(const std::string& s);

struct StudyConfig {
    Architecture architecture;
    TrainConfig train;
    std::uint64_t seed = 0;
    /// sample_reduction: sample counts; time_coarsening / tau_ablation: skip values;
    /// latent_expansion: latent multipliers m / n_x (total latent width per group).
    std::vector<int> settings;
    SubsampleMode subsample_mode = SubsampleMode::Random;
};

struct StudyRow {
    std::string kind;
    int setting = 0;
    std::string model;  ///< "lilan" or "no_tau"
    std::uint64_t seed = 0;
    std::size_t train_samples = 0;
    std::size_t train_times = 0;
    double r2 = 0.0;
    std::string status;  ///< "ok" or the divergence message
    double train_seconds = 0.0;
};

/// One training run per setting (two for tau_ablation), each scored by R2 on `test`.
/// Rows of sample_reduction and latent_expansion use seed derive_seed(seed, row); the
/// time-coarsening and tau-ablation rows share derive_seed(seed, 0) so settings are
/// compared at equal initialization.
[[nodiscard]] std::vector<StudyRow> run_study(StudyKind kind, const StudyConfig& cfg, const TrajectoryDataset& train_ds,
                                              const TrajectoryDataset& val_ds, const TrajectoryDataset& test_ds);
void write_study_csv(const std::vector<StudyRow>& rows, const std::filesystem::path& path);

}  // namespace lilan
