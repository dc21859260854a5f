#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "lilan/problems.hpp"
#include "lilan/transforms.hpp"

namespace lilan {

/// N trajectories on a shared time grid. States are stored sample-major:
/// states[(i * T + j) * n_x + k] is component k of sample i at time j.
struct TrajectoryDataset {
    std::string problem;
    std::vector<double> times;
    RowMatrix x0;      ///< N x n_x
    RowMatrix params;  ///< N x n_p
    AlignedDoubles states;
    /// Seeds, solver settings and problem constants; stored verbatim in the manifest.
    nlohmann::json metadata = nlohmann::json::object();

    [[nodiscard]] Eigen::Index n_samples() const noexcept { return x0.rows(); }
    [[nodiscard]] Eigen::Index n_times() const noexcept { return static_cast<Eigen::Index>(times.size()); }
    [[nodiscard]] Eigen::Index state_dim() const noexcept { return x0.cols(); }
    [[nodiscard]] Eigen::Index param_dim() const noexcept { return params.cols(); }

    /// T x n_x view of one trajectory.
    [[nodiscard]] Eigen::Map<const RowMatrix> trajectory(Eigen::Index i) const;
    [[nodiscard]] Eigen::Map<RowMatrix> trajectory(Eigen::Index i);
    /// All trajectories stacked, (N * T) x n_x.
    [[nodiscard]] Eigen::Map<const RowMatrix> stacked() const;

    /// Shape consistency, increasing times, and states[.][0] == x0 when times[0] == 0.
    void validate() const;
};

/// Solves `n_samples` trajectories drawn by the problem's sampler; sample i uses the seed
/// derive_seed(seed, i). Work is split over `threads` workers without affecting the result.
[[nodiscard]] TrajectoryDataset generate(const ProblemSpec& problem, std::size_t n_samples, std::uint64_t seed,
                                         const ImplicitSolverConfig& cfg, int threads = 1);
/// Same, for explicitly given inputs (rows of x0 / params).
[[nodiscard]] TrajectoryDataset generate_from(const ProblemSpec& problem, const RowMatrix& x0,
                                              const RowMatrix& params, const ImplicitSolverConfig& cfg,
                                              int threads = 1);

/// Fits time, input and (optionally) state ranges on `ds`.
[[nodiscard]] TransformSpec fit_transforms(const TrajectoryDataset& ds, const TransformOptions& options);

/// Keeps every (skip+1)-th time index and always the last one.
[[nodiscard]] TrajectoryDataset coarsen_time(const TrajectoryDataset& ds, int skip);
[[nodiscard]] std::vector<std::size_t> coarsen_indices(std::size_t n_times, int skip);

enum class SubsampleMode { GridCorners, Stride, Random };
[[nodiscard]] SubsampleMode subsample_mode_from_string(const std::string& s);

/// Deterministic selection of n samples. GridCorners returns the samples sitting on the
/// corners of the parameter box (n must match their count).
[[nodiscard]] TrajectoryDataset subsample(const TrajectoryDataset& ds, std::size_t n, SubsampleMode mode,
                                          std::uint64_t seed = 0);
[[nodiscard]] TrajectoryDataset select_samples(const TrajectoryDataset& ds, const std::vector<std::size_t>& rows);

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Writes `<stem>.json` and `<stem>.bin`; a trailing .json or .bin on `path` is ignored.
void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& path);
[[nodiscard]] TrajectoryDataset load_dataset(const std::filesystem::path& path);

/// CSV with columns sample,time,x0..x{n-1} for samples [first, first + count).
void export_csv(const TrajectoryDataset& ds, const std::filesystem::path& path, std::size_t first = 0,
                std::size_t count = static_cast<std::size_t>(-1));

}  // namespace lilan
