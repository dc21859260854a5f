#include "lilan/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

namespace lilan {

namespace {

void check_blocks(const RowMatrix& pred, const RowMatrix& target, Eigen::Index n_times) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        fail(ErrorKind::Shape, "prediction and target shapes differ");
    if (n_times < 1 || target.rows() % n_times != 0)
        fail(ErrorKind::Shape, "row count is not a multiple of the number of times");
}

double r1_at(const RowMatrix& pred, const RowMatrix& target, Eigen::Index n_times, Eigen::Index j) {
    const Eigen::Index N = target.rows() / n_times;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const Eigen::Index r = i * n_times + j;
        const double tn = target.row(r).norm();
        if (tn == 0.0)
            fail(ErrorKind::Domain, "zero-norm target for sample " + std::to_string(i) + " at time index " +
                                        std::to_string(j));
        sum += (pred.row(r) - target.row(r)).norm() / tn;
    }
    return sum / static_cast<double>(N);
}

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

double metric_r1(const RowMatrix& pred, const RowMatrix& target, Eigen::Index n_times, Eigen::Index j) {
    check_blocks(pred, target, n_times);
    if (j < 0 || j >= n_times) fail(ErrorKind::Shape, "time index out of range");
    return r1_at(pred, target, n_times, j);
}

std::vector<double> metric_r1_curve(const RowMatrix& pred, const RowMatrix& target, Eigen::Index n_times) {
    check_blocks(pred, target, n_times);
    std::vector<double> curve;
    for (Eigen::Index j = 0; j < n_times; ++j) curve.push_back(r1_at(pred, target, n_times, j));
    return curve;
}

double metric_r2(const RowMatrix& pred, const RowMatrix& target, Eigen::Index n_times) {
    const auto curve = metric_r1_curve(pred, target, n_times);
    double s = 0.0;
    for (double v : curve) s += v;
    return s / static_cast<double>(curve.size());
}

void EvalReport::write_csv(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream curve(dir / "r1_curve.csv");
    if (!curve) fail(ErrorKind::Io, "cannot write " + (dir / "r1_curve.csv").string());
    curve.precision(17);
    curve << "time,r1\n";
    for (std::size_t j = 0; j < r1.size(); ++j) curve << times[j] << ',' << r1[j] << '\n';
    std::ofstream summary(dir / "summary.csv");
    summary.precision(17);
    summary << "metric,value\n"
            << "r2," << r2 << '\n'
            << "n_samples," << n_samples << '\n'
            << "n_times," << times.size() << '\n';
}

RowMatrix predict_dataset(const LiLaNModel& model, const TrajectoryDataset& ds) {
    return model.predict_trajectories(ds.x0, ds.params, ds.times);
}

EvalReport evaluate(const LiLaNModel& model, const TrajectoryDataset& ds) {
    EvalReport rep;
    const auto t0 = Clock::now();
    const RowMatrix pred = predict_dataset(model, ds);
    rep.predict_seconds = seconds_since(t0);
    const RowMatrix target = ds.stacked();
    rep.times = ds.times;
    rep.r1 = metric_r1_curve(pred, target, ds.n_times());
    rep.r2 = 0.0;
    for (double v : rep.r1) rep.r2 += v;
    rep.r2 /= static_cast<double>(rep.r1.size());
    rep.n_samples = ds.n_samples();
    rep.model_manifest = {{"architecture", model.architecture().to_json()},
                          {"parameter_count", model.parameter_count()}};
    rep.dataset_manifest = {{"problem", ds.problem}, {"metadata", ds.metadata}};
    return rep;
}

// ---------------------------------------------------------------------------

void SpeedReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.precision(17);
    out << "n_ics,solver_seconds,surrogate_seconds,ratio,solver_failures,single_precision\n"
        << n_ics << ',' << solver_seconds << ',' << surrogate_seconds << ',' << ratio << ',' << solver_failures << ','
        << (single_precision ? 1 : 0) << '\n';
}

SpeedReport speed_benchmark(const LiLaNModel& model, const ProblemSpec& problem, std::size_t n_ics,
                            std::uint64_t seed, const ImplicitSolverConfig& cfg, bool single_precision) {
    SpeedReport rep;
    rep.n_ics = n_ics;
    rep.single_precision = single_precision;
    if (n_ics == 0) return rep;

    RowMatrix x0(static_cast<Eigen::Index>(n_ics), problem.state_dim);
    RowMatrix params(static_cast<Eigen::Index>(n_ics), problem.param_dim);
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < n_ics; ++i) {
        const std::size_t index = problem.grid_size > 0 ? i % problem.grid_size : i;
        samples.push_back(problem.sampler(index, n_ics, derive_seed(seed, i)));
        x0.row(static_cast<Eigen::Index>(i)) = samples.back().x0.transpose();
        if (problem.param_dim > 0) params.row(static_cast<Eigen::Index>(i)) = samples.back().p.transpose();
    }

    auto t0 = Clock::now();
    double checksum = 0.0;
    for (const auto& s : samples) {
        try {
            checksum += solve_trajectory(problem, s, cfg)(0, 0);
        } catch (const Error&) {
            ++rep.solver_failures;
        }
    }
    rep.solver_seconds = seconds_since(t0);

    t0 = Clock::now();
    if (single_precision) {
        const Eigen::MatrixXf out = model.predict_trajectories_f32(x0, params, problem.times);
        checksum += out(0, 0);
    } else {
        const RowMatrix out = model.predict_trajectories(x0, params, problem.times);
        checksum += out(0, 0);
    }
    rep.surrogate_seconds = seconds_since(t0);
    rep.ratio = rep.surrogate_seconds > 0.0 ? rep.solver_seconds / rep.surrogate_seconds
                                            : std::numeric_limits<double>::infinity();
    // Keeps both timed loops observable.
    if (!std::isfinite(checksum)) rep.ratio = std::numeric_limits<double>::quiet_NaN();
    return rep;
}

// ---------------------------------------------------------------------------

std::string to_string(StudyKind k) {
    switch (k) {
        case StudyKind::SampleReduction: return "sample_reduction";
        case StudyKind::TimeCoarsening: return "time_coarsening";
        case StudyKind::TauAblation: return "tau_ablation";
        case StudyKind::LatentExpansion: return "latent_expansion";
    }
    return "sample_reduction";
}

StudyKind study_from_string(const std::string& s) {
    if (s == "sample_reduction") return StudyKind::SampleReduction;
    if (s == "time_coarsening") return StudyKind::TimeCoarsening;
    if (s == "tau_ablation") return StudyKind::TauAblation;
    if (s == "latent_expansion") return StudyKind::LatentExpansion;
    fail(ErrorKind::UnknownName, "unknown study '" + s + "'");
}

namespace {

StudyRow train_and_score(const std::string& kind, int setting, const std::string& label, Architecture arch,
                         std::uint64_t seed, const TrajectoryDataset& train_ds, const TrajectoryDataset& val_ds,
                         const TrajectoryDataset& test_ds, const TrainConfig& base, const TransformOptions& options) {
    StudyRow row{kind, setting, label, seed, static_cast<std::size_t>(train_ds.n_samples()), train_ds.times.size(),
                 std::numeric_limits<double>::quiet_NaN(), "ok", 0.0};
    const auto t0 = Clock::now();
    try {
        LiLaNModel model(std::move(arch), seed);
        model.set_transforms(fit_transforms(train_ds, options));
        TrainConfig cfg = base;
        cfg.seed = seed;
        cfg.history_path.reset();
        if (cfg.batch_size > train_ds.n_samples()) cfg.batch_size = 0;
        (void)train(model, train_ds, &val_ds, cfg);
        row.r2 = evaluate(model, test_ds).r2;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Divergence) throw;
        row.status = std::string("diverged: ") + e.what();
    }
    row.train_seconds = seconds_since(t0);
    return row;
}

TransformOptions options_for(const Architecture& arch, const TrajectoryDataset& ds) {
    const bool pde = ds.param_dim() == 0 && arch.layout == InputLayout::State;
    TransformOptions o = pde ? TransformOptions::pde() : TransformOptions::ode(arch.layout);
    return o;
}

}  // namespace

std::vector<StudyRow> run_study(StudyKind kind, const StudyConfig& cfg, const TrajectoryDataset& train_ds,
                                const TrajectoryDataset& val_ds, const TrajectoryDataset& test_ds) {
    require(!cfg.settings.empty(), ErrorKind::Config, "study needs at least one setting");
    const std::string name = to_string(kind);
    const TransformOptions options = options_for(cfg.architecture, train_ds);
    std::vector<StudyRow> rows;
    std::uint64_t row_index = 0;
    for (int setting : cfg.settings) {
        switch (kind) {
            case StudyKind::SampleReduction: {
                const auto ds = subsample(train_ds, static_cast<std::size_t>(setting), cfg.subsample_mode,
                                          derive_seed(cfg.seed, 1000 + row_index));
                const auto seed = derive_seed(cfg.seed, row_index);
                rows.push_back(train_and_score(name, setting, "lilan", cfg.architecture, seed, ds, val_ds, test_ds,
                                               cfg.train, options));
                break;
            }
            case StudyKind::TimeCoarsening: {
                const auto ds = coarsen_time(train_ds, setting);
                rows.push_back(train_and_score(name, setting, "lilan", cfg.architecture, derive_seed(cfg.seed, 0), ds,
                                               val_ds, test_ds, cfg.train, options));
                break;
            }
            case StudyKind::TauAblation: {
                const auto ds = coarsen_time(train_ds, setting);
                Architecture with_tau = cfg.architecture;
                with_tau.use_tau = true;
                Architecture no_tau = cfg.architecture;
                no_tau.use_tau = false;
                rows.push_back(train_and_score(name, setting, "lilan", with_tau, derive_seed(cfg.seed, 0), ds, val_ds,
                                               test_ds, cfg.train, options));
                rows.push_back(train_and_score(name, setting, "no_tau", no_tau, derive_seed(cfg.seed, 0), ds, val_ds,
                                               test_ds, cfg.train, options));
                break;
            }
            case StudyKind::LatentExpansion: {
                require(setting >= 1, ErrorKind::Config, "latent multiplier must be >= 1");
                Architecture arch = cfg.architecture;
                const int per_group_base = arch.groups() == 1 ? arch.state_dim : 1;
                arch.group_latent_dim = setting * per_group_base;
                rows.push_back(train_and_score(name, setting, "lilan", arch, derive_seed(cfg.seed, row_index), train_ds,
                                               val_ds, test_ds, cfg.train, options));
                break;
            }
        }
        ++row_index;
    }
    return rows;
}

void write_study_csv(const std::vector<StudyRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.precision(17);
    out << "kind,setting,model,seed,train_samples,train_times,r2,status,train_seconds\n";
    for (const auto& r : rows)
        out << r.kind << ',' << r.setting << ',' << r.model << ',' << r.seed << ',' << r.train_samples << ','
            << r.train_times << ',' << r.r2 << ",\"" << r.status << "\"," << r.train_seconds << '\n';
}

}  // namespace lilan
