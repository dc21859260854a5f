#include "lilan/datasets.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>

#include "lilan/binio.hpp"

namespace lilan {

Eigen::Map<const RowMatrix> TrajectoryDataset::trajectory(Eigen::Index i) const {
    return {states.data() + i * n_times() * state_dim(), n_times(), state_dim()};
}

Eigen::Map<RowMatrix> TrajectoryDataset::trajectory(Eigen::Index i) {
    return {states.data() + i * n_times() * state_dim(), n_times(), state_dim()};
}

Eigen::Map<const RowMatrix> TrajectoryDataset::stacked() const {
    return {states.data(), n_samples() * n_times(), state_dim()};
}

void TrajectoryDataset::validate() const {
    require(params.rows() == x0.rows(), ErrorKind::ShapeInconsistency, "x0 and params sample counts differ");
    require(static_cast<Eigen::Index>(states.size()) == n_samples() * n_times() * state_dim(),
            ErrorKind::ShapeInconsistency, "state buffer size does not match N x T x n_x");
    for (std::size_t j = 1; j < times.size(); ++j)
        require(times[j] > times[j - 1], ErrorKind::Grid, "dataset times must be strictly increasing");
    if (!times.empty() && times.front() == 0.0)
        for (Eigen::Index i = 0; i < n_samples(); ++i)
            require(trajectory(i).row(0) == x0.row(i), ErrorKind::ShapeInconsistency,
                    "first stored state of sample " + std::to_string(i) + " differs from its x0");
}

// ---------------------------------------------------------------------------
// Generation

namespace {

TrajectoryDataset empty_like(const ProblemSpec& problem, Eigen::Index n) {
    TrajectoryDataset ds;
    ds.problem = problem.name;
    ds.times = problem.times;
    ds.x0.resize(n, problem.state_dim);
    ds.params.resize(n, problem.param_dim);
    ds.states.assign(static_cast<std::size_t>(n) * problem.times.size() * static_cast<std::size_t>(problem.state_dim),
                     0.0);
    return ds;
}

void solve_all(const ProblemSpec& problem, TrajectoryDataset& ds, const ImplicitSolverConfig& cfg, int threads) {
    const auto n = static_cast<std::size_t>(ds.n_samples());
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::optional<std::pair<std::size_t, Error>> first_error;

    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                Sample s{ds.x0.row(static_cast<Eigen::Index>(i)).transpose(),
                         ds.params.row(static_cast<Eigen::Index>(i)).transpose()};
                ds.trajectory(static_cast<Eigen::Index>(i)) = solve_trajectory(problem, s, cfg);
            } catch (const Error& e) {
                std::lock_guard lock(err_mutex);
                if (!first_error || first_error->first > i) first_error.emplace(i, e);
            }
        }
    };
    const int workers = std::max(1, threads);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (first_error)
        fail(first_error->second.kind(), "sample " + std::to_string(first_error->first) + ": " +
                                             first_error->second.what());
}

}  // namespace

TrajectoryDataset generate(const ProblemSpec& problem, std::size_t n_samples, std::uint64_t seed,
                           const ImplicitSolverConfig& cfg, int threads) {
    require(n_samples >= 1, ErrorKind::Config, "n_samples must be >= 1");
    if (problem.grid_size > 0 && n_samples > problem.grid_size)
        fail(ErrorKind::Config, "requested " + std::to_string(n_samples) + " samples from a grid of " +
                                    std::to_string(problem.grid_size));
    TrajectoryDataset ds = empty_like(problem, static_cast<Eigen::Index>(n_samples));
    for (std::size_t i = 0; i < n_samples; ++i) {
        const Sample s = problem.sampler(i, n_samples, derive_seed(seed, i));
        ds.x0.row(static_cast<Eigen::Index>(i)) = s.x0.transpose();
        if (problem.param_dim > 0) ds.params.row(static_cast<Eigen::Index>(i)) = s.p.transpose();
    }
    solve_all(problem, ds, cfg, threads);
    ds.metadata = {{"seed", seed},
                   {"sample_seed_rule", "derive_seed(seed, index)"},
                   {"solver", problem.kind == ProblemKind::Ode ? cfg.to_json()
                                                               : nlohmann::json{{"method", "etdrk4"},
                                                                                {"dt", problem.pde_dt()},
                                                                                {"substeps", problem.substeps}}},
                   {"constants", problem.constants}};
    return ds;
}

TrajectoryDataset generate_from(const ProblemSpec& problem, const RowMatrix& x0, const RowMatrix& params,
                                const ImplicitSolverConfig& cfg, int threads) {
    require(x0.rows() >= 1, ErrorKind::Config, "no samples given");
    require(x0.cols() == problem.state_dim, ErrorKind::Shape, "x0 width does not match the problem");
    require(params.rows() == x0.rows() && params.cols() == problem.param_dim, ErrorKind::Shape,
            "parameter block does not match the problem");
    TrajectoryDataset ds = empty_like(problem, x0.rows());
    ds.x0 = x0;
    ds.params = params;
    solve_all(problem, ds, cfg, threads);
    ds.metadata = {{"seed", nullptr},
                   {"solver", problem.kind == ProblemKind::Ode ? cfg.to_json()
                                                               : nlohmann::json{{"method", "etdrk4"},
                                                                                {"dt", problem.pde_dt()},
                                                                                {"substeps", problem.substeps}}},
                   {"constants", problem.constants}};
    return ds;
}

// ---------------------------------------------------------------------------
// Transforms, coarsening, subsampling

TransformSpec fit_transforms(const TrajectoryDataset& ds, const TransformOptions& options) {
    require(ds.n_samples() >= 1 && ds.n_times() >= 2, ErrorKind::Shape, "cannot fit transforms on an empty dataset");
    const Eigen::Index nx = ds.state_dim();
    const int du = encoder_input_dim(options.layout, static_cast<int>(nx), static_cast<int>(ds.param_dim()));
    Vector in_lo = Vector::Constant(du, std::numeric_limits<double>::infinity());
    Vector in_hi = Vector::Constant(du, -std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < ds.n_samples(); ++i) {
        const Vector u = encoder_input_raw(options.layout, ds.x0.row(i).transpose(), ds.params.row(i).transpose());
        in_lo = in_lo.cwiseMin(u);
        in_hi = in_hi.cwiseMax(u);
    }
    Vector st_lo, st_hi;
    if (options.state_minmax) {
        // Ranges of the logged (or raw) states; the affine stage is fitted on top of them.
        TransformOptions pre = options;
        pre.state_minmax = false;
        const TransformSpec raw(pre, ds.times.front(), ds.times.back(), in_lo, in_hi, Vector(), Vector());
        st_lo = Vector::Constant(nx, std::numeric_limits<double>::infinity());
        st_hi = Vector::Constant(nx, -std::numeric_limits<double>::infinity());
        const auto all = ds.stacked();
        for (Eigen::Index r = 0; r < all.rows(); ++r) {
            const Vector z = raw.apply_state(all.row(r).transpose(), static_cast<long>(r / ds.n_times()));
            st_lo = st_lo.cwiseMin(z);
            st_hi = st_hi.cwiseMax(z);
        }
    }
    return {options, ds.times.front(), ds.times.back(), in_lo, in_hi, st_lo, st_hi};
}

std::vector<std::size_t> coarsen_indices(std::size_t n_times, int skip) {
    require(skip >= 0, ErrorKind::Config, "skip must be >= 0");
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < n_times; j += static_cast<std::size_t>(skip) + 1) keep.push_back(j);
    if (n_times > 0 && keep.back() != n_times - 1) keep.push_back(n_times - 1);
    return keep;
}

TrajectoryDataset coarsen_time(const TrajectoryDataset& ds, int skip) {
    const auto keep = coarsen_indices(ds.times.size(), skip);
    TrajectoryDataset out;
    out.problem = ds.problem;
    out.x0 = ds.x0;
    out.params = ds.params;
    out.metadata = ds.metadata;
    out.metadata["skip_steps"] = skip;
    for (auto j : keep) out.times.push_back(ds.times[j]);
    const auto nx = static_cast<std::size_t>(ds.state_dim());
    out.states.reserve(static_cast<std::size_t>(ds.n_samples()) * keep.size() * nx);
    for (Eigen::Index i = 0; i < ds.n_samples(); ++i) {
        const auto traj = ds.trajectory(i);
        for (auto j : keep)
            for (std::size_t k = 0; k < nx; ++k)
                out.states.push_back(traj(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)));
    }
    return out;
}

SubsampleMode subsample_mode_from_string(const std::string& s) {
    if (s == "grid_corners") return SubsampleMode::GridCorners;
    if (s == "stride") return SubsampleMode::Stride;
    if (s == "random") return SubsampleMode::Random;
    fail(ErrorKind::UnknownName, "unknown subsample mode '" + s + "'");
}

TrajectoryDataset select_samples(const TrajectoryDataset& ds, const std::vector<std::size_t>& rows) {
    TrajectoryDataset out;
    out.problem = ds.problem;
    out.times = ds.times;
    out.metadata = ds.metadata;
    out.x0.resize(static_cast<Eigen::Index>(rows.size()), ds.state_dim());
    out.params.resize(static_cast<Eigen::Index>(rows.size()), ds.param_dim());
    const auto block = static_cast<std::size_t>(ds.n_times() * ds.state_dim());
    out.states.reserve(rows.size() * block);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(rows[r]);
        require(i < ds.n_samples(), ErrorKind::Config, "sample index out of range");
        out.x0.row(static_cast<Eigen::Index>(r)) = ds.x0.row(i);
        out.params.row(static_cast<Eigen::Index>(r)) = ds.params.row(i);
        const auto first = ds.states.begin() + static_cast<std::ptrdiff_t>(rows[r] * block);
        out.states.insert(out.states.end(), first, first + static_cast<std::ptrdiff_t>(block));
    }
    return out;
}

TrajectoryDataset subsample(const TrajectoryDataset& ds, std::size_t n, SubsampleMode mode, std::uint64_t seed) {
    const auto N = static_cast<std::size_t>(ds.n_samples());
    if (n < 1 || n > N)
        fail(ErrorKind::Config, "cannot select " + std::to_string(n) + " of " + std::to_string(N) + " samples");
    std::vector<std::size_t> rows;
    switch (mode) {
        case SubsampleMode::Stride:
            for (std::size_t r = 0; r < n; ++r) rows.push_back(r * N / n);
            break;
        case SubsampleMode::Random: {
            std::vector<std::size_t> idx(N);
            std::iota(idx.begin(), idx.end(), 0);
            Rng rng(seed);
            for (std::size_t r = 0; r < n; ++r) {
                const auto pick = static_cast<std::size_t>(rng.uniform_int(static_cast<long long>(r),
                                                                           static_cast<long long>(N - 1)));
                std::swap(idx[r], idx[pick]);
            }
            rows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
            std::sort(rows.begin(), rows.end());
            break;
        }
        case SubsampleMode::GridCorners: {
            require(ds.param_dim() > 0, ErrorKind::Config, "grid_corners needs a parameter space");
            const Eigen::RowVectorXd lo = ds.params.colwise().minCoeff();
            const Eigen::RowVectorXd hi = ds.params.colwise().maxCoeff();
            for (std::size_t i = 0; i < N; ++i) {
                const auto p = ds.params.row(static_cast<Eigen::Index>(i));
                if (((p.array() == lo.array()) || (p.array() == hi.array())).all()) rows.push_back(i);
            }
            if (rows.size() != n)
                fail(ErrorKind::Config, "dataset has " + std::to_string(rows.size()) + " corner samples, " +
                                            std::to_string(n) + " requested");
            break;
        }
    }
    TrajectoryDataset out = select_samples(ds, rows);
    out.metadata["subsample"] = {{"n", n},
                                 {"mode", mode == SubsampleMode::Stride   ? "stride"
                                          : mode == SubsampleMode::Random ? "random"
                                                                          : "grid_corners"},
                                 {"seed", seed}};
    return out;
}

// ---------------------------------------------------------------------------
// Storage

namespace {

std::filesystem::path stem_of(const std::filesystem::path& p) {
    const auto ext = p.extension();
    if (ext == ".json" || ext == ".bin") {
        auto s = p;
        s.replace_extension();
        return s;
    }
    return p;
}

std::filesystem::path with_suffix(std::filesystem::path stem, const char* suffix) {
    stem += suffix;
    return stem;
}

}  // namespace

void save_dataset(const TrajectoryDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    const auto stem = stem_of(path);
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    binio::Writer w;
    w.bytes("LLDS", 4);
    w.u32(kDatasetVersion);
    w.u64(static_cast<std::uint64_t>(ds.n_samples()));
    w.u64(static_cast<std::uint64_t>(ds.n_times()));
    w.u64(static_cast<std::uint64_t>(ds.state_dim()));
    w.u64(static_cast<std::uint64_t>(ds.param_dim()));
    w.f64s(ds.times);
    w.f64s(std::span<const double>(ds.x0.data(), static_cast<std::size_t>(ds.x0.size())));
    w.f64s(std::span<const double>(ds.params.data(), static_cast<std::size_t>(ds.params.size())));
    w.f64s(ds.states);
    w.write_file(with_suffix(stem, ".bin"));

    nlohmann::json manifest = {
        {"format", "lilan-dataset"},
        {"version", kDatasetVersion},
        {"problem", ds.problem},
        {"n_samples", ds.n_samples()},
        {"n_times", ds.n_times()},
        {"state_dim", ds.state_dim()},
        {"param_dim", ds.param_dim()},
        {"times", ds.times},
        {"payload", with_suffix(stem, ".bin").filename().string()},
        {"payload_layout",
         "magic 'LLDS', u32 version, u64 N, T, n_x, n_p, then little-endian float64 arrays: "
         "times[T], x0[N*n_x], params[N*n_p], states[N*T*n_x], all row-major, sample-major states"},
        {"metadata", ds.metadata},
    };
    std::ofstream(with_suffix(stem, ".json")) << manifest.dump(2) << '\n';
}

TrajectoryDataset load_dataset(const std::filesystem::path& path) {
    const auto stem = stem_of(path);
    std::ifstream in(with_suffix(stem, ".json"));
    if (!in) fail(ErrorKind::MissingFile, "dataset manifest not found: " + with_suffix(stem, ".json").string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("malformed dataset manifest: ") + e.what());
    }
    if (m.value("format", "") != "lilan-dataset") fail(ErrorKind::CorruptMagic, "not a dataset manifest");
    if (m.value("version", 0u) != kDatasetVersion)
        fail(ErrorKind::VersionMismatch, "dataset manifest version " + m.value("version", nlohmann::json()).dump() +
                                             " unsupported");

    auto r = binio::Reader::from_file(with_suffix(stem, ".bin"));
    char magic[4];
    r.bytes(magic, 4);
    if (std::string_view(magic, 4) != "LLDS") fail(ErrorKind::CorruptMagic, "dataset payload has wrong magic bytes");
    const auto version = r.u32();
    if (version != kDatasetVersion)
        fail(ErrorKind::VersionMismatch, "dataset payload version " + std::to_string(version) + " unsupported");
    const auto N = r.u64(), T = r.u64(), nx = r.u64(), np = r.u64();
    if (N != m.at("n_samples").get<std::uint64_t>() || T != m.at("n_times").get<std::uint64_t>() ||
        nx != m.at("state_dim").get<std::uint64_t>() || np != m.at("param_dim").get<std::uint64_t>())
        fail(ErrorKind::ShapeInconsistency, "dataset payload shape disagrees with its manifest");
    const std::uint64_t expected = (T + N * nx + N * np + N * T * nx) * sizeof(double);
    if (r.remaining() != expected)
        fail(ErrorKind::CorruptPayload, "dataset payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                                            std::to_string(expected));

    TrajectoryDataset ds;
    ds.problem = m.at("problem").get<std::string>();
    ds.metadata = m.value("metadata", nlohmann::json::object());
    ds.times.resize(T);
    r.f64s(ds.times);
    ds.x0.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(nx));
    r.f64s(std::span<double>(ds.x0.data(), static_cast<std::size_t>(ds.x0.size())));
    ds.params.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(np));
    r.f64s(std::span<double>(ds.params.data(), static_cast<std::size_t>(ds.params.size())));
    ds.states.resize(N * T * nx);
    r.f64s(ds.states);
    ds.validate();
    return ds;
}

void export_csv(const TrajectoryDataset& ds, const std::filesystem::path& path, std::size_t first, std::size_t count) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.precision(17);
    out << "sample,time";
    for (Eigen::Index k = 0; k < ds.state_dim(); ++k) out << ",x" << k;
    out << '\n';
    const auto N = static_cast<std::size_t>(ds.n_samples());
    const std::size_t last = count > N ? N : std::min(N, first + count);
    for (std::size_t i = first; i < last; ++i) {
        const auto traj = ds.trajectory(static_cast<Eigen::Index>(i));
        for (Eigen::Index j = 0; j < ds.n_times(); ++j) {
            out << i << ',' << ds.times[static_cast<std::size_t>(j)];
            for (Eigen::Index k = 0; k < ds.state_dim(); ++k) out << ',' << traj(j, k);
            out << '\n';
        }
    }
}

}  // namespace lilan
