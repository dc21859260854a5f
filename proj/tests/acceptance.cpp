// Acceptance gate: one PASS/FAIL line per criterion.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "lilan/embedding.hpp"
#include "lilan/evaluation.hpp"

using namespace lilan;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

/// Copy of the report lines, kept because ctest only shows output of failing tests.
std::FILE* report_file = nullptr;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    for (std::FILE* f : {stdout, report_file}) {
        if (!f) continue;
        std::fprintf(f, "%s criterion %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
        std::fflush(f);
    }
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

/// Random offsets bounded away from zero, so |pred - target| terms stay off their kink
/// within the finite-difference stencil.
Matrix residual_offsets(Rng& rng, Eigen::Index r, Eigen::Index c, double scale) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = (rng.uniform() < 0.5 ? -scale : scale) * rng.uniform(0.25, 1.0);
    return m;
}

void run_guarded(int id, const std::string& name, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(id, name, false, std::string("exception: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

void criterion_direct_equivalence() {
    const auto t0 = Clock::now();
    const int nx = 3, np = 3, m = 7;
    Rng rng(101);
    const Matrix W = random_matrix(rng, m, 1 + nx + np);
    const Vector b = random_matrix(rng, m, 1);
    const Matrix W1 = random_matrix(rng, nx, m);
    const Vector c1 = random_matrix(rng, nx, 1);
    const LiLaNModel model = build_direct_equivalent(W1, W, b, c1);
    double worst = 0.0;
    for (int q = 0; q < 1000; ++q) {
        const double t = rng.uniform();
        const Vector x0 = random_matrix(rng, nx, 1);
        const Vector p = random_matrix(rng, np, 1);
        Vector in(1 + nx + np);
        in << t, x0, p;
        const Vector direct = W1 * (W * in + b).array().tanh().matrix() + c1;
        worst = std::max(worst, (model.predict(x0, p, t) - direct).cwiseAbs().maxCoeff());
    }
    const double secs = since(t0);
    report(1, "direct-learning equivalence", worst <= 1e-12 && secs < 1.0,
           fmt("max |diff| = %.3e over 1000 inputs in %.3f s", worst, secs));
}

// ---------------------------------------------------------------------------

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return den > 0.0 ? num / den : num;
}

void criterion_gradients() {
    const auto t0 = Clock::now();
    constexpr double h = 1e-5;
    double worst = 0.0;
    std::string worst_case;
    auto note = [&](double e, const std::string& what) {
        if (e > worst) {
            worst = e;
            worst_case = what;
        }
    };
    Rng rng(202);

    // Losses against their own central differences.
    for (auto kind : {LossKind::ExpProduct, LossKind::AbsRelative, LossKind::RelL2}) {
        for (int trial = 0; trial < 3; ++trial) {
            const Eigen::Index nx = 3, N = 4, T = 5;
            Matrix target = random_matrix(rng, nx, N * T);
            Matrix pred = target + residual_offsets(rng, nx, N * T, 0.1);
            const auto r = compute_loss(kind, pred, target, T, true);
            std::vector<double> g(r.grad.data(), r.grad.data() + r.grad.size()), fd(g.size());
            for (Eigen::Index i = 0; i < pred.size(); ++i) {
                Matrix p = pred, q = pred;
                p.data()[i] += h;
                q.data()[i] -= h;
                fd[static_cast<std::size_t>(i)] =
                    (compute_loss(kind, p, target, T).value - compute_loss(kind, q, target, T).value) / (2 * h);
            }
            note(rel_err(g, fd), "loss " + to_string(kind));
        }
    }

    // Networks: every variant, with and without conservation, trained loss chained through.
    for (auto variant : {Variant::Full, Variant::Independent, Variant::CommonEncoder, Variant::CommonDecoder}) {
        for (bool conserve : {false, true}) {
            Architecture arch;
            arch.variant = variant;
            arch.state_dim = 3;
            arch.param_dim = 2;
            arch.group_latent_dim = 3;
            arch.encoder_hidden = {4};
            arch.tau_hidden = {4};
            arch.decoder_hidden = {4};
            arch.conservation = conserve ? Conservation::SoftmaxScaled : Conservation::None;
            LiLaNModel model(arch, 303 + static_cast<int>(variant));
            TransformOptions opts = TransformOptions::ode();
            opts.state_minmax = true;
            model.set_transforms(TransformSpec(opts, 1e-3, 10.0, Vector::Constant(2, -1.0), Vector::Constant(2, 2.0),
                                               Vector::Constant(3, -4.0), Vector::Constant(3, 0.0)));
            const Eigen::Index B = 3, T = 4;
            const Matrix u = random_matrix(rng, 2, B) * 0.5;
            Vector ts(T);
            for (Eigen::Index j = 0; j < T; ++j) ts[j] = rng.uniform();
            const Vector K = Vector::Constant(B, 1.0);
            const Matrix target = model.forward(u, ts, K) + residual_offsets(rng, 3, B * T, 0.2);

            for (auto kind : {LossKind::ExpProduct, LossKind::AbsRelative, LossKind::RelL2}) {
                ForwardCache cache;
                const Matrix out = model.forward(u, ts, K, &cache);
                const auto lr = compute_loss(kind, out, target, T, true);
                const auto grads = model.backward(cache, lr.grad);
                auto blocks = model.parameter_blocks();
                for (std::size_t blk = 0; blk < blocks.size(); ++blk) {
                    std::vector<double> fd(blocks[blk].size());
                    for (std::size_t i = 0; i < blocks[blk].size(); ++i) {
                        const double keep = blocks[blk][i];
                        blocks[blk][i] = keep + h;
                        const double fp = compute_loss(kind, model.forward(u, ts, K), target, T).value;
                        blocks[blk][i] = keep - h;
                        const double fm = compute_loss(kind, model.forward(u, ts, K), target, T).value;
                        blocks[blk][i] = keep;
                        fd[i] = (fp - fm) / (2 * h);
                    }
                    note(rel_err(grads[blk], fd), to_string(variant) + (conserve ? "+softmax" : "") + " " +
                                                      to_string(kind) + " block " + std::to_string(blk));
                }
            }
        }
    }
    const double secs = since(t0);
    report(2, "gradient suite", worst <= 1e-6 && secs < 60.0,
           "worst relative error " + fmt("%.3e", worst) + " (" + worst_case + ") in " + fmt("%.2f s", secs));
}

// ---------------------------------------------------------------------------

void criterion_loss_floor() {
    Rng rng(404);
    bool exact = true, strict = true;
    double smallest = INFINITY;
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::Index nx = 1 + trial % 4, N = 1 + trial % 5, T = 1 + trial % 7;
        const Matrix target = random_matrix(rng, nx, N * T, 3.0);
        exact = exact && compute_loss(LossKind::ExpProduct, target, target, T).value == 1.0;
        Matrix pred = target;
        const double mag = std::pow(10.0, rng.uniform(-8.0, 0.0));
        if (trial % 2 == 0) {
            const auto idx = rng.uniform_int(0, pred.size() - 1);
            pred.data()[idx] += (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag;
        } else {
            pred += random_matrix(rng, nx, N * T, mag);
        }
        const double v = compute_loss(LossKind::ExpProduct, pred, target, T).value;
        strict = strict && v > 1.0;
        smallest = std::min(smallest, v - 1.0);
    }
    report(3, "loss floor", exact && strict,
           std::string("value at target ") + (exact ? "== 1" : "!= 1") + ", smallest excess over 1 for 1000 " +
               "perturbations " + fmt("%.3e", smallest));
}

// ---------------------------------------------------------------------------

double etdrk4_order() {
    const int n = 64;
    const double L = 2.0 * std::numbers::pi;
    SemilinearOperator op;
    op.eigenvalues = 0.1 * circulant_eigenvalues(Stencil::second_difference(), n, L).array() + 1.0;
    op.nonlinear = [](const Vector& u) -> Vector { return -u.array().cube(); };
    Vector u0(n);
    for (int i = 0; i < n; ++i) {
        const double x = L * i / n;
        u0[i] = 0.8 * std::sin(x) + 0.3 * std::cos(3.0 * x);
    }
    const std::vector<double> times{1.0};
    const Vector ref = etdrk4_solve(op, u0, 1.0 / 1024, times).row(0).transpose();
    std::vector<double> errs;
    for (double dt : {0.2, 0.1, 0.05}) {
        const Vector u = etdrk4_solve(op, u0, dt, times).row(0).transpose();
        errs.push_back((u - ref).norm() / ref.norm());
    }
    return std::min(std::log2(errs[0] / errs[1]), std::log2(errs[1] / errs[2]));
}

void criterion_integrators() {
    const auto t0 = Clock::now();
    const ProblemSpec corners = robertson_problem(ParamSampling::Grid, 2);
    const auto params = robertson_sampler(2);
    double cons = 0.0, selfconv = 0.0;
    ImplicitSolverConfig tight = corners.solver;
    tight.rtol /= 100.0;
    tight.atol /= 100.0;
    for (const auto& p : params) {
        const Sample s{Vector::Unit(3, 0), p};
        const RowMatrix a = solve_trajectory(corners, s, corners.solver);
        const RowMatrix b = solve_trajectory(corners, s, tight);
        for (Eigen::Index j = 0; j < a.rows(); ++j) {
            cons = std::max(cons, std::abs(a.row(j).sum() - 1.0));
            selfconv = std::max(selfconv, (a.row(j) - b.row(j)).norm() / b.row(j).norm());
        }
    }
    const double order = etdrk4_order();
    const double secs = since(t0);
    report(4, "integrator validity", cons <= 1e-9 && selfconv <= 1e-6 && order >= 3.8 && secs < 120.0,
           fmt("conservation %.3e, self-convergence %.3e, ", cons, selfconv) +
               fmt("ETDRK4 order %.3f, %.1f s", order, secs));
}

// ---------------------------------------------------------------------------

void criterion_embedding() {
    const auto pair = EmbeddingPair::random(3, 5, 505);
    Rng rng(506);
    double worst = 0.0;
    for (int q = 0; q < 1000; ++q) {
        const Vector y = random_matrix(rng, 3, 1, 2.0);
        worst = std::max(worst, (embed_inverse(pair, embed(pair, y)) - y).cwiseAbs().maxCoeff());
    }
    report(5, "embedding left inverse", worst <= 1e-10, fmt("max round-trip error %.3e over 1000 vectors", worst));
}

// ---------------------------------------------------------------------------
// Robertson training run shared by criteria 6, 8, 9 and 10.

struct RobertsonSetup {
    ProblemSpec problem;
    TrajectoryDataset train, val, test;
    Architecture arch;
    TrainConfig cfg;
    std::uint64_t model_seed = 0;
};

/// Row of a per-dim tensor grid as (i, j, k) indices, last index fastest.
std::array<int, 3> grid_index(std::size_t row, int per_dim) {
    const auto d = static_cast<std::size_t>(per_dim);
    return {static_cast<int>(row / (d * d)), static_cast<int>((row / d) % d), static_cast<int>(row % d)};
}

/// Whether grid point `idx` of a per_dim grid coincides with a point of the coarse grid.
bool on_grid(const std::array<int, 3>& idx, int per_dim, int coarse) {
    for (int v : idx)
        if ((v * (coarse - 1)) % (per_dim - 1) != 0) return false;
    return true;
}

TrajectoryDataset grid_subset(const ProblemSpec& problem, int per_dim, std::size_t count, std::uint64_t seed,
                              int exclude_grid) {
    const auto grid = robertson_sampler(per_dim);
    std::vector<std::size_t> pool;
    for (std::size_t r = 0; r < grid.size(); ++r)
        if (!on_grid(grid_index(r, per_dim), per_dim, exclude_grid)) pool.push_back(r);
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i)
        std::swap(pool[i], pool[i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(
                                                                               pool.size() - i - 1)))]);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    RowMatrix x0(static_cast<Eigen::Index>(count), 3), params(static_cast<Eigen::Index>(count), 3);
    for (std::size_t i = 0; i < count; ++i) {
        x0.row(static_cast<Eigen::Index>(i)) = Vector::Unit(3, 0).transpose();
        params.row(static_cast<Eigen::Index>(i)) = grid[pool[i]].transpose();
    }
    return generate_from(problem, x0, params, problem.solver);
}

RobertsonSetup robertson_setup() {
    RobertsonSetup s;
    s.problem = robertson_problem(ParamSampling::Grid, 16);
    s.train = grid_subset(s.problem, 16, 128, 11, 4);
    s.val = grid_subset(s.problem, 8, 64, 12, 4);
    const ProblemSpec test_problem = robertson_problem(ParamSampling::Grid, 4);
    s.test = generate(test_problem, test_problem.grid_size, 0, test_problem.solver);
    s.arch = s.problem.architecture(Variant::Independent, 5);
    s.cfg.loss = LossKind::ExpProduct;
    s.cfg.learning_rate = 1e-3;
    s.cfg.epochs = 3000;
    s.cfg.batch_size = 16;
    s.cfg.val_every = 50;
    s.cfg.seed = derive_seed(2024, 1);
    s.model_seed = derive_seed(2024, 0);
    return s;
}

struct Trained {
    LiLaNModel model;
    double r2 = 0.0;
    double seconds = 0.0;
};

Trained train_robertson(const RobertsonSetup& s, int skip) {
    const TrajectoryDataset data = skip > 0 ? coarsen_time(s.train, skip) : s.train;
    Trained t{LiLaNModel(s.arch, s.model_seed), 0.0, 0.0};
    t.model.set_transforms(fit_transforms(data, s.problem.transforms));
    const auto t0 = Clock::now();
    (void)train(t.model, data, &s.val, s.cfg);
    t.seconds = since(t0);
    t.r2 = evaluate(t.model, s.test).r2;
    return t;
}

// ---------------------------------------------------------------------------

void criterion_allen_cahn() {
    const auto t0 = Clock::now();
    const ProblemSpec problem = allen_cahn_problem(0.01, 128);
    const auto train_ds = generate(problem, 100, 1, problem.solver);
    const auto val = generate(problem, 20, 2, problem.solver);
    const auto test = generate(problem, 50, 3, problem.solver);
    Architecture arch = problem.architecture(Variant::Full, 64);
    arch.encoder_hidden = {64};
    arch.tau_hidden = {64};
    arch.decoder_hidden = {64, 64};
    LiLaNModel model(arch, 7);
    model.set_transforms(fit_transforms(train_ds, problem.transforms));
    TrainConfig cfg;
    cfg.loss = LossKind::RelL2;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 500;
    cfg.batch_size = 10;
    cfg.val_every = 25;
    cfg.seed = 9;
    (void)train(model, train_ds, &val, cfg);
    const double r2 = evaluate(model, test).r2;
    const double secs = since(t0);
    report(7, "Allen-Cahn small-scale accuracy", r2 <= 0.2 && secs <= 45 * 60.0,
           fmt("R2 = %.4f on 50 test trajectories (n = 128, 100 training), %.0f s", r2, secs));
}

void criterion_conservation(const LiLaNModel& model) {
    Rng rng(1010);
    const auto box = robertson_param_box();
    double worst = 0.0;
    for (int q = 0; q < 10000; ++q) {
        Vector p(3);
        for (int k = 0; k < 3; ++k) p[k] = rng.uniform(box.lo[k], box.hi[k]);
        const double t = std::pow(10.0, rng.uniform(-5.0, 5.0));
        worst = std::max(worst, std::abs(model.predict(Vector::Unit(3, 0), p, t).sum() - 1.0));
    }
    report(10, "conservation of predictions", worst <= 1e-12,
           fmt("max |sum - 1| = %.3e over 10000 queries", worst));
}

}  // namespace

int main() {
    report_file = std::fopen("acceptance_report.txt", "w");
    run_guarded(1, "direct-learning equivalence", criterion_direct_equivalence);
    run_guarded(2, "gradient suite", criterion_gradients);
    run_guarded(3, "loss floor", criterion_loss_floor);
    run_guarded(4, "integrator validity", criterion_integrators);
    run_guarded(5, "embedding left inverse", criterion_embedding);

    try {
        const auto t0 = Clock::now();
        const RobertsonSetup setup = robertson_setup();
        const Trained base = train_robertson(setup, 0);
        const double secs = since(t0);
        report(6, "Robertson small-scale accuracy", base.r2 <= 5e-3 && secs <= 30 * 60.0,
               fmt("R2 = %.3e with 128 training samples on the 64-sample test grid, %.0f s", base.r2, secs));

        run_guarded(8, "speedup", [&] {
            const ProblemSpec uniform = robertson_problem(ParamSampling::Uniform);
            const auto rep = speed_benchmark(base.model, uniform, 1000, 808, uniform.solver);
            report(8, "speedup", rep.ratio >= 10.0 && rep.solver_failures == 0,
                   fmt("solver %.2f s, surrogate %.4f s, ratio %.1fx for 1000 ICs", rep.solver_seconds,
                       rep.surrogate_seconds, rep.ratio));
        });

        run_guarded(9, "time-coarsening robustness", [&] {
            const Trained coarse = train_robertson(setup, 8);
            const double ratio = coarse.r2 / base.r2;
            report(9, "time-coarsening robustness", ratio <= 10.0,
                   fmt("R2 skip 0 = %.3e, skip 8 = %.3e, ratio %.2f", base.r2, coarse.r2, ratio));
        });

        run_guarded(10, "conservation of predictions", [&] { criterion_conservation(base.model); });
    } catch (const std::exception& e) {
        for (int id : {6, 8, 9, 10}) report(id, "Robertson study", false, std::string("exception: ") + e.what());
    }

    run_guarded(7, "Allen-Cahn small-scale accuracy", criterion_allen_cahn);

    std::printf("%d criteria failed\n", failures);
    if (report_file) {
        std::fprintf(report_file, "%d criteria failed\n", failures);
        std::fclose(report_file);
    }
    return failures == 0 ? 0 : 1;
}
