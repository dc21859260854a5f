#include "lilan/problems.hpp"

#include <cmath>
#include <memory>
#include <numbers>

namespace lilan {

double ProblemSpec::pde_dt() const {
    require(times.size() >= 2, ErrorKind::Grid, "PDE time grid needs at least two points");
    return (times[1] - times[0]) / substeps;
}

Architecture ProblemSpec::architecture(Variant variant, int group_latent_dim) const {
    Architecture a;
    a.variant = variant;
    a.state_dim = state_dim;
    a.param_dim = param_dim;
    a.layout = layout;
    a.group_latent_dim = group_latent_dim;
    a.conservation = conservation;
    a.conservation_constant = conservation_constant;
    if (kind == ProblemKind::SemilinearPde) {
        a.encoder_hidden = {state_dim};
        a.tau_hidden = {state_dim};
        a.decoder_hidden = {state_dim, state_dim};
    }
    a.validate();
    return a;
}

// ---------------------------------------------------------------------------

Vector robertson_rhs(const Vector& x, const Vector& p) {
    require(x.size() == 3 && p.size() == 3, ErrorKind::Shape, "Robertson needs 3 states and 3 rates");
    const double r1 = p[0] * x[0];
    const double r2 = p[1] * x[1] * x[1];
    const double r3 = p[2] * x[1] * x[2];
    Vector f(3);
    f << -r1 + r3, r1 - r3 - r2, r2;
    return f;
}

Matrix robertson_jacobian(const Vector& x, const Vector& p) {
    require(x.size() == 3 && p.size() == 3, ErrorKind::Shape, "Robertson needs 3 states and 3 rates");
    Matrix J(3, 3);
    J << -p[0], p[2] * x[2], p[2] * x[1],
         p[0], -p[2] * x[2] - 2.0 * p[1] * x[1], -p[2] * x[1],
         0.0, 2.0 * p[1] * x[1], 0.0;
    return J;
}

ParamBox robertson_param_box() {
    ParamBox b{Vector(3), Vector(3)};
    b.lo << 0.2e-2, 1.5e7, 5e3;
    b.hi << 0.6e-2, 3.5e7, 1.5e4;
    return b;
}

std::vector<Vector> robertson_sampler(int per_dim) {
    require(per_dim >= 2, ErrorKind::Config, "grid needs at least 2 points per dimension");
    const ParamBox box = robertson_param_box();
    auto coord = [&](int d, int i) {
        return box.lo[d] + (box.hi[d] - box.lo[d]) * static_cast<double>(i) / (per_dim - 1);
    };
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(per_dim) * per_dim * per_dim);
    for (int i = 0; i < per_dim; ++i)
        for (int j = 0; j < per_dim; ++j)
            for (int k = 0; k < per_dim; ++k) {
                Vector p(3);
                p << coord(0, i), coord(1, j), coord(2, k);
                out.push_back(std::move(p));
            }
    return out;
}

std::vector<double> robertson_time_grid() {
    std::vector<double> t(50);
    for (int i = 0; i < 50; ++i) t[static_cast<std::size_t>(i)] = std::pow(10.0, -5.0 + 10.0 * i / 49.0);
    t.front() = 1e-5;
    t.back() = 1e5;
    return t;
}

ProblemSpec robertson_problem(ParamSampling sampling, int per_dim) {
    ProblemSpec ps;
    ps.name = "robertson";
    ps.kind = ProblemKind::Ode;
    ps.state_dim = 3;
    ps.param_dim = 3;
    ps.rhs = robertson_rhs;
    ps.jacobian = robertson_jacobian;
    ps.times = robertson_time_grid();
    ps.layout = InputLayout::Params;
    ps.transforms = TransformOptions::ode(InputLayout::Params);
    ps.conservation = Conservation::SoftmaxScaled;
    ps.conservation_constant = 1.0;
    // Near pure relative control: the log-scaled training targets need every component,
    // however small, to a few significant digits.
    ps.solver.rtol = 1e-9;
    ps.solver.atol = 1e-22;
    const Vector x0 = (Vector(3) << 1.0, 0.0, 0.0).finished();
    if (sampling == ParamSampling::Grid) {
        auto grid = std::make_shared<std::vector<Vector>>(robertson_sampler(per_dim));
        ps.grid_size = grid->size();
        ps.sampler = [grid, x0](std::size_t index, std::size_t, std::uint64_t) {
            if (index >= grid->size()) fail(ErrorKind::Config, "sample index beyond the parameter grid");
            return Sample{x0, (*grid)[index]};
        };
        ps.constants = {{"sampling", "grid"}, {"grid_per_dim", per_dim}};
    } else {
        const ParamBox box = robertson_param_box();
        ps.sampler = [box, x0](std::size_t, std::size_t, std::uint64_t seed) {
            Rng rng(seed);
            Vector p(3);
            for (int d = 0; d < 3; ++d) p[d] = rng.uniform(box.lo[d], box.hi[d]);
            return Sample{x0, p};
        };
        ps.constants = {{"sampling", "uniform"}};
    }
    ps.constants["x0"] = {1.0, 0.0, 0.0};
    return ps;
}

// ---------------------------------------------------------------------------

namespace {

Vector linspace(double a, double b, int n) { return Vector::LinSpaced(n, a, b); }

std::vector<double> linear_times(double t_end, int count) {
    std::vector<double> t(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) t[static_cast<std::size_t>(i)] = t_end * i / (count - 1);
    return t;
}

Vector wave_pair(const Vector& arg, double amp) {
    return amp * (arg.array().sin() + arg.array().cos());
}

}  // namespace

Vector ac_sample_ic(Rng& rng, const Vector& x) {
    Vector u = Vector::Zero(x.size());
    for (int w = 0; w < 3; ++w) {
        const double a = rng.uniform(0.0, 1.0 / 6.0);
        const auto b = static_cast<double>(rng.uniform_int(1, 3));
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        u += wave_pair((b * x.array() + phi).matrix(), a);
    }
    return u;
}

Vector ch_sample_ic(Rng& rng, const Vector& x) {
    const double a = rng.uniform(0.1, 0.6);
    const auto b = static_cast<double>(rng.uniform_int(1, 3));
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return wave_pair((b * std::numbers::pi * (x.array() + 1.0) + phi).matrix(), a);
}

ProblemSpec allen_cahn_problem(double epsilon, int n, int substeps) {
    require(epsilon > 0.0, ErrorKind::Config, "epsilon must be positive");
    require(n >= 4, ErrorKind::Config, "grid needs at least 4 points");
    require(substeps >= 1, ErrorKind::Config, "substeps must be >= 1");
    const double L = 2.0 * std::numbers::pi;
    ProblemSpec ps;
    ps.name = "allen_cahn";
    ps.kind = ProblemKind::SemilinearPde;
    ps.state_dim = n;
    ps.param_dim = 0;
    ps.grid = linspace(0.0, L, n);
    ps.substeps = substeps;
    ps.op.eigenvalues = (epsilon * circulant_eigenvalues(Stencil::second_difference(), n - 1, L)).array() + 1.0;
    ps.op.nonlinear = [](const Vector& u) -> Vector { return -u.array().cube(); };
    ps.times = linear_times(10.0, 101);
    ps.sampler = [x = ps.grid](std::size_t, std::size_t, std::uint64_t seed) {
        Rng rng(seed);
        Vector u0 = ac_sample_ic(rng, x);
        u0[u0.size() - 1] = u0[0];
        return Sample{std::move(u0), Vector()};
    };
    ps.layout = InputLayout::State;
    ps.transforms = TransformOptions::pde();
    ps.constants = {{"epsilon", epsilon},
                    {"n", n},
                    {"substeps", substeps},
                    {"domain", {0.0, L}},
                    {"linear_part", "epsilon*laplacian + 1"},
                    {"nonlinear_part", "-u^3"}};
    return ps;
}

ProblemSpec cahn_hilliard_problem(double alpha, double gamma, int n, int substeps) {
    require(alpha > 0.0 && gamma > 0.0, ErrorKind::Config, "alpha and gamma must be positive");
    require(n >= 6, ErrorKind::Config, "grid needs at least 6 points");
    require(substeps >= 1, ErrorKind::Config, "substeps must be >= 1");
    const double L = 2.0;
    ProblemSpec ps;
    ps.name = "cahn_hilliard";
    ps.kind = ProblemKind::SemilinearPde;
    ps.state_dim = n;
    ps.param_dim = 0;
    ps.grid = linspace(-1.0, 1.0, n);
    ps.substeps = substeps;
    const Vector lap = circulant_eigenvalues(Stencil::second_difference(), n - 1, L);
    const Vector bih = circulant_eigenvalues(Stencil::fourth_difference(), n - 1, L);
    ps.op.eigenvalues = alpha * (-lap - gamma * bih);
    ps.op.nonlinear = [](const Vector& u) -> Vector { return u.array().cube(); };
    ps.op.nonlinear_multiplier = alpha * lap;
    ps.times = linear_times(20.0, 401);
    ps.sampler = [x = ps.grid](std::size_t, std::size_t, std::uint64_t seed) {
        Rng rng(seed);
        Vector u0 = ch_sample_ic(rng, x);
        u0[u0.size() - 1] = u0[0];
        return Sample{std::move(u0), Vector()};
    };
    ps.layout = InputLayout::State;
    ps.transforms = TransformOptions::pde();
    ps.constants = {{"alpha", alpha},
                    {"gamma", gamma},
                    {"n", n},
                    {"substeps", substeps},
                    {"domain", {-1.0, 1.0}},
                    {"linear_part", "alpha*(-laplacian - gamma*biharmonic)"},
                    {"nonlinear_part", "alpha*laplacian(u^3)"}};
    return ps;
}

ProblemSpec make_problem(const std::string& name, const nlohmann::json& overrides) {
    if (!overrides.is_null() && !overrides.is_object()) fail(ErrorKind::Config, "problem constants must be an object");
    const nlohmann::json o = overrides.is_null() ? nlohmann::json::object() : overrides;
    try {
        if (name == "robertson") {
            const auto sampling = o.value("sampling", std::string("grid"));
            if (sampling != "grid" && sampling != "uniform")
                fail(ErrorKind::Config, "sampling must be 'grid' or 'uniform'");
            return robertson_problem(sampling == "grid" ? ParamSampling::Grid : ParamSampling::Uniform,
                                     o.value("grid_per_dim", 16));
        }
        if (name == "allen_cahn")
            return allen_cahn_problem(o.value("epsilon", 0.01), o.value("n", 201), o.value("substeps", 4));
        if (name == "cahn_hilliard")
            return cahn_hilliard_problem(o.value("alpha", 0.01), o.value("gamma", 1e-4), o.value("n", 201),
                                         o.value("substeps", 16));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("bad problem constant: ") + e.what());
    }
    fail(ErrorKind::UnknownName, "unknown problem '" + name + "'");
}

RowMatrix solve_trajectory(const ProblemSpec& problem, const Sample& s, const ImplicitSolverConfig& cfg) {
    require(s.x0.size() == problem.state_dim, ErrorKind::Shape, "x0 width does not match the problem");
    require(s.p.size() == problem.param_dim, ErrorKind::Shape, "parameter width does not match the problem");
    if (problem.kind == ProblemKind::Ode) {
        const Vector p = s.p;
        return solve_stiff([&](const Vector& x) { return problem.rhs(x, p); },
                           [&](const Vector& x) { return problem.jacobian(x, p); }, s.x0, problem.times, cfg);
    }
    const Eigen::Index n = problem.state_dim;
    const RowMatrix inner = etdrk4_solve(problem.op, s.x0.head(n - 1), problem.pde_dt(), problem.times);
    RowMatrix out(inner.rows(), n);
    out.leftCols(n - 1) = inner;
    out.col(n - 1) = inner.col(0);
    return out;
}

}  // namespace lilan
