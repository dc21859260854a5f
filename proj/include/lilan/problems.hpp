#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "lilan/integrators.hpp"
#include "lilan/model.hpp"
#include "lilan/rng.hpp"

namespace lilan {

enum class ProblemKind { Ode, SemilinearPde };

/// One input sample: initial condition and parameters.
struct Sample {
    Vector x0;
    Vector p;
};

/// A benchmark problem: dynamics, output time grid, sampler and the default transform and
/// architecture choices used for it.
struct ProblemSpec {
    std::string name;
    ProblemKind kind = ProblemKind::Ode;
    int state_dim = 0;
    int param_dim = 0;

    // ODE problems.
    std::function<Vector(const Vector& x, const Vector& p)> rhs;
    std::function<Matrix(const Vector& x, const Vector& p)> jacobian;

    // PDE problems: the operator acts on the state_dim - 1 periodic unknowns; the stored
    // last grid point duplicates the first.
    SemilinearOperator op;
    Vector grid;
    int substeps = 4;

    std::vector<double> times;
    /// Draws sample `index` of `count` from its own seed (already derived from the master seed).
    std::function<Sample(std::size_t index, std::size_t count, std::uint64_t sample_seed)> sampler;
    /// Sample count the sampler is built for (grid samplers); 0 when any count works.
    std::size_t grid_size = 0;

    /// Solver settings used for data generation.
    ImplicitSolverConfig solver;

    InputLayout layout = InputLayout::Params;
    TransformOptions transforms;
    Conservation conservation = Conservation::None;
    std::optional<double> conservation_constant;
    nlohmann::json constants = nlohmann::json::object();

    [[nodiscard]] double pde_dt() const;
    /// Architecture with this problem's dimensions and the given variant and latent width.
    [[nodiscard]] Architecture architecture(Variant variant, int group_latent_dim) const;
};

// Robertson kinetics --------------------------------------------------------

[[nodiscard]] Vector robertson_rhs(const Vector& x, const Vector& p);
[[nodiscard]] Matrix robertson_jacobian(const Vector& x, const Vector& p);

struct ParamBox {
    Vector lo, hi;
};
/// [0.2e-2, 0.6e-2] x [1.5e7, 3.5e7] x [5e3, 1.5e4].
[[nodiscard]] ParamBox robertson_param_box();
/// Full tensor grid with `per_dim` linearly spaced points per parameter, last parameter fastest.
[[nodiscard]] std::vector<Vector> robertson_sampler(int per_dim);
/// 50 log-uniform times on [1e-5, 1e5].
[[nodiscard]] std::vector<double> robertson_time_grid();

inline const Vector kRobertsonCanonicalRates = (Vector(3) << 4e-2, 3e7, 1e4).finished();

enum class ParamSampling { Grid, Uniform };

/// Robertson with x0 = [1, 0, 0]. Grid sampling walks the tensor grid (per_dim^3 samples);
/// uniform sampling draws each p independently from the box.
[[nodiscard]] ProblemSpec robertson_problem(ParamSampling sampling = ParamSampling::Grid, int per_dim = 16);

// Phase-field PDEs -----------------------------------------------------------

/// u_t = eps u_xx + u - u^3 on [0, 2π], n stored points including the periodic endpoint.
[[nodiscard]] ProblemSpec allen_cahn_problem(double epsilon = 0.01, int n = 201, int substeps = 4);
/// Σ_{i=1..3} a sin(b x + φ) + a cos(b x + φ), a ~ U(0, 1/6), b ~ U{1,2,3}, φ ~ U(0, 2π).
[[nodiscard]] Vector ac_sample_ic(Rng& rng, const Vector& x);

/// u_t = α(-u_xx - γ u_xxxx + (u^3)_xx) on [-1, 1].
[[nodiscard]] ProblemSpec cahn_hilliard_problem(double alpha = 0.01, double gamma = 1e-4, int n = 201,
                                                int substeps = 16);
/// a sin(bπ(x+1) + φ) + a cos(bπ(x+1) + φ), a ~ U(0.1, 0.6), b ~ U{1,2,3}, φ ~ U(0, 2π).
[[nodiscard]] Vector ch_sample_ic(Rng& rng, const Vector& x);

/// Builds a problem by name ("robertson", "allen_cahn", "cahn_hilliard") with optional
/// constant overrides (epsilon, alpha, gamma, n, substeps, grid_per_dim, sampling).
[[nodiscard]] ProblemSpec make_problem(const std::string& name,
                                       const nlohmann::json& overrides = nlohmann::json::object());

/// One reference trajectory on the problem's time grid, (M+1) x state_dim.
[[nodiscard]] RowMatrix solve_trajectory(const ProblemSpec& problem, const Sample& sample,
                                         const ImplicitSolverConfig& cfg);

}  // namespace lilan
