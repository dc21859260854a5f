#pragma once

#include <complex>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"

#include "lilan/mlp.hpp"

namespace lilan {

using OdeRhs = std::function<Vector(const Vector&)>;
using OdeJacobian = std::function<Matrix(const Vector&)>;

struct ImplicitSolverConfig {
    double rtol = 1e-8;
    double atol = 1e-12;
    long max_steps = 500'000;
    /// Newton stops once the weighted RMS norm of the update drops below this.
    double newton_tol = 1e-2;
    int newton_max_iters = 8;
    /// 0 picks the first step from the initial derivative.
    double initial_step = 0.0;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static ImplicitSolverConfig from_json(const nlohmann::json& j);
};

struct SolverStats {
    long accepted = 0;
    long rejected = 0;
    long newton_failures = 0;
    long jacobian_evals = 0;
};

/// Adaptive TR-BDF2 for autonomous x' = f(x) from t = 0, reporting the state at each output
/// time (rows of the result). Steps are clipped to land exactly on the output times.
[[nodiscard]] RowMatrix solve_stiff(const OdeRhs& rhs, const OdeJacobian& jacobian, const Vector& x0,
                                    std::span<const double> output_times, const ImplicitSolverConfig& cfg,
                                    SolverStats* stats = nullptr);

/// Symmetric periodic finite-difference stencil: coefficients for offsets 0, ±1, ±2, ...
/// applied to a grid function and divided by h^derivative_order.
struct Stencil {
    std::vector<double> coeffs;
    int derivative_order = 2;

    [[nodiscard]] static Stencil second_difference() { return {{-2.0, 1.0}, 2}; }
    [[nodiscard]] static Stencil fourth_difference() { return {{6.0, -4.0, 1.0}, 4}; }
};

/// Eigenvalues of the circulant operator on n periodic points over a domain of length L,
/// in DFT index order k = 0..n-1.
[[nodiscard]] Vector circulant_eigenvalues(const Stencil& stencil, int n, double L);

/// u' = L u + N(u) on a uniform periodic grid with L diagonal in the DFT basis.
/// The nonlinear term is FFT(nonlinear(u)) scaled per mode by `nonlinear_multiplier`
/// (empty means 1), which lets terms like Δ(u³) be applied spectrally.
struct SemilinearOperator {
    Vector eigenvalues;
    std::function<Vector(const Vector&)> nonlinear;
    Vector nonlinear_multiplier;
};

struct Etdrk4Coefficients {
    Vector E, E2, Q, f1, f2, f3;
};

enum class PhiBranch { Auto, Contour, ClosedForm };

/// ETDRK4 scalar coefficients per eigenvalue. Auto uses the contour mean when
/// |λ·dt| < kPhiContourThreshold and the closed forms otherwise.
[[nodiscard]] Etdrk4Coefficients phi_coefficients(const Vector& eigenvalues, double dt,
                                                  PhiBranch branch = PhiBranch::Auto);

/// Contour-mean branch threshold and point count.
inline constexpr double kPhiContourThreshold = 0.5;
inline constexpr int kPhiContourPoints = 64;

/// ETDRK4 from t = 0 with fixed step dt; every output time must be an integer multiple of dt.
[[nodiscard]] RowMatrix etdrk4_solve(const SemilinearOperator& op, const Vector& u0, double dt,
                                     std::span<const double> output_times);

}  // namespace lilan
