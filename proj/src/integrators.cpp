#include "lilan/integrators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

namespace lilan {

void ImplicitSolverConfig::validate() const {
    require(rtol > 0.0 && atol > 0.0, ErrorKind::Config, "solver tolerances must be positive");
    require(max_steps >= 1 && newton_max_iters >= 1, ErrorKind::Config, "solver iteration caps must be >= 1");
    require(newton_tol > 0.0, ErrorKind::Config, "newton_tol must be positive");
}

nlohmann::json ImplicitSolverConfig::to_json() const {
    return {{"method", "tr-bdf2"},     {"rtol", rtol},
            {"atol", atol},            {"max_steps", max_steps},
            {"newton_tol", newton_tol}, {"newton_max_iters", newton_max_iters},
            {"initial_step", initial_step}};
}

ImplicitSolverConfig ImplicitSolverConfig::from_json(const nlohmann::json& j) {
    ImplicitSolverConfig c;
    c.rtol = j.value("rtol", c.rtol);
    c.atol = j.value("atol", c.atol);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.newton_tol = j.value("newton_tol", c.newton_tol);
    c.newton_max_iters = j.value("newton_max_iters", c.newton_max_iters);
    c.initial_step = j.value("initial_step", c.initial_step);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// TR-BDF2

namespace {

const double kGamma = 2.0 - std::numbers::sqrt2;
const double kD = kGamma / 2.0;
const double kW = 1.0 / (kGamma * (2.0 - kGamma));
const double kErrC = (-3.0 * kGamma * kGamma + 4.0 * kGamma - 2.0) / (6.0 * (2.0 - kGamma));

double wrms(const Vector& v, const Vector& weight) {
    return std::sqrt((v.array() / weight.array()).square().mean());
}

class TrBdf2 {
public:
    TrBdf2(const OdeRhs& f, const OdeJacobian& jac, const ImplicitSolverConfig& cfg, SolverStats& stats)
        : f_(f), jac_(jac), cfg_(cfg), stats_(stats) {}

    /// Attempts one step of size h from (y, fy). Returns false when Newton fails.
    bool attempt(const Vector& y, const Vector& fy, double h, Vector& y_new, Vector& f_new, double& err) {
        const Index n = y.size();
        const Matrix J = jac_(y);
        ++stats_.jacobian_evals;
        Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(n, n) - kD * h * J);
        const Vector weight = cfg_.atol + cfg_.rtol * y.array().abs();

        // Trapezoidal stage to t + γh.
        Vector zg = y;
        const Vector rhs_g = y + kD * h * fy;
        Vector fg;
        if (!newton(lu, rhs_g, h, weight, zg, fg)) return false;

        // BDF2 stage to t + h.
        Vector z = y + (zg - y) / kGamma;
        const Vector rhs_1 = kW * zg - kW * (1.0 - kGamma) * (1.0 - kGamma) * y;
        if (!newton(lu, rhs_1, h, weight, z, f_new)) return false;

        const Vector est = lu.solve(Vector(kErrC * h * ((f_new - fg) / (1.0 - kGamma) - (fg - fy) / kGamma)));
        const Vector w_new = cfg_.atol + cfg_.rtol * y.array().abs().max(z.array().abs());
        err = wrms(est, w_new);
        if (!std::isfinite(err)) return false;
        y_new = std::move(z);
        return true;
    }

private:
    using Index = Eigen::Index;

    /// Solves z - d h f(z) = rhs with the frozen iteration matrix.
    bool newton(const Eigen::PartialPivLU<Matrix>& lu, const Vector& rhs, double h, const Vector& weight, Vector& z,
                Vector& fz) {
        double prev = 0.0;
        for (int it = 0; it < cfg_.newton_max_iters; ++it) {
            fz = f_(z);
            const Vector residual = z - kD * h * fz - rhs;
            const Vector delta = lu.solve(residual);
            z -= delta;
            const double norm = wrms(delta, weight);
            if (!std::isfinite(norm)) return false;
            if (norm <= cfg_.newton_tol) {
                fz = f_(z);
                return true;
            }
            if (it > 0 && norm > 2.0 * prev) return false;
            prev = norm;
        }
        return false;
    }

    const OdeRhs& f_;
    const OdeJacobian& jac_;
    const ImplicitSolverConfig& cfg_;
    SolverStats& stats_;
};

}  // namespace

RowMatrix solve_stiff(const OdeRhs& rhs, const OdeJacobian& jacobian, const Vector& x0,
                      std::span<const double> output_times, const ImplicitSolverConfig& cfg, SolverStats* stats) {
    cfg.validate();
    for (std::size_t i = 0; i < output_times.size(); ++i) {
        require(output_times[i] >= 0.0, ErrorKind::Grid, "output times must be non-negative");
        if (i > 0) require(output_times[i] > output_times[i - 1], ErrorKind::Grid, "output times must increase");
    }
    SolverStats local;
    SolverStats& st = stats ? *stats : local;
    TrBdf2 stepper(rhs, jacobian, cfg, st);

    RowMatrix out(static_cast<Eigen::Index>(output_times.size()), x0.size());
    Vector y = x0;
    Vector fy = rhs(y);
    double t = 0.0;

    double h = cfg.initial_step;
    if (h <= 0.0) {
        const Vector w = cfg.atol + cfg.rtol * y.array().abs();
        const double d0 = wrms(y, w);
        const double d1 = wrms(fy, w);
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    }

    long attempts = 0;
    for (std::size_t k = 0; k < output_times.size(); ++k) {
        const double target = output_times[k];
        while (t < target) {
            double step = h;
            bool clipped = false;
            if (t + 1.05 * step >= target) {
                step = target - t;
                clipped = true;
            }
            int newton_failures = 0;
            while (true) {
                if (++attempts > cfg.max_steps)
                    fail(ErrorKind::Budget, "step budget of " + std::to_string(cfg.max_steps) +
                                                " exhausted at t = " + std::to_string(t));
                Vector y_new, f_new;
                double err = 0.0;
                if (!stepper.attempt(y, fy, step, y_new, f_new, err)) {
                    ++st.newton_failures;
                    if (++newton_failures > 10 || step < 1e-14 * std::max(1.0, t))
                        fail(ErrorKind::SolverFailure, "Newton iteration failed to converge at t = " + std::to_string(t));
                    step *= 0.25;
                    clipped = false;
                    continue;
                }
                const double factor = err > 0.0 ? 0.9 * std::pow(err, -1.0 / 3.0) : 5.0;
                if (err <= 1.0) {
                    ++st.accepted;
                    t = clipped ? target : t + step;
                    y = std::move(y_new);
                    fy = std::move(f_new);
                    const double grown = step * std::clamp(factor, 0.2, 5.0);
                    // A clipped step says nothing about how large the next may be.
                    h = clipped ? std::max(h, grown) : grown;
                    break;
                }
                ++st.rejected;
                step *= std::clamp(factor, 0.2, 0.9);
                clipped = false;
            }
        }
        out.row(static_cast<Eigen::Index>(k)) = y.transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Circulant operators and ETDRK4

Vector circulant_eigenvalues(const Stencil& stencil, int n, double L) {
    require(L > 0.0, ErrorKind::Domain, "domain length must be positive");
    require(!stencil.coeffs.empty(), ErrorKind::Shape, "empty stencil");
    const int width = 2 * static_cast<int>(stencil.coeffs.size()) - 1;
    if (n < width)
        fail(ErrorKind::Shape, "stencil of width " + std::to_string(width) + " is wider than the grid (" +
                                   std::to_string(n) + ")");
    const double h = L / n;
    const double scale = std::pow(h, -stencil.derivative_order);
    Vector lam(n);
    for (int k = 0; k < n; ++k) {
        double s = stencil.coeffs[0];
        for (std::size_t j = 1; j < stencil.coeffs.size(); ++j)
            s += 2.0 * stencil.coeffs[j] * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) * k / n);
        lam[k] = s * scale;
    }
    return lam;
}

Etdrk4Coefficients phi_coefficients(const Vector& eigenvalues, double dt, PhiBranch branch) {
    require(dt > 0.0, ErrorKind::Domain, "dt must be positive");
    using C = std::complex<double>;
    const Eigen::Index n = eigenvalues.size();
    Etdrk4Coefficients c{Vector(n), Vector(n), Vector(n), Vector(n), Vector(n), Vector(n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        const double z = eigenvalues[k] * dt;
        c.E[k] = std::exp(z);
        c.E2[k] = std::exp(z / 2.0);
        const bool contour =
            branch == PhiBranch::Contour || (branch == PhiBranch::Auto && std::abs(z) < kPhiContourThreshold);
        if (contour) {
            C q{}, a{}, b{}, g{};
            for (int j = 0; j < kPhiContourPoints; ++j) {
                const C r = std::polar(1.0, std::numbers::pi * (j + 0.5) * 2.0 / kPhiContourPoints);
                const C w = z + r;
                const C ew = std::exp(w);
                const C w3 = w * w * w;
                q += (std::exp(w / 2.0) - 1.0) / w;
                a += (-4.0 - w + ew * (4.0 - 3.0 * w + w * w)) / w3;
                b += (2.0 + w + ew * (w - 2.0)) / w3;
                g += (-4.0 - 3.0 * w - w * w + ew * (4.0 - w)) / w3;
            }
            const double m = kPhiContourPoints;
            c.Q[k] = dt * (q / m).real();
            c.f1[k] = dt * (a / m).real();
            c.f2[k] = dt * (b / m).real();
            c.f3[k] = dt * (g / m).real();
        } else {
            const double ez = c.E[k];
            const double z3 = z * z * z;
            c.Q[k] = dt * (c.E2[k] - 1.0) / z;
            c.f1[k] = dt * (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
            c.f2[k] = dt * (2.0 + z + ez * (z - 2.0)) / z3;
            c.f3[k] = dt * (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
        }
    }
    return c;
}

RowMatrix etdrk4_solve(const SemilinearOperator& op, const Vector& u0, double dt, std::span<const double> output_times) {
    using CVec = Eigen::VectorXcd;
    const Eigen::Index n = u0.size();
    require(op.eigenvalues.size() == n, ErrorKind::Shape, "eigenvalue count does not match the state size");
    require(op.nonlinear_multiplier.size() == 0 || op.nonlinear_multiplier.size() == n, ErrorKind::Shape,
            "nonlinear multiplier size does not match the state size");
    require(dt > 0.0, ErrorKind::Domain, "dt must be positive");

    std::vector<long> step_at;
    for (std::size_t i = 0; i < output_times.size(); ++i) {
        const double q = output_times[i] / dt;
        const double r = std::round(q);
        if (std::abs(q - r) > 1e-9 * std::max(1.0, q) || r < 0.0)
            fail(ErrorKind::Grid, "output time " + std::to_string(output_times[i]) + " is not a multiple of dt = " +
                                      std::to_string(dt));
        if (!step_at.empty() && static_cast<long>(r) <= step_at.back())
            fail(ErrorKind::Grid, "output times must increase");
        step_at.push_back(static_cast<long>(r));
    }

    const Etdrk4Coefficients co = phi_coefficients(op.eigenvalues, dt);
    Eigen::FFT<double> fft;
    const bool scaled = op.nonlinear_multiplier.size() == n;
    auto nonlinear_hat = [&](const CVec& v) {
        Vector u(n);
        fft.inv(u, v);
        CVec out(n);
        fft.fwd(out, op.nonlinear(u));
        if (scaled) out.array() *= op.nonlinear_multiplier.array();
        return out;
    };

    RowMatrix out(static_cast<Eigen::Index>(output_times.size()), n);
    CVec v(n);
    fft.fwd(v, u0);
    long step = 0;
    const auto E = co.E.array(), E2 = co.E2.array(), Q = co.Q.array();
    const auto f1 = co.f1.array(), f2 = co.f2.array(), f3 = co.f3.array();
    for (std::size_t i = 0; i < step_at.size(); ++i) {
        for (; step < step_at[i]; ++step) {
            const CVec Nv = nonlinear_hat(v);
            const CVec a = (E2 * v.array() + Q * Nv.array()).matrix();
            const CVec Na = nonlinear_hat(a);
            const CVec b = (E2 * v.array() + Q * Na.array()).matrix();
            const CVec Nb = nonlinear_hat(b);
            const CVec c = (E2 * a.array() + Q * (2.0 * Nb.array() - Nv.array())).matrix();
            const CVec Nc = nonlinear_hat(c);
            v = (E * v.array() + f1 * Nv.array() + 2.0 * f2 * (Na.array() + Nb.array()) + f3 * Nc.array()).matrix();
        }
        if (step == 0) {
            out.row(static_cast<Eigen::Index>(i)) = u0.transpose();
            continue;
        }
        Vector u(n);
        fft.inv(u, v);
        out.row(static_cast<Eigen::Index>(i)) = u.transpose();
    }
    return out;
}

}  // namespace lilan
