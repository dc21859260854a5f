#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "lilan/integrators.hpp"
#include "lilan/problems.hpp"
#include "support.hpp"

using namespace lilan;
using Catch::Approx;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Io;
}

}  // namespace

TEST_CASE("TR-BDF2 matches the exact solution of a stiff linear system", "[tr-bdf2]") {
    Rng rng(1);
    const Matrix Q = Eigen::HouseholderQR<Matrix>(test::random_matrix(rng, 3, 3)).householderQ();
    const Vector lambda = (Vector(3) << -1.0, -100.0, -1e4).finished();
    const Matrix A = Q * lambda.asDiagonal() * Q.transpose();
    const Vector x0 = (Vector(3) << 1.0, -0.5, 2.0).finished();
    const std::vector<double> times{0.0, 1e-4, 1e-2, 0.5, 3.0};

    ImplicitSolverConfig cfg;
    cfg.rtol = 1e-10;
    cfg.atol = 1e-14;
    SolverStats stats;
    const RowMatrix x = solve_stiff([&](const Vector& y) -> Vector { return A * y; },
                                    [&](const Vector&) -> Matrix { return A; }, x0, times, cfg, &stats);
    REQUIRE(x.rows() == 5);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    for (std::size_t j = 0; j < times.size(); ++j) {
        const Vector expected = es.eigenvectors() *
                                (es.eigenvalues().array() * times[j]).exp().matrix().asDiagonal() *
                                es.eigenvectors().transpose() * x0;
        CHECK((x.row(static_cast<Eigen::Index>(j)).transpose() - expected).norm() <= 1e-7 * x0.norm());
    }
    CHECK(stats.accepted > 0);
    CHECK(stats.jacobian_evals > 0);
}

TEST_CASE("TR-BDF2 reproduces the Robertson reference at t = 40", "[tr-bdf2][robertson]") {
    ImplicitSolverConfig cfg;
    cfg.rtol = 1e-12;
    cfg.atol = 1e-22;
    const Vector p = kRobertsonCanonicalRates;
    const std::vector<double> times{40.0};
    const RowMatrix x = solve_stiff([&](const Vector& y) { return robertson_rhs(y, p); },
                                    [&](const Vector& y) { return robertson_jacobian(y, p); },
                                    Vector::Unit(3, 0), times, cfg);
    CHECK(x(0, 0) == Approx(0.7158270687).epsilon(1e-8));
    CHECK(x(0, 1) == Approx(9.185534764e-6).epsilon(1e-7));
    CHECK(x(0, 2) == Approx(0.2841637457).epsilon(1e-8));
}

TEST_CASE("TR-BDF2 lands on the requested output times", "[tr-bdf2]") {
    // x' = 1 gives x(t) = t, so any interpolation or overshoot shows up directly.
    const std::vector<double> times{0.0, 0.3, 1.7, 1.71, 100.0};
    const RowMatrix x = solve_stiff([](const Vector& y) -> Vector { return Vector::Ones(y.size()); },
                                    [](const Vector& y) -> Matrix { return Matrix::Zero(y.size(), y.size()); },
                                    Vector::Zero(1), times, ImplicitSolverConfig{});
    for (std::size_t j = 0; j < times.size(); ++j)
        CHECK(x(static_cast<Eigen::Index>(j), 0) == Approx(times[j]).epsilon(1e-13));
}

TEST_CASE("TR-BDF2 enforces its step budget and configuration", "[tr-bdf2]") {
    ImplicitSolverConfig cfg;
    cfg.max_steps = 3;
    const std::vector<double> times{1e5};
    const Vector p = kRobertsonCanonicalRates;
    CHECK(kind_of([&] {
              (void)solve_stiff([&](const Vector& y) { return robertson_rhs(y, p); },
                                [&](const Vector& y) { return robertson_jacobian(y, p); }, Vector::Unit(3, 0),
                                times, cfg);
          }) == ErrorKind::Budget);

    ImplicitSolverConfig bad;
    bad.rtol = 0.0;
    CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::Config);
    bad = ImplicitSolverConfig{};
    bad.newton_max_iters = 0;
    CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::Config);

    const std::vector<double> backwards{1.0, 0.5};
    CHECK(kind_of([&] {
              (void)solve_stiff([](const Vector& y) -> Vector { return -y; },
                                [](const Vector&) -> Matrix { return -Matrix::Identity(1, 1); }, Vector::Ones(1),
                                backwards, ImplicitSolverConfig{});
          }) == ErrorKind::Grid);
}

TEST_CASE("solver configuration survives json", "[tr-bdf2]") {
    ImplicitSolverConfig cfg;
    cfg.rtol = 3e-9;
    cfg.atol = 1e-22;
    cfg.max_steps = 77;
    const auto back = ImplicitSolverConfig::from_json(cfg.to_json());
    CHECK(back.rtol == cfg.rtol);
    CHECK(back.atol == cfg.atol);
    CHECK(back.max_steps == 77);
}

// ---------------------------------------------------------------------------

TEST_CASE("circulant eigenvalues match the dense periodic operator", "[spectral]") {
    const int n = 12;
    const double L = 3.0;
    for (const auto& st : {Stencil::second_difference(), Stencil::fourth_difference()}) {
        const double h = L / n;
        Matrix D = Matrix::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (std::size_t o = 0; o < st.coeffs.size(); ++o) {
                const int off = static_cast<int>(o);
                D(i, (i + off) % n) += st.coeffs[o] / std::pow(h, st.derivative_order);
                if (off != 0) D(i, (i - off + n) % n) += st.coeffs[o] / std::pow(h, st.derivative_order);
            }
        const Vector lambda = circulant_eigenvalues(st, n, L);
        REQUIRE(lambda.size() == n);
        for (int k = 0; k < n; ++k) {
            Vector v(n);
            for (int j = 0; j < n; ++j) v[j] = std::cos(2.0 * std::numbers::pi * k * j / n);
            CHECK((D * v - lambda[k] * v).norm() <= 1e-9 * std::max(1.0, std::abs(lambda[k])) * v.norm());
        }
    }
    CHECK(kind_of([] { (void)circulant_eigenvalues(Stencil::fourth_difference(), 3, 1.0); }) == ErrorKind::Shape);
}

TEST_CASE("contour and closed-form coefficients agree where both are accurate", "[etdrk4]") {
    const Vector lambda = (Vector(6) << -50.0, -8.0, -3.0, 2.5, 6.0, -1.2).finished();
    const double dt = 0.5;
    const auto a = phi_coefficients(lambda, dt, PhiBranch::Contour);
    const auto b = phi_coefficients(lambda, dt, PhiBranch::ClosedForm);
    for (int k = 0; k < lambda.size(); ++k) {
        CHECK(a.E[k] == Approx(b.E[k]).epsilon(1e-12));
        CHECK(a.Q[k] == Approx(b.Q[k]).epsilon(1e-9));
        CHECK(a.f1[k] == Approx(b.f1[k]).epsilon(1e-9));
        CHECK(a.f2[k] == Approx(b.f2[k]).epsilon(1e-9));
        CHECK(a.f3[k] == Approx(b.f3[k]).epsilon(1e-9));
    }
}

TEST_CASE("coefficients have the right limits at zero", "[etdrk4]") {
    const double dt = 0.1;
    const auto c = phi_coefficients(Vector::Zero(1), dt);
    CHECK(c.E[0] == Approx(1.0).epsilon(1e-14));
    CHECK(c.E2[0] == Approx(1.0).epsilon(1e-14));
    CHECK(c.Q[0] == Approx(dt / 2.0).epsilon(1e-13));
    CHECK(c.f1[0] == Approx(dt / 6.0).epsilon(1e-13));
    CHECK(c.f2[0] == Approx(dt / 6.0).epsilon(1e-13));
    CHECK(c.f3[0] == Approx(dt / 6.0).epsilon(1e-13));
}

TEST_CASE("ETDRK4 integrates linear problems exactly", "[etdrk4]") {
    const int n = 32;
    const double L = 2.0 * std::numbers::pi;
    SemilinearOperator op;
    op.eigenvalues = circulant_eigenvalues(Stencil::second_difference(), n, L);
    op.nonlinear = [](const Vector& u) -> Vector { return Vector::Zero(u.size()); };
    Vector u0(n);
    for (int j = 0; j < n; ++j) u0[j] = std::cos(2.0 * L * j / n);
    const std::vector<double> times{0.0, 0.5, 2.0};
    const RowMatrix u = etdrk4_solve(op, u0, 0.25, times);
    REQUIRE(u.rows() == 3);
    for (std::size_t j = 0; j < times.size(); ++j) {
        const Vector expected = std::exp(op.eigenvalues[2] * times[j]) * u0;
        CHECK((u.row(static_cast<Eigen::Index>(j)).transpose() - expected).cwiseAbs().maxCoeff() <= 1e-13);
    }
}

TEST_CASE("ETDRK4 converges at fourth order", "[etdrk4]") {
    const int n = 32;
    SemilinearOperator op;
    op.eigenvalues = (0.1 * circulant_eigenvalues(Stencil::second_difference(), n, 2.0 * std::numbers::pi)).array() + 1.0;
    op.nonlinear = [](const Vector& u) -> Vector { return -u.array().cube().matrix(); };
    Vector u0(n);
    for (int j = 0; j < n; ++j) {
        const double x = 2.0 * std::numbers::pi * j / n;
        u0[j] = 0.8 * std::sin(x) + 0.3 * std::cos(3.0 * x);
    }
    const std::vector<double> T{1.0};
    const Vector ref = etdrk4_solve(op, u0, 1.0 / 512.0, T).row(0).transpose();
    double prev = 0.0;
    for (double dt : {0.2, 0.1, 0.05}) {
        const double err = (etdrk4_solve(op, u0, dt, T).row(0).transpose() - ref).cwiseAbs().maxCoeff();
        if (prev > 0.0) CHECK(std::log2(prev / err) >= 3.8);
        prev = err;
    }
}

TEST_CASE("ETDRK4 validates its inputs", "[etdrk4]") {
    SemilinearOperator op;
    op.eigenvalues = Vector::Constant(4, -1.0);
    op.nonlinear = [](const Vector& u) -> Vector { return Vector::Zero(u.size()); };
    const std::vector<double> off_grid{0.35};
    CHECK(kind_of([&] { (void)etdrk4_solve(op, Vector::Ones(4), 0.1, off_grid); }) == ErrorKind::Grid);
    const std::vector<double> ok{0.3};
    CHECK(kind_of([&] { (void)etdrk4_solve(op, Vector::Ones(3), 0.1, ok); }) == ErrorKind::Shape);
    CHECK(kind_of([&] { (void)etdrk4_solve(op, Vector::Ones(4), 0.0, ok); }) == ErrorKind::Domain);
}
