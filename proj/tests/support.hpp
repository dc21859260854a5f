#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "lilan/mlp.hpp"
#include "lilan/rng.hpp"

namespace lilan::test {

inline Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

inline Vector random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
    return random_matrix(rng, n, 1, scale);
}

/// Offsets with magnitude in [scale/4, scale], so |a - b| terms stay away from their kink.
inline Matrix offsets(Rng& rng, Eigen::Index r, Eigen::Index c, double scale) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = (rng.uniform() < 0.5 ? -scale : scale) * rng.uniform(0.25, 1.0);
    return m;
}

/// Central differences of f with respect to every entry of x (x is restored afterwards).
inline std::vector<double> central_differences(std::span<double> x, const std::function<double()>& f,
                                               double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double fp = f();
        x[i] = keep - h;
        const double fm = f();
        x[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// max |a - b| / max |b|.
inline double max_rel_error(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return den > 0.0 ? num / den : num;
}

}  // namespace lilan::test
