#pragma once

#include "lilan/mlp.hpp"

namespace lilan {

/// Analytic left-invertible embedding l(y) = log(1 + exp(A y)) with
/// l^{-1}(z) = A^+ log(exp(z) - 1).
struct EmbeddingPair {
    Matrix A;      ///< m x n_x, full column rank
    Matrix A_pinv; ///< n_x x m

    /// Computes the pseudo-inverse; rejects m < n_x and rank-deficient A.
    [[nodiscard]] static EmbeddingPair from_matrix(Matrix A);
    /// Random Gaussian A (full rank with probability one).
    [[nodiscard]] static EmbeddingPair random(int state_dim, int latent_dim, std::uint64_t seed);
};

[[nodiscard]] Vector embed(const EmbeddingPair& pair, const Vector& y);
[[nodiscard]] Vector embed_inverse(const EmbeddingPair& pair, const Vector& z);

}  // namespace lilan
