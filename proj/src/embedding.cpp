#include "lilan/embedding.hpp"

#include <cmath>

#include "lilan/rng.hpp"

namespace lilan {

EmbeddingPair EmbeddingPair::from_matrix(Matrix A) {
    if (A.rows() < A.cols())
        fail(ErrorKind::Shape, "embedding needs m >= n_x (got " + std::to_string(A.rows()) + " x " +
                                   std::to_string(A.cols()) + ")");
    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    if (qr.rank() < A.cols()) fail(ErrorKind::Domain, "embedding matrix columns are linearly dependent");
    EmbeddingPair pair;
    pair.A_pinv = qr.solve(Matrix::Identity(A.rows(), A.rows()));
    pair.A = std::move(A);
    return pair;
}

EmbeddingPair EmbeddingPair::random(int state_dim, int latent_dim, std::uint64_t seed) {
    Rng rng(seed);
    Matrix A(latent_dim, state_dim);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.normal();
    return from_matrix(std::move(A));
}

namespace {
// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
// log(e^z - 1) for z > 0.
double softplus_inverse(double z) { return z > 30.0 ? z + std::log1p(-std::exp(-z)) : std::log(std::expm1(z)); }
}  // namespace

Vector embed(const EmbeddingPair& pair, const Vector& y) {
    if (y.size() != pair.A.cols()) fail(ErrorKind::Shape, "embed: input width mismatch");
    return (pair.A * y).unaryExpr(&softplus);
}

Vector embed_inverse(const EmbeddingPair& pair, const Vector& z) {
    if (z.size() != pair.A.rows()) fail(ErrorKind::Shape, "embed_inverse: input width mismatch");
    Vector w(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (!(z[i] > 0.0))
            fail(ErrorKind::Domain, "embed_inverse: component " + std::to_string(i) + " is not positive");
        w[i] = softplus_inverse(z[i]);
    }
    return pair.A_pinv * w;
}

}  // namespace lilan
