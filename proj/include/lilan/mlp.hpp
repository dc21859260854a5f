#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lilan/error.hpp"

namespace lilan {

/// Batches are stored feature-major: one column per sample.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Eigen::MatrixXf;
/// Heap storage aligned to EIGEN_MAX_ALIGN_BYTES.
using AlignedDoubles = std::vector<double, Eigen::aligned_allocator<double>>;

class Mlp;

/// Activations cached by one forward pass; consumed by Mlp::backward.
struct GradTape {
    std::uint64_t net_id = 0;
    std::uint64_t revision = 0;
    std::vector<int> layer_sizes;
    /// activations[0] is the input batch, activations[k] the output of affine map k
    /// (after tanh for hidden layers, identity for the last one).
    std::vector<Matrix> activations;

    [[nodiscard]] bool empty() const noexcept { return activations.empty(); }
    [[nodiscard]] const Matrix& output() const { return activations.back(); }
};

struct MlpGradients {
    /// Same flat layout as Mlp::parameters().
    std::vector<double> params;
    /// d<output_grad, f(x)>/dx, empty unless requested.
    Matrix input;
};

/// Dense tanh network with an identity output layer.
///
/// Parameters live in one flat buffer, layer by layer: the weight matrix of layer k
/// (row-major, out x in) followed by its bias. The same order is used by the
/// checkpoint format and by the optimizer.
class Mlp {
public:
    Mlp() = default;
    /// Zero-initialized network.
    explicit Mlp(std::vector<int> layer_sizes);

    Mlp(const Mlp& other);
    Mlp& operator=(const Mlp& other);
    Mlp(Mlp&&) noexcept = default;
    Mlp& operator=(Mlp&&) noexcept = default;

    [[nodiscard]] const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
    [[nodiscard]] int num_affine() const noexcept { return static_cast<int>(sizes_.size()) - 1; }
    [[nodiscard]] int input_dim() const { return sizes_.front(); }
    [[nodiscard]] int output_dim() const { return sizes_.back(); }
    [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }

    [[nodiscard]] Eigen::Map<const RowMatrix> weight(int k) const;
    [[nodiscard]] Eigen::Map<const Vector> bias(int k) const;
    [[nodiscard]] Eigen::Map<RowMatrix> weight(int k);
    [[nodiscard]] Eigen::Map<Vector> bias(int k);

    [[nodiscard]] std::span<const double> parameters() const noexcept { return params_; }
    /// Mutable view; invalidates every tape recorded before the call.
    [[nodiscard]] std::span<double> parameters() noexcept;

    /// Inference pass; each output column depends only on its input column, bit for bit.
    [[nodiscard]] Matrix forward(const Matrix& x) const;
    Matrix forward(const Matrix& x, GradTape& tape) const;
    [[nodiscard]] MatrixF forward_f32(const MatrixF& x) const;

    /// Reverse pass for the scalar <output_grad, forward(x)>.
    [[nodiscard]] MlpGradients backward(const GradTape& tape, const Matrix& output_grad,
                                        bool want_input_grad = true) const;

    [[nodiscard]] std::uint64_t id() const noexcept { return id_; }
    [[nodiscard]] std::uint64_t revision() const noexcept { return revision_; }

private:
    void check_input(const Matrix& x) const;
    std::size_t weight_offset(int k) const { return offsets_[static_cast<std::size_t>(k)]; }
    std::size_t bias_offset(int k) const {
        return offsets_[static_cast<std::size_t>(k)] +
               static_cast<std::size_t>(sizes_[k + 1]) * static_cast<std::size_t>(sizes_[k]);
    }

    std::vector<int> sizes_;
    AlignedDoubles params_;
    std::vector<std::size_t> offsets_;
    std::uint64_t id_ = 0;
    std::uint64_t revision_ = 0;
};

/// Σ sizes[k+1] * (sizes[k] + 1).
[[nodiscard]] std::size_t mlp_parameter_count(std::span<const int> layer_sizes);

/// Glorot-uniform weights, zero biases; deterministic in the seed.
[[nodiscard]] Mlp init_mlp(std::vector<int> layer_sizes, std::uint64_t seed);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment buffers for one flat parameter vector.
struct AdamState {
    AdamConfig config;
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    AdamState() = default;
    AdamState(std::size_t n, AdamConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

/// In-place Adam update with bias correction.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);
void adam_step(Mlp& net, std::span<const double> grads, AdamState& state);

/// Writes `<stem>.bin` (magic "LILN") and `<stem>.json` architecture sidecar.
void save_checkpoint(const Mlp& net, const std::filesystem::path& stem);
[[nodiscard]] Mlp load_checkpoint(const std::filesystem::path& stem);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace lilan
