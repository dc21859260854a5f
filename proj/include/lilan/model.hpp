#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lilan/mlp.hpp"
#include "lilan/transforms.hpp"

namespace lilan {

enum class Variant { Full, Independent, CommonEncoder, CommonDecoder };
enum class Conservation { None, SoftmaxScaled };

[[nodiscard]] std::string to_string(Variant v);
[[nodiscard]] Variant variant_from_string(const std::string& s);
[[nodiscard]] std::string to_string(Conservation c);
[[nodiscard]] Conservation conservation_from_string(const std::string& s);

/// Network shapes and composition rules of a LiLaN surrogate.
///
/// `group_latent_dim` is the latent width of one (e, c, tau) triple. Variants with one
/// triple per state component (Independent, CommonDecoder) therefore have a total latent
/// dimension of state_dim * group_latent_dim.
struct Architecture {
    Variant variant = Variant::Full;
    int state_dim = 1;
    int param_dim = 0;
    InputLayout layout = InputLayout::Params;
    int group_latent_dim = 1;
    std::vector<int> encoder_hidden{20};
    std::vector<int> tau_hidden{20};
    std::vector<int> decoder_hidden{20, 20};
    bool use_tau = true;
    Conservation conservation = Conservation::None;
    /// Sum the conserved components must add up to; when unset it is Σ x0 per sample.
    std::optional<double> conservation_constant;

    [[nodiscard]] int groups() const;
    [[nodiscard]] int total_latent_dim() const;
    [[nodiscard]] int encoder_input_dim() const;
    [[nodiscard]] int decoders() const;
    [[nodiscard]] std::vector<int> encoder_sizes() const;
    [[nodiscard]] std::vector<int> tau_sizes() const;
    [[nodiscard]] std::vector<int> decoder_sizes() const;
    void validate() const;

    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static Architecture from_json(const nlohmann::json& j);
};

/// One latent block: y = e(u) + tau(t, u) ∘ c(u), with tau(t, u) = MLP([t; u]) + a ∘ t.
struct LatentGroup {
    Mlp e;
    Mlp c;
    Mlp tau;
    Vector tau_linear;
};

/// How latent time is produced during a forward pass.
enum class TimeMode {
    Learned,    ///< the tau networks
    Broadcast,  ///< the rescaled time itself on every channel (no-tau ablation)
};

/// Intermediate values of a batched forward pass, needed by backward().
struct ForwardCache {
    /// Record gradient tapes; off for inference, which then runs column-independent kernels.
    bool record = true;
    Eigen::Index batch = 0;
    Eigen::Index steps = 0;
    TimeMode mode = TimeMode::Learned;
    Vector times;
    Vector constants;
    std::vector<GradTape> e_tapes, c_tapes, tau_tapes, dec_tapes;
    std::vector<Matrix> enc_e, enc_c, latent_time;
    /// Raw decoder output, state_dim x (batch * steps); column b * steps + j.
    Matrix decoded;
    /// Softmax of `decoded` when conservation is on.
    Matrix softmax;
};

/// Gradient blocks aligned with LiLaNModel::parameter_blocks().
using ParameterGrads = std::vector<std::vector<double>>;

class LiLaNModel {
public:
    LiLaNModel() = default;
    /// Glorot-initialized networks; tau_linear starts at 1.
    LiLaNModel(Architecture arch, std::uint64_t seed);
    /// All-zero networks and tau_linear; useful for hand-built models.
    [[nodiscard]] static LiLaNModel zeros(Architecture arch);

    [[nodiscard]] const Architecture& architecture() const noexcept { return arch_; }
    [[nodiscard]] const TransformSpec& transforms() const noexcept { return transforms_; }
    void set_transforms(TransformSpec t) { transforms_ = std::move(t); }

    [[nodiscard]] std::vector<LatentGroup>& groups() noexcept { return groups_; }
    [[nodiscard]] const std::vector<LatentGroup>& groups() const noexcept { return groups_; }
    [[nodiscard]] std::vector<Mlp>& decoders() noexcept { return decoders_; }
    [[nodiscard]] const std::vector<Mlp>& decoders() const noexcept { return decoders_; }

    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] std::vector<std::span<double>> parameter_blocks();
    [[nodiscard]] std::vector<std::span<const double>> parameter_blocks() const;

    /// Network-domain forward pass.
    ///
    /// `enc_input` holds transformed encoder inputs (encoder_input_dim x B), `times` the
    /// transformed times shared by every sample and `constants` the conservation constant per
    /// sample (ignored without conservation). Returns the decoder output in the loss domain
    /// (transformed states), state_dim x (B * T), sample-major.
    Matrix forward(const Matrix& enc_input, const Vector& times, const Vector& constants,
                   ForwardCache* cache = nullptr, TimeMode mode = TimeMode::Learned) const;
    /// Gradient of <grad_out, forward(...)> for every parameter block.
    [[nodiscard]] ParameterGrads backward(const ForwardCache& cache, const Matrix& grad_out) const;

    /// Physical-domain prediction from a raw decoder block produced by forward(cache).
    [[nodiscard]] Matrix physical_from_cache(const ForwardCache& cache) const;

    /// Physical-domain state at one physical time.
    [[nodiscard]] Vector predict(const Vector& x0, const Vector& p, double t) const;
    /// As predict(), with latent time replaced by the rescaled time on every channel.
    [[nodiscard]] Vector predict_no_tau(const Vector& x0, const Vector& p, double t) const;

    /// Physical trajectories for many inputs on a shared time grid. Rows of x0 / params are
    /// samples; the result is (N * T) x state_dim with row i * T + j.
    [[nodiscard]] RowMatrix predict_trajectories(const RowMatrix& x0, const RowMatrix& params,
                                                 std::span<const double> times) const;
    /// Single-precision inference of the same computation (speed benchmark path).
    [[nodiscard]] Eigen::MatrixXf predict_trajectories_f32(const RowMatrix& x0, const RowMatrix& params,
                                                           std::span<const double> times) const;

    /// Transformed encoder inputs and conservation constants for a set of raw samples.
    void prepare_inputs(const RowMatrix& x0, const RowMatrix& params, Matrix& enc_input, Vector& constants) const;

    void save(const std::filesystem::path& dir) const;
    [[nodiscard]] static LiLaNModel load(const std::filesystem::path& dir);

private:
    Matrix decode(const std::vector<Matrix>& latent, ForwardCache* cache) const;
    [[nodiscard]] Vector predict_single(const Vector& x0, const Vector& p, double t, TimeMode mode) const;

    Architecture arch_;
    TransformSpec transforms_;
    std::vector<LatentGroup> groups_;
    std::vector<Mlp> decoders_;
};

/// e + tau ∘ c.
[[nodiscard]] Vector latent_solution(const Vector& e, const Vector& c, const Vector& tau);

/// Builds the LiLaN model that reproduces the one-hidden-layer network
/// W1 tanh(W [t; x0; p] + b) + c1 with linear e, constant c = 1, tau = W_t t and
/// d(y) = W1 tanh(y) + c1. Transforms are identities.
[[nodiscard]] LiLaNModel build_direct_equivalent(const Matrix& W1, const Matrix& W, const Vector& b,
                                                 const Vector& c1, const std::string& activation = "tanh");

}  // namespace lilan
