#include "lilan/mlp.hpp"

#include <atomic>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "lilan/binio.hpp"
#include "lilan/rng.hpp"

namespace lilan {

namespace {

std::uint64_t next_net_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

void validate_sizes(std::span<const int> sizes) {
    if (sizes.size() < 2)
        fail(ErrorKind::InvalidArchitecture, "an MLP needs at least an input and an output layer");
    for (int s : sizes)
        if (s < 1) fail(ErrorKind::InvalidArchitecture, "layer sizes must be positive");
}

}  // namespace

std::size_t mlp_parameter_count(std::span<const int> layer_sizes) {
    validate_sizes(layer_sizes);
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k)
        n += static_cast<std::size_t>(layer_sizes[k + 1]) * static_cast<std::size_t>(layer_sizes[k] + 1);
    return n;
}

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)), id_(next_net_id()) {
    params_.assign(mlp_parameter_count(sizes_), 0.0);
    std::size_t off = 0;
    for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
        offsets_.push_back(off);
        off += static_cast<std::size_t>(sizes_[k + 1]) * static_cast<std::size_t>(sizes_[k] + 1);
    }
}

Mlp::Mlp(const Mlp& other)
    : sizes_(other.sizes_), params_(other.params_), offsets_(other.offsets_), id_(next_net_id()) {}

Mlp& Mlp::operator=(const Mlp& other) {
    if (this != &other) {
        sizes_ = other.sizes_;
        params_ = other.params_;
        offsets_ = other.offsets_;
        id_ = next_net_id();
        revision_ = 0;
    }
    return *this;
}

Eigen::Map<const RowMatrix> Mlp::weight(int k) const {
    return {params_.data() + weight_offset(k), sizes_[k + 1], sizes_[k]};
}
Eigen::Map<const Vector> Mlp::bias(int k) const {
    return {params_.data() + bias_offset(k), sizes_[k + 1]};
}
Eigen::Map<RowMatrix> Mlp::weight(int k) {
    ++revision_;
    return {params_.data() + weight_offset(k), sizes_[k + 1], sizes_[k]};
}
Eigen::Map<Vector> Mlp::bias(int k) {
    ++revision_;
    return {params_.data() + bias_offset(k), sizes_[k + 1]};
}

std::span<double> Mlp::parameters() noexcept {
    ++revision_;
    return params_;
}

void Mlp::check_input(const Matrix& x) const {
    if (sizes_.empty()) fail(ErrorKind::InvalidArchitecture, "uninitialized network");
    if (x.rows() != sizes_.front())
        fail(ErrorKind::Shape, "input width " + std::to_string(x.rows()) + " != expected " +
                                   std::to_string(sizes_.front()));
}

Matrix Mlp::forward(const Matrix& x) const {
    check_input(x);
    Matrix a = x;
    const int L = num_affine();
    for (int k = 0; k < L; ++k) {
        // Coefficient-wise product: each column is computed the same way whatever the batch width.
        Matrix z = weight(k).lazyProduct(a);
        z.colwise() += bias(k);
        if (k + 1 < L) z = z.array().tanh();
        a = std::move(z);
    }
    return a;
}

Matrix Mlp::forward(const Matrix& x, GradTape& tape) const {
    check_input(x);
    tape.net_id = id_;
    tape.revision = revision_;
    tape.layer_sizes = sizes_;
    tape.activations.clear();
    tape.activations.reserve(sizes_.size());
    tape.activations.push_back(x);
    const int L = num_affine();
    for (int k = 0; k < L; ++k) {
        Matrix z = weight(k) * tape.activations.back();
        z.colwise() += bias(k);
        if (k + 1 < L) z = z.array().tanh();
        tape.activations.push_back(std::move(z));
    }
    return tape.activations.back();
}

MatrixF Mlp::forward_f32(const MatrixF& x) const {
    if (x.rows() != sizes_.front()) fail(ErrorKind::Shape, "input width mismatch");
    MatrixF a = x;
    const int L = num_affine();
    for (int k = 0; k < L; ++k) {
        MatrixF z = weight(k).cast<float>() * a;
        z.colwise() += bias(k).cast<float>();
        if (k + 1 < L) z = z.array().tanh();
        a = std::move(z);
    }
    return a;
}

MlpGradients Mlp::backward(const GradTape& tape, const Matrix& output_grad, bool want_input_grad) const {
    if (tape.empty() || tape.net_id != id_ || tape.revision != revision_ || tape.layer_sizes != sizes_)
        fail(ErrorKind::TapeMismatch, "tape was not recorded by this network at its current revision");
    const Matrix& out = tape.output();
    if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols())
        fail(ErrorKind::Shape, "output gradient shape does not match the recorded forward pass");

    MlpGradients g;
    g.params.assign(params_.size(), 0.0);
    const int L = num_affine();
    Matrix delta = output_grad;
    for (int k = L - 1; k >= 0; --k) {
        const Matrix& a_prev = tape.activations[static_cast<std::size_t>(k)];
        Eigen::Map<RowMatrix> gw(g.params.data() + weight_offset(k), sizes_[k + 1], sizes_[k]);
        Eigen::Map<Vector> gb(g.params.data() + bias_offset(k), sizes_[k + 1]);
        const RowMatrix w_grad = delta * a_prev.transpose();
        const Vector b_grad = delta.rowwise().sum();
        gw = w_grad;
        gb = b_grad;
        if (k > 0) {
            Matrix back = weight(k).transpose() * delta;
            delta = back.array() * (1.0 - a_prev.array().square());
        } else if (want_input_grad) {
            g.input = weight(0).transpose() * delta;
        }
    }
    return g;
}

Mlp init_mlp(std::vector<int> layer_sizes, std::uint64_t seed) {
    Mlp net(std::move(layer_sizes));
    Rng rng(seed);
    auto params = net.parameters();
    std::size_t off = 0;
    const auto& sizes = net.layer_sizes();
    for (int k = 0; k < net.num_affine(); ++k) {
        const int fan_in = sizes[static_cast<std::size_t>(k)];
        const int fan_out = sizes[static_cast<std::size_t>(k) + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        const auto nw = static_cast<std::size_t>(fan_in) * static_cast<std::size_t>(fan_out);
        for (std::size_t i = 0; i < nw; ++i) params[off + i] = rng.uniform(-limit, limit);
        off += nw + static_cast<std::size_t>(fan_out);
    }
    return net;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        fail(ErrorKind::Shape, "adam_step: parameter, gradient and moment sizes differ");
    const auto& c = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
}

void adam_step(Mlp& net, std::span<const double> grads, AdamState& state) {
    adam_step(net.parameters(), grads, state);
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& stem) {
    binio::Writer w;
    w.bytes("LILN", 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(net.layer_sizes().size()));
    for (int s : net.layer_sizes()) w.u64(static_cast<std::uint64_t>(s));
    w.f64s(net.parameters());
    auto bin = stem;
    bin += ".bin";
    w.write_file(bin);

    nlohmann::json meta = {
        {"format", "LILN"},
        {"version", kCheckpointVersion},
        {"layer_sizes", net.layer_sizes()},
        {"hidden_activation", "tanh"},
        {"output_activation", "identity"},
        {"parameter_count", net.parameter_count()},
        {"layout", "per layer: weights row-major (out x in), then biases; little-endian float64"},
    };
    auto side = stem;
    side += ".json";
    std::ofstream(side) << meta.dump(2) << '\n';
}

Mlp load_checkpoint(const std::filesystem::path& stem) {
    auto bin = stem;
    bin += ".bin";
    auto r = binio::Reader::from_file(bin);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string_view(magic, 4) != "LILN") fail(ErrorKind::CorruptMagic, "not a LILN checkpoint: " + bin.string());
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        fail(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) + " unsupported");
    const auto nlayers = r.u32();
    if (nlayers < 2 || nlayers > 1024) fail(ErrorKind::ShapeInconsistency, "implausible layer count");
    std::vector<int> sizes;
    for (std::uint32_t i = 0; i < nlayers; ++i) {
        const auto s = r.u64();
        if (s == 0 || s > (1u << 24)) fail(ErrorKind::ShapeInconsistency, "implausible layer size");
        sizes.push_back(static_cast<int>(s));
    }
    Mlp net(sizes);
    if (r.remaining() != net.parameter_count() * sizeof(double))
        fail(ErrorKind::CorruptPayload, "checkpoint payload size does not match its layer sizes");
    r.f64s(net.parameters());
    return net;
}

}  // namespace lilan
