#include "lilan/model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "lilan/rng.hpp"

namespace lilan {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::Independent: return "independent";
        case Variant::CommonEncoder: return "common_encoder";
        case Variant::CommonDecoder: return "common_decoder";
    }
    return "full";
}

Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::Full;
    if (s == "independent") return Variant::Independent;
    if (s == "common_encoder") return Variant::CommonEncoder;
    if (s == "common_decoder") return Variant::CommonDecoder;
    fail(ErrorKind::UnknownName, "unknown variant '" + s + "'");
}

std::string to_string(Conservation c) { return c == Conservation::None ? "none" : "softmax_scaled"; }

Conservation conservation_from_string(const std::string& s) {
    if (s == "none") return Conservation::None;
    if (s == "softmax_scaled") return Conservation::SoftmaxScaled;
    fail(ErrorKind::UnknownName, "unknown conservation mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Architecture

int Architecture::groups() const {
    return (variant == Variant::Independent || variant == Variant::CommonDecoder) ? state_dim : 1;
}

int Architecture::total_latent_dim() const { return groups() * group_latent_dim; }

int Architecture::encoder_input_dim() const { return lilan::encoder_input_dim(layout, state_dim, param_dim); }

int Architecture::decoders() const {
    return (variant == Variant::Independent || variant == Variant::CommonEncoder) ? state_dim : 1;
}

std::vector<int> Architecture::encoder_sizes() const {
    std::vector<int> s{encoder_input_dim()};
    s.insert(s.end(), encoder_hidden.begin(), encoder_hidden.end());
    s.push_back(group_latent_dim);
    return s;
}

std::vector<int> Architecture::tau_sizes() const {
    std::vector<int> s{encoder_input_dim() + 1};
    s.insert(s.end(), tau_hidden.begin(), tau_hidden.end());
    s.push_back(group_latent_dim);
    return s;
}

std::vector<int> Architecture::decoder_sizes() const {
    std::vector<int> s{group_latent_dim};
    s.insert(s.end(), decoder_hidden.begin(), decoder_hidden.end());
    s.push_back(variant == Variant::Full ? state_dim : 1);
    return s;
}

void Architecture::validate() const {
    require(state_dim >= 1, ErrorKind::InvalidArchitecture, "state_dim must be positive");
    require(param_dim >= 0, ErrorKind::InvalidArchitecture, "param_dim must be non-negative");
    require(group_latent_dim >= 1, ErrorKind::InvalidArchitecture, "latent dimension must be positive");
    require(encoder_input_dim() >= 1, ErrorKind::InvalidArchitecture,
            "input layout '" + to_string(layout) + "' leaves the encoders without inputs");
    for (const auto* hidden : {&encoder_hidden, &tau_hidden, &decoder_hidden})
        for (int h : *hidden) require(h >= 1, ErrorKind::InvalidArchitecture, "hidden widths must be positive");
    if (conservation == Conservation::SoftmaxScaled)
        require(state_dim >= 2, ErrorKind::InvalidArchitecture, "softmax conservation needs at least two components");
}

nlohmann::json Architecture::to_json() const {
    nlohmann::json j = {
        {"variant", to_string(variant)},
        {"state_dim", state_dim},
        {"param_dim", param_dim},
        {"input_layout", to_string(layout)},
        {"group_latent_dim", group_latent_dim},
        {"total_latent_dim", total_latent_dim()},
        {"encoder_hidden", encoder_hidden},
        {"tau_hidden", tau_hidden},
        {"decoder_hidden", decoder_hidden},
        {"use_tau", use_tau},
        {"conservation", to_string(conservation)},
    };
    j["conservation_constant"] = conservation_constant ? nlohmann::json(*conservation_constant) : nlohmann::json();
    return j;
}

Architecture Architecture::from_json(const nlohmann::json& j) {
    Architecture a;
    a.variant = variant_from_string(j.at("variant").get<std::string>());
    a.state_dim = j.at("state_dim").get<int>();
    a.param_dim = j.at("param_dim").get<int>();
    a.layout = input_layout_from_string(j.at("input_layout").get<std::string>());
    a.group_latent_dim = j.at("group_latent_dim").get<int>();
    a.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    a.tau_hidden = j.at("tau_hidden").get<std::vector<int>>();
    a.decoder_hidden = j.at("decoder_hidden").get<std::vector<int>>();
    a.use_tau = j.at("use_tau").get<bool>();
    a.conservation = conservation_from_string(j.at("conservation").get<std::string>());
    if (j.contains("conservation_constant") && !j["conservation_constant"].is_null())
        a.conservation_constant = j["conservation_constant"].get<double>();
    a.validate();
    return a;
}

// ---------------------------------------------------------------------------
// Construction

LiLaNModel::LiLaNModel(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
    arch_.validate();
    std::uint64_t stream = 0;
    for (int g = 0; g < arch_.groups(); ++g) {
        LatentGroup lg;
        lg.e = init_mlp(arch_.encoder_sizes(), derive_seed(seed, stream++));
        lg.c = init_mlp(arch_.encoder_sizes(), derive_seed(seed, stream++));
        if (arch_.use_tau) {
            lg.tau = init_mlp(arch_.tau_sizes(), derive_seed(seed, stream++));
            lg.tau_linear = Vector::Ones(arch_.group_latent_dim);
        }
        groups_.push_back(std::move(lg));
    }
    for (int d = 0; d < arch_.decoders(); ++d)
        decoders_.push_back(init_mlp(arch_.decoder_sizes(), derive_seed(seed, 1000 + static_cast<std::uint64_t>(d))));
}

LiLaNModel LiLaNModel::zeros(Architecture arch) {
    arch.validate();
    LiLaNModel m;
    m.arch_ = std::move(arch);
    for (int g = 0; g < m.arch_.groups(); ++g) {
        LatentGroup lg{Mlp(m.arch_.encoder_sizes()), Mlp(m.arch_.encoder_sizes()), Mlp(), Vector()};
        if (m.arch_.use_tau) {
            lg.tau = Mlp(m.arch_.tau_sizes());
            lg.tau_linear = Vector::Zero(m.arch_.group_latent_dim);
        }
        m.groups_.push_back(std::move(lg));
    }
    for (int d = 0; d < m.arch_.decoders(); ++d) m.decoders_.emplace_back(m.arch_.decoder_sizes());
    return m;
}

std::size_t LiLaNModel::parameter_count() const {
    std::size_t n = 0;
    for (auto b : parameter_blocks()) n += b.size();
    return n;
}

std::vector<std::span<double>> LiLaNModel::parameter_blocks() {
    std::vector<std::span<double>> out;
    for (auto& g : groups_) {
        out.push_back(g.e.parameters());
        out.push_back(g.c.parameters());
        if (arch_.use_tau) {
            out.push_back(g.tau.parameters());
            out.emplace_back(g.tau_linear.data(), static_cast<std::size_t>(g.tau_linear.size()));
        }
    }
    for (auto& d : decoders_) out.push_back(d.parameters());
    return out;
}

std::vector<std::span<const double>> LiLaNModel::parameter_blocks() const {
    std::vector<std::span<const double>> out;
    for (const auto& g : groups_) {
        out.push_back(g.e.parameters());
        out.push_back(g.c.parameters());
        if (arch_.use_tau) {
            out.push_back(g.tau.parameters());
            out.emplace_back(g.tau_linear.data(), static_cast<std::size_t>(g.tau_linear.size()));
        }
    }
    for (const auto& d : decoders_) out.push_back(d.parameters());
    return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

/// Column b of `per_sample` repeated `steps` times.
Matrix repeat_columns(const Matrix& per_sample, Eigen::Index steps) {
    Matrix out(per_sample.rows(), per_sample.cols() * steps);
    for (Eigen::Index b = 0; b < per_sample.cols(); ++b)
        out.middleCols(b * steps, steps) = per_sample.col(b).replicate(1, steps);
    return out;
}

/// Sum over each sample's block of `steps` columns.
Matrix sum_blocks(const Matrix& m, Eigen::Index steps) {
    const Eigen::Index batch = m.cols() / steps;
    Matrix out(m.rows(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) out.col(b) = m.middleCols(b * steps, steps).rowwise().sum();
    return out;
}

/// Time row tiled across samples: 1 x (batch * steps).
Eigen::RowVectorXd tiled_times(const Vector& times, Eigen::Index batch) {
    return times.transpose().replicate(1, batch);
}

}  // namespace

Matrix LiLaNModel::forward(const Matrix& enc_input, const Vector& times, const Vector& constants,
                           ForwardCache* cache, TimeMode mode) const {
    const int du = arch_.encoder_input_dim();
    if (enc_input.rows() != du)
        fail(ErrorKind::Shape, "encoder input has " + std::to_string(enc_input.rows()) + " rows, expected " +
                                   std::to_string(du));
    const Eigen::Index B = enc_input.cols();
    const Eigen::Index T = times.size();
    if (arch_.conservation == Conservation::SoftmaxScaled && constants.size() != B)
        fail(ErrorKind::Shape, "one conservation constant per sample is required");
    if (!arch_.use_tau) mode = TimeMode::Broadcast;

    const int G = arch_.groups();
    const bool tape = cache && cache->record;
    if (cache) {
        cache->batch = B;
        cache->steps = T;
        cache->mode = mode;
        cache->times = times;
        cache->constants = constants;
        cache->e_tapes.assign(static_cast<std::size_t>(G), {});
        cache->c_tapes.assign(static_cast<std::size_t>(G), {});
        cache->tau_tapes.assign(static_cast<std::size_t>(G), {});
        cache->enc_e.assign(static_cast<std::size_t>(G), {});
        cache->enc_c.assign(static_cast<std::size_t>(G), {});
        cache->latent_time.assign(static_cast<std::size_t>(G), {});
    }

    const Eigen::RowVectorXd trow = tiled_times(times, B);
    Matrix tau_in;
    if (mode == TimeMode::Learned) {
        tau_in.resize(du + 1, B * T);
        tau_in.row(0) = trow;
        tau_in.bottomRows(du) = repeat_columns(enc_input, T);
    }

    std::vector<Matrix> latent(static_cast<std::size_t>(G));
    for (int g = 0; g < G; ++g) {
        const auto gi = static_cast<std::size_t>(g);
        const LatentGroup& lg = groups_[gi];
        Matrix E = tape ? lg.e.forward(enc_input, cache->e_tapes[gi]) : lg.e.forward(enc_input);
        Matrix C = tape ? lg.c.forward(enc_input, cache->c_tapes[gi]) : lg.c.forward(enc_input);
        Matrix tau;
        if (mode == TimeMode::Learned) {
            tau = tape ? lg.tau.forward(tau_in, cache->tau_tapes[gi]) : lg.tau.forward(tau_in);
            tau.noalias() += lg.tau_linear * trow;
        } else {
            tau = Vector::Ones(arch_.group_latent_dim) * trow;
        }
        Matrix y(arch_.group_latent_dim, B * T);
        for (Eigen::Index b = 0; b < B; ++b) {
            auto blk = y.middleCols(b * T, T);
            blk = tau.middleCols(b * T, T).array().colwise() * C.col(b).array();
            blk.colwise() += E.col(b);
        }
        latent[gi] = std::move(y);
        if (cache) {
            cache->enc_e[gi] = std::move(E);
            cache->enc_c[gi] = std::move(C);
            cache->latent_time[gi] = std::move(tau);
        }
    }

    Matrix z = decode(latent, cache);
    if (arch_.conservation == Conservation::None) return z;

    // Softmax onto the simplex scaled by the conservation constant, then the state transform.
    const Eigen::Index n = z.rows();
    Matrix out(n, z.cols());
    Matrix soft(n, z.cols());
    const auto& tf = transforms_;
    const bool logged = !tf.fitted() || tf.options().state_log10;
    for (Eigen::Index col = 0; col < z.cols(); ++col) {
        const double zmax = z.col(col).maxCoeff();
        const Vector shifted = z.col(col).array() - zmax;
        const double lse = std::log(shifted.array().exp().sum());
        const Vector log_s = shifted.array() - lse;
        soft.col(col) = log_s.array().exp();
        const double K = constants[col / T];
        for (Eigen::Index k = 0; k < n; ++k) {
            const int kk = static_cast<int>(k);
            const double scale = tf.fitted() ? tf.state_scale(kk) : 1.0;
            const double shift = tf.fitted() ? tf.state_shift(kk) : 0.0;
            const double y = logged ? (log_s[k] + std::log(K)) / std::numbers::ln10 : K * soft(k, col);
            out(k, col) = scale * y + shift;
        }
    }
    if (cache) cache->softmax = std::move(soft);
    return out;
}

Matrix LiLaNModel::decode(const std::vector<Matrix>& latent, ForwardCache* cache) const {
    const Eigen::Index cols = latent.front().cols();
    const int n = arch_.state_dim;
    Matrix z(n, cols);
    const bool tape = cache && cache->record;
    if (cache) cache->dec_tapes.assign(decoders_.size(), {});
    auto run = [&](std::size_t d, const Matrix& in) {
        return tape ? decoders_[d].forward(in, cache->dec_tapes[d]) : decoders_[d].forward(in);
    };
    switch (arch_.variant) {
        case Variant::Full:
            z = run(0, latent[0]);
            break;
        case Variant::Independent:
            for (int i = 0; i < n; ++i) z.row(i) = run(static_cast<std::size_t>(i), latent[static_cast<std::size_t>(i)]);
            break;
        case Variant::CommonEncoder:
            for (int i = 0; i < n; ++i) z.row(i) = run(static_cast<std::size_t>(i), latent[0]);
            break;
        case Variant::CommonDecoder: {
            Matrix stacked(arch_.group_latent_dim, cols * n);
            for (int i = 0; i < n; ++i) stacked.middleCols(i * cols, cols) = latent[static_cast<std::size_t>(i)];
            const Matrix out = run(0, stacked);
            for (int i = 0; i < n; ++i) z.row(i) = out.middleCols(i * cols, cols);
            break;
        }
    }
    if (cache) cache->decoded = z;
    return z;
}

ParameterGrads LiLaNModel::backward(const ForwardCache& cache, const Matrix& grad_out) const {
    const Eigen::Index B = cache.batch;
    const Eigen::Index T = cache.steps;
    const Eigen::Index cols = B * T;
    const int n = arch_.state_dim;
    if (grad_out.rows() != n || grad_out.cols() != cols)
        fail(ErrorKind::Shape, "output gradient does not match the cached forward pass");
    if (cache.e_tapes.size() != groups_.size() || cache.dec_tapes.size() != decoders_.size())
        fail(ErrorKind::TapeMismatch, "forward cache was produced by a different model");

    // Through the conservation stage.
    Matrix gz = grad_out;
    if (arch_.conservation == Conservation::SoftmaxScaled) {
        const auto& tf = transforms_;
        const bool logged = !tf.fitted() || tf.options().state_log10;
        for (Eigen::Index col = 0; col < cols; ++col) {
            const double K = cache.constants[col / T];
            Vector gp(n);
            for (int k = 0; k < n; ++k) {
                const double scale = tf.fitted() ? tf.state_scale(k) : 1.0;
                gp[k] = grad_out(k, col) * scale * (logged ? 1.0 / std::numbers::ln10 : K);
            }
            const auto s = cache.softmax.col(col);
            if (logged) {
                gz.col(col) = gp - s * gp.sum();
            } else {
                const double sg = s.dot(gp);
                gz.col(col) = s.array() * (gp.array() - sg);
            }
        }
    }

    ParameterGrads dec_grads(decoders_.size());
    std::vector<Matrix> dlatent(groups_.size());
    switch (arch_.variant) {
        case Variant::Full: {
            auto g = decoders_[0].backward(cache.dec_tapes[0], gz);
            dec_grads[0] = std::move(g.params);
            dlatent[0] = std::move(g.input);
            break;
        }
        case Variant::Independent:
            for (int i = 0; i < n; ++i) {
                const auto ii = static_cast<std::size_t>(i);
                auto g = decoders_[ii].backward(cache.dec_tapes[ii], gz.row(i));
                dec_grads[ii] = std::move(g.params);
                dlatent[ii] = std::move(g.input);
            }
            break;
        case Variant::CommonEncoder:
            dlatent[0] = Matrix::Zero(arch_.group_latent_dim, cols);
            for (int i = 0; i < n; ++i) {
                const auto ii = static_cast<std::size_t>(i);
                auto g = decoders_[ii].backward(cache.dec_tapes[ii], gz.row(i));
                dec_grads[ii] = std::move(g.params);
                dlatent[0] += g.input;
            }
            break;
        case Variant::CommonDecoder: {
            Matrix gstack(1, cols * n);
            for (int i = 0; i < n; ++i) gstack.middleCols(i * cols, cols) = gz.row(i);
            auto g = decoders_[0].backward(cache.dec_tapes[0], gstack);
            dec_grads[0] = std::move(g.params);
            for (int i = 0; i < n; ++i) dlatent[static_cast<std::size_t>(i)] = g.input.middleCols(i * cols, cols);
            break;
        }
    }

    ParameterGrads out;
    const bool learned = cache.mode == TimeMode::Learned;
    const Eigen::RowVectorXd trow = tiled_times(cache.times, B);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        const LatentGroup& lg = groups_[g];
        const Matrix& dy = dlatent[g];
        const Matrix& C = cache.enc_c[g];
        const Matrix& tau = cache.latent_time[g];

        const Matrix dE = sum_blocks(dy, T);
        const Matrix dC = sum_blocks(dy.cwiseProduct(tau), T);
        out.push_back(lg.e.backward(cache.e_tapes[g], dE, false).params);
        out.push_back(lg.c.backward(cache.c_tapes[g], dC, false).params);
        if (arch_.use_tau) {
            if (learned) {
                Matrix dtau(dy.rows(), cols);
                for (Eigen::Index b = 0; b < B; ++b)
                    dtau.middleCols(b * T, T) = dy.middleCols(b * T, T).array().colwise() * C.col(b).array();
                out.push_back(lg.tau.backward(cache.tau_tapes[g], dtau, false).params);
                const Vector dlin = dtau * trow.transpose();
                out.emplace_back(dlin.data(), dlin.data() + dlin.size());
            } else {
                out.emplace_back(lg.tau.parameter_count(), 0.0);
                out.emplace_back(static_cast<std::size_t>(lg.tau_linear.size()), 0.0);
            }
        }
    }
    for (auto& d : dec_grads) out.push_back(std::move(d));
    return out;
}

Matrix LiLaNModel::physical_from_cache(const ForwardCache& cache) const {
    if (arch_.conservation == Conservation::SoftmaxScaled) {
        Matrix x = cache.softmax;
        for (Eigen::Index col = 0; col < x.cols(); ++col) x.col(col) *= cache.constants[col / cache.steps];
        return x;
    }
    Matrix x = cache.decoded;
    transforms_.invert_state_inplace(x);
    return x;
}

// ---------------------------------------------------------------------------
// Physical-domain API

void LiLaNModel::prepare_inputs(const RowMatrix& x0, const RowMatrix& params, Matrix& enc_input,
                                Vector& constants) const {
    if (!transforms_.fitted()) fail(ErrorKind::State, "model transforms are not fitted");
    const Eigen::Index N = x0.rows();
    if (x0.cols() != arch_.state_dim) fail(ErrorKind::Shape, "x0 width does not match the state dimension");
    if (params.rows() != N && !(arch_.param_dim == 0 && params.size() == 0))
        fail(ErrorKind::Shape, "x0 and parameter sample counts differ");
    if (arch_.param_dim > 0 && params.cols() != arch_.param_dim)
        fail(ErrorKind::Shape, "parameter width does not match param_dim");
    enc_input.resize(arch_.encoder_input_dim(), N);
    constants.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const Vector xi = x0.row(i).transpose();
        const Vector pi = arch_.param_dim > 0 ? Vector(params.row(i).transpose()) : Vector();
        enc_input.col(i) = transforms_.apply_input(encoder_input_raw(arch_.layout, xi, pi));
        constants[i] = arch_.conservation_constant ? *arch_.conservation_constant : xi.sum();
    }
}

Vector LiLaNModel::predict_single(const Vector& x0, const Vector& p, double t, TimeMode mode) const {
    if (x0.size() != arch_.state_dim) fail(ErrorKind::Shape, "x0 width does not match the state dimension");
    if (p.size() != arch_.param_dim) fail(ErrorKind::Shape, "p width does not match param_dim");
    RowMatrix X0 = x0.transpose();
    RowMatrix P = p.transpose();
    Matrix u;
    Vector k;
    prepare_inputs(X0, P, u, k);
    Vector ts(1);
    ts[0] = transforms_.apply_time(t);
    ForwardCache cache;
    cache.record = false;
    forward(u, ts, k, &cache, mode);
    return physical_from_cache(cache).col(0);
}

Vector LiLaNModel::predict(const Vector& x0, const Vector& p, double t) const {
    return predict_single(x0, p, t, TimeMode::Learned);
}

Vector LiLaNModel::predict_no_tau(const Vector& x0, const Vector& p, double t) const {
    return predict_single(x0, p, t, TimeMode::Broadcast);
}

RowMatrix LiLaNModel::predict_trajectories(const RowMatrix& x0, const RowMatrix& params,
                                           std::span<const double> times) const {
    Matrix u;
    Vector k;
    prepare_inputs(x0, params, u, k);
    const auto T = static_cast<Eigen::Index>(times.size());
    Vector ts(T);
    for (Eigen::Index j = 0; j < T; ++j) ts[j] = transforms_.apply_time(times[static_cast<std::size_t>(j)]);

    const Eigen::Index N = u.cols();
    RowMatrix out(N * T, arch_.state_dim);
    constexpr Eigen::Index chunk = 256;
    for (Eigen::Index start = 0; start < N; start += chunk) {
        const Eigen::Index len = std::min(chunk, N - start);
        ForwardCache cache;
        cache.record = false;
        forward(u.middleCols(start, len), ts, k.segment(start, len), &cache);
        out.middleRows(start * T, len * T) = physical_from_cache(cache).transpose();
    }
    return out;
}

Eigen::MatrixXf LiLaNModel::predict_trajectories_f32(const RowMatrix& x0, const RowMatrix& params,
                                                     std::span<const double> times) const {
    Matrix u;
    Vector k;
    prepare_inputs(x0, params, u, k);
    const auto T = static_cast<Eigen::Index>(times.size());
    Eigen::RowVectorXf ts(T);
    for (Eigen::Index j = 0; j < T; ++j)
        ts[j] = static_cast<float>(transforms_.apply_time(times[static_cast<std::size_t>(j)]));
    const Eigen::Index N = u.cols();
    const int du = arch_.encoder_input_dim();
    const Eigen::MatrixXf uf = u.cast<float>();
    const Eigen::RowVectorXf trow = ts.replicate(1, N);

    Eigen::MatrixXf tau_in;
    const bool learned = arch_.use_tau;
    if (learned) {
        tau_in.resize(du + 1, N * T);
        tau_in.row(0) = trow;
        for (Eigen::Index b = 0; b < N; ++b) tau_in.block(1, b * T, du, T) = uf.col(b).replicate(1, T);
    }
    std::vector<Eigen::MatrixXf> latent;
    for (const auto& lg : groups_) {
        const Eigen::MatrixXf E = lg.e.forward_f32(uf);
        const Eigen::MatrixXf C = lg.c.forward_f32(uf);
        Eigen::MatrixXf tau;
        if (learned) {
            tau = lg.tau.forward_f32(tau_in);
            tau.noalias() += lg.tau_linear.cast<float>() * trow;
        } else {
            tau = Eigen::VectorXf::Ones(arch_.group_latent_dim) * trow;
        }
        Eigen::MatrixXf y(arch_.group_latent_dim, N * T);
        for (Eigen::Index b = 0; b < N; ++b) {
            auto blk = y.middleCols(b * T, T);
            blk = tau.middleCols(b * T, T).array().colwise() * C.col(b).array();
            blk.colwise() += E.col(b);
        }
        latent.push_back(std::move(y));
    }
    const int n = arch_.state_dim;
    const Eigen::Index cols = N * T;
    Eigen::MatrixXf z(n, cols);
    switch (arch_.variant) {
        case Variant::Full: z = decoders_[0].forward_f32(latent[0]); break;
        case Variant::Independent:
            for (int i = 0; i < n; ++i)
                z.row(i) = decoders_[static_cast<std::size_t>(i)].forward_f32(latent[static_cast<std::size_t>(i)]);
            break;
        case Variant::CommonEncoder:
            for (int i = 0; i < n; ++i) z.row(i) = decoders_[static_cast<std::size_t>(i)].forward_f32(latent[0]);
            break;
        case Variant::CommonDecoder:
            for (int i = 0; i < n; ++i) z.row(i) = decoders_[0].forward_f32(latent[static_cast<std::size_t>(i)]);
            break;
    }
    if (arch_.conservation == Conservation::SoftmaxScaled) {
        for (Eigen::Index col = 0; col < cols; ++col) {
            auto c = z.col(col);
            c = (c.array() - c.maxCoeff()).exp();
            c *= static_cast<float>(k[col / T]) / c.sum();
        }
    } else {
        for (Eigen::Index col = 0; col < cols; ++col)
            z.col(col) = transforms_.invert_state(z.col(col).cast<double>()).cast<float>();
    }
    return z;
}

// ---------------------------------------------------------------------------
// Persistence

void LiLaNModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json nets = nlohmann::json::array();
    nlohmann::json lin = nlohmann::json::array();
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        const auto& lg = groups_[g];
        const std::string prefix = "group" + std::to_string(g) + "_";
        save_checkpoint(lg.e, dir / (prefix + "e"));
        save_checkpoint(lg.c, dir / (prefix + "c"));
        nets.push_back({{"role", "e"}, {"group", g}, {"checkpoint", prefix + "e"}});
        nets.push_back({{"role", "c"}, {"group", g}, {"checkpoint", prefix + "c"}});
        if (arch_.use_tau) {
            save_checkpoint(lg.tau, dir / (prefix + "tau"));
            nets.push_back({{"role", "tau"}, {"group", g}, {"checkpoint", prefix + "tau"}});
            lin.push_back(std::vector<double>(lg.tau_linear.data(), lg.tau_linear.data() + lg.tau_linear.size()));
        }
    }
    for (std::size_t d = 0; d < decoders_.size(); ++d) {
        const std::string name = "decoder" + std::to_string(d);
        save_checkpoint(decoders_[d], dir / name);
        nets.push_back({{"role", "d"}, {"index", d}, {"checkpoint", name}});
    }
    nlohmann::json manifest = {
        {"format", "lilan-model"},
        {"version", 1},
        {"architecture", arch_.to_json()},
        {"transforms", transforms_.to_json()},
        {"parameter_count", parameter_count()},
        {"nets", nets},
        {"tau_linear", lin},
    };
    std::ofstream(dir / "model.json") << manifest.dump(2) << '\n';
}

LiLaNModel LiLaNModel::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "model.json");
    if (!in) fail(ErrorKind::MissingFile, "no model manifest in " + dir.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("malformed model manifest: ") + e.what());
    }
    if (manifest.value("format", "") != "lilan-model") fail(ErrorKind::CorruptMagic, "not a LiLaN model manifest");
    if (manifest.value("version", 0) != 1) fail(ErrorKind::VersionMismatch, "unsupported model manifest version");

    LiLaNModel m = zeros(Architecture::from_json(manifest.at("architecture")));
    m.transforms_ = TransformSpec::from_json(manifest.at("transforms"));
    auto load_as = [&](Mlp& slot, const std::string& name) {
        Mlp net = load_checkpoint(dir / name);
        if (net.layer_sizes() != slot.layer_sizes())
            fail(ErrorKind::ShapeInconsistency, "checkpoint " + name + " does not match the architecture");
        slot = std::move(net);
    };
    for (const auto& entry : manifest.at("nets")) {
        const auto role = entry.at("role").get<std::string>();
        const auto name = entry.at("checkpoint").get<std::string>();
        if (role == "d") {
            load_as(m.decoders_.at(entry.at("index").get<std::size_t>()), name);
        } else {
            auto& g = m.groups_.at(entry.at("group").get<std::size_t>());
            load_as(role == "e" ? g.e : role == "c" ? g.c : g.tau, name);
        }
    }
    if (m.arch_.use_tau) {
        const auto& lin = manifest.at("tau_linear");
        if (lin.size() != m.groups_.size()) fail(ErrorKind::ShapeInconsistency, "tau_linear group count mismatch");
        for (std::size_t g = 0; g < m.groups_.size(); ++g) {
            auto v = lin[g].get<std::vector<double>>();
            if (static_cast<int>(v.size()) != m.arch_.group_latent_dim)
                fail(ErrorKind::ShapeInconsistency, "tau_linear width mismatch");
            m.groups_[g].tau_linear = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
    }
    return m;
}

// ---------------------------------------------------------------------------

Vector latent_solution(const Vector& e, const Vector& c, const Vector& tau) {
    if (e.size() != c.size() || e.size() != tau.size())
        fail(ErrorKind::Shape, "latent_solution: e, c and tau must have equal lengths");
    return e.array() + tau.array() * c.array();
}

LiLaNModel build_direct_equivalent(const Matrix& W1, const Matrix& W, const Vector& b, const Vector& c1,
                                   const std::string& activation) {
    if (activation != "tanh") fail(ErrorKind::InvalidArchitecture, "only tanh activation is supported");
    const auto nx = W1.rows();
    const auto m = W1.cols();
    if (W.rows() != m || b.size() != m || c1.size() != nx || W.cols() < 1 + nx)
        fail(ErrorKind::Shape, "build_direct_equivalent: inconsistent shapes");
    const auto np = W.cols() - 1 - nx;

    Architecture arch;
    arch.variant = Variant::Full;
    arch.state_dim = static_cast<int>(nx);
    arch.param_dim = static_cast<int>(np);
    arch.layout = InputLayout::StateParams;
    arch.group_latent_dim = static_cast<int>(m);
    arch.encoder_hidden = {};
    arch.tau_hidden = {};
    arch.decoder_hidden = {static_cast<int>(m)};
    LiLaNModel model = LiLaNModel::zeros(arch);

    auto& g = model.groups()[0];
    g.e.weight(0) = W.rightCols(nx + np);
    g.e.bias(0) = b;
    g.c.bias(0).setOnes();
    g.tau_linear = W.col(0);
    auto& d = model.decoders()[0];
    d.weight(0).setIdentity();
    d.weight(1) = W1;
    d.bias(1) = c1;

    TransformOptions opts;
    opts.state_log10 = false;
    opts.input_minmax = false;
    opts.layout = InputLayout::StateParams;
    opts.time = TimeScaling::Linear;
    model.set_transforms(TransformSpec(opts, 0.0, 1.0, Vector(), Vector(), Vector(), Vector()));
    return model;
}

}  // namespace lilan
