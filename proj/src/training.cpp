#include "lilan/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>

#include "lilan/rng.hpp"

namespace lilan {

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::ExpProduct: return "exp_product";
        case LossKind::AbsRelative: return "abs_relative";
        case LossKind::RelL2: return "rel_l2";
    }
    return "exp_product";
}

LossKind loss_from_string(const std::string& s) {
    if (s == "exp_product") return LossKind::ExpProduct;
    if (s == "abs_relative") return LossKind::AbsRelative;
    if (s == "rel_l2") return LossKind::RelL2;
    fail(ErrorKind::UnknownName, "unknown loss '" + s + "'");
}

namespace {

void check_pair(const Matrix& pred, const Matrix& target, Eigen::Index steps) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        fail(ErrorKind::Shape, "prediction and target shapes differ");
    if (steps < 1 || pred.cols() % steps != 0) fail(ErrorKind::Shape, "column count is not a multiple of the time steps");
    if (!pred.allFinite() || !target.allFinite()) fail(ErrorKind::Domain, "non-finite value in loss input");
}

double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

}  // namespace

LossResult loss_exp_product(const Matrix& pred, const Matrix& target, Eigen::Index steps, bool want_grad) {
    check_pair(pred, target, steps);
    const Eigen::Index B = pred.cols() / steps;
    const auto per_entry = 1.0 / static_cast<double>(steps * pred.rows());
    LossResult r;
    if (want_grad) r.grad.resize(pred.rows(), pred.cols());
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto d = pred.middleCols(i * steps, steps) - target.middleCols(i * steps, steps);
        double s = d.cwiseAbs().sum() * per_entry;
        const bool clamped = s > kExponentClamp;
        if (clamped) {
            s = kExponentClamp;
            ++r.clamped;
        }
        const double v = std::exp(std::numbers::ln10 * s);
        r.value += v;
        if (want_grad) {
            const double scale = clamped ? 0.0 : v * std::numbers::ln10 * per_entry / static_cast<double>(B);
            r.grad.middleCols(i * steps, steps) = d.unaryExpr(&sign) * scale;
        }
    }
    r.value /= static_cast<double>(B);
    return r;
}

LossResult loss_abs_relative(const Matrix& pred, const Matrix& target, Eigen::Index steps, bool want_grad) {
    check_pair(pred, target, steps);
    if ((target.array() == 0.0).any()) fail(ErrorKind::Domain, "abs_relative loss needs nonzero targets");
    const auto n = static_cast<double>(pred.size());
    LossResult r;
    const Matrix d = pred - target;
    r.value = (d.array().abs() / target.array().abs()).sum() / n;
    if (want_grad) r.grad = (d.unaryExpr(&sign).array() / target.array().abs() / n).matrix();
    return r;
}

LossResult loss_rel_l2(const Matrix& pred, const Matrix& target, Eigen::Index steps, bool want_grad) {
    check_pair(pred, target, steps);
    const auto cols = static_cast<double>(pred.cols());
    LossResult r;
    if (want_grad) r.grad = Matrix::Zero(pred.rows(), pred.cols());
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
        const double tn = target.col(c).norm();
        if (tn == 0.0) fail(ErrorKind::Domain, "rel_l2 loss: zero-norm target at column " + std::to_string(c));
        const Vector d = pred.col(c) - target.col(c);
        const double dn = d.norm();
        r.value += dn / tn;
        if (want_grad && dn > 0.0) r.grad.col(c) = d / (dn * tn * cols);
    }
    r.value /= cols;
    return r;
}

LossResult compute_loss(LossKind kind, const Matrix& pred, const Matrix& target, Eigen::Index steps, bool want_grad) {
    switch (kind) {
        case LossKind::ExpProduct: return loss_exp_product(pred, target, steps, want_grad);
        case LossKind::AbsRelative: return loss_abs_relative(pred, target, steps, want_grad);
        case LossKind::RelL2: return loss_rel_l2(pred, target, steps, want_grad);
    }
    return {};
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    require(epochs >= 0, ErrorKind::Config, "epochs must be >= 0");
    require(batch_size >= 0, ErrorKind::Config, "batch size must be >= 0");
    require(learning_rate > 0.0, ErrorKind::Config, "learning rate must be positive");
    require(val_every >= 1, ErrorKind::Config, "val_every must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j = {{"loss", to_string(loss)},
                        {"learning_rate", learning_rate},
                        {"epochs", epochs},
                        {"batch_size", batch_size},
                        {"seed", seed},
                        {"val_every", val_every},
                        {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
                        {"log_every", log_every}};
    j["history_path"] = history_path ? nlohmann::json(history_path->string()) : nlohmann::json();
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        if (j.contains("loss")) c.loss = loss_from_string(j["loss"].get<std::string>());
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        c.val_every = j.value("val_every", c.val_every);
        c.log_every = j.value("log_every", c.log_every);
        if (j.contains("adam")) {
            const auto& a = j["adam"];
            c.adam.beta1 = a.value("beta1", c.adam.beta1);
            c.adam.beta2 = a.value("beta2", c.adam.beta2);
            c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
        }
        if (j.contains("history_path") && !j["history_path"].is_null())
            c.history_path = j["history_path"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("bad training config: ") + e.what());
    }
    c.adam.learning_rate = c.learning_rate;
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

TrainingData prepare_training_data(const LiLaNModel& model, const TrajectoryDataset& ds) {
    const auto& tf = model.transforms();
    if (!tf.fitted()) fail(ErrorKind::State, "model transforms are not fitted");
    TrainingData d;
    d.n_samples = ds.n_samples();
    d.steps = ds.n_times();
    model.prepare_inputs(ds.x0, ds.params, d.enc_input, d.constants);
    d.times.resize(d.steps);
    for (Eigen::Index j = 0; j < d.steps; ++j) d.times[j] = tf.apply_time(ds.times[static_cast<std::size_t>(j)]);
    d.targets = ds.stacked().transpose();
    for (Eigen::Index c = 0; c < d.targets.cols(); ++c)
        d.targets.col(c) = tf.apply_state(d.targets.col(c), static_cast<long>(c / d.steps));
    return d;
}

namespace {

struct Batch {
    Matrix enc;
    Vector constants;
    Matrix targets;
};

Batch gather(const TrainingData& d, std::span<const std::size_t> rows) {
    const auto b = static_cast<Eigen::Index>(rows.size());
    Batch out{Matrix(d.enc_input.rows(), b), Vector(b), Matrix(d.targets.rows(), b * d.steps)};
    for (Eigen::Index r = 0; r < b; ++r) {
        const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
        out.enc.col(r) = d.enc_input.col(i);
        out.constants[r] = d.constants.size() ? d.constants[i] : 0.0;
        out.targets.middleCols(r * d.steps, d.steps) = d.targets.middleCols(i * d.steps, d.steps);
    }
    return out;
}

std::vector<std::vector<double>> snapshot(const LiLaNModel& model) {
    std::vector<std::vector<double>> out;
    for (auto b : model.parameter_blocks()) out.emplace_back(b.begin(), b.end());
    return out;
}

void restore(LiLaNModel& model, const std::vector<std::vector<double>>& saved) {
    auto blocks = model.parameter_blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) std::copy(saved[b].begin(), saved[b].end(), blocks[b].begin());
}

}  // namespace

double evaluate_loss(const LiLaNModel& model, const TrainingData& data, LossKind kind) {
    constexpr Eigen::Index chunk = 256;
    double total = 0.0;
    for (Eigen::Index start = 0; start < data.n_samples; start += chunk) {
        const Eigen::Index len = std::min(chunk, data.n_samples - start);
        const Vector k = data.constants.size() ? Vector(data.constants.segment(start, len)) : Vector();
        const Matrix pred = model.forward(data.enc_input.middleCols(start, len), data.times, k);
        const Matrix tgt = data.targets.middleCols(start * data.steps, len * data.steps);
        total += compute_loss(kind, pred, tgt, data.steps).value * static_cast<double>(len);
    }
    return total / static_cast<double>(data.n_samples);
}

TrainResult train(LiLaNModel& model, const TrajectoryDataset& train_ds, const TrajectoryDataset* val_ds,
                  const TrainConfig& cfg) {
    cfg.validate();
    const TrainingData data = prepare_training_data(model, train_ds);
    std::optional<TrainingData> val;
    if (val_ds) val = prepare_training_data(model, *val_ds);

    const auto N = static_cast<std::size_t>(data.n_samples);
    const auto batch = cfg.batch_size == 0 ? N : static_cast<std::size_t>(cfg.batch_size);
    if (batch > N)
        fail(ErrorKind::Config, "batch size " + std::to_string(batch) + " exceeds the " + std::to_string(N) +
                                    " training samples");

    AdamConfig adam = cfg.adam;
    adam.learning_rate = cfg.learning_rate;
    std::vector<AdamState> states;
    for (auto b : std::as_const(model).parameter_blocks()) states.emplace_back(b.size(), adam);

    std::optional<std::ofstream> history_file;
    if (cfg.history_path) {
        history_file.emplace(*cfg.history_path);
        if (!*history_file) fail(ErrorKind::Io, "cannot write " + cfg.history_path->string());
        *history_file << "epoch,train_loss,val_loss,wall_seconds\n";
        history_file->precision(17);
    }

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    auto best = snapshot(model);
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(N);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = N; i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(i - 1)));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        for (std::size_t first = 0; first < N; first += batch) {
            const std::size_t len = std::min(batch, N - first);
            const Batch b = gather(data, std::span<const std::size_t>(order).subspan(first, len));
            ForwardCache cache;
            const Matrix pred = model.forward(b.enc, data.times, b.constants, &cache);
            if (!pred.allFinite())
                fail(ErrorKind::Divergence, "non-finite prediction at epoch " + std::to_string(epoch));
            const LossResult loss = compute_loss(cfg.loss, pred, b.targets, data.steps, true);
            if (!std::isfinite(loss.value))
                fail(ErrorKind::Divergence, "non-finite loss at epoch " + std::to_string(epoch));
            result.clamp_events += loss.clamped;
            const ParameterGrads grads = model.backward(cache, loss.grad);
            auto blocks = model.parameter_blocks();
            for (std::size_t k = 0; k < blocks.size(); ++k) adam_step(blocks[k], grads[k], states[k]);
            epoch_loss += loss.value * static_cast<double>(len);
        }
        epoch_loss /= static_cast<double>(N);

        HistoryRow row{epoch, epoch_loss, std::numeric_limits<double>::quiet_NaN(), 0.0};
        const bool validate_now = val && (epoch % cfg.val_every == 0 || epoch == cfg.epochs);
        if (validate_now) {
            try {
                row.val_loss = evaluate_loss(model, *val, cfg.loss);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Domain) throw;
                row.val_loss = std::numeric_limits<double>::quiet_NaN();
            }
            if (!std::isfinite(row.val_loss))
                fail(ErrorKind::Divergence, "non-finite validation loss at epoch " + std::to_string(epoch));
            if (row.val_loss < result.best_val_loss) {
                result.best_val_loss = row.val_loss;
                result.best_epoch = epoch;
                best = snapshot(model);
            }
        }
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(row);
        if (history_file)
            *history_file << row.epoch << ',' << row.train_loss << ',' << row.val_loss << ',' << row.wall_seconds
                          << std::endl;
        if (cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch == cfg.epochs))
            std::cerr << "epoch " << epoch << " train " << row.train_loss << " val " << row.val_loss << " ("
                      << row.wall_seconds << " s)\n";
    }

    if (val && result.best_epoch > 0) {
        restore(model, best);
    } else if (!result.history.empty()) {
        result.best_epoch = cfg.epochs;
        result.best_val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.precision(17);
    out << "epoch,train_loss,val_loss,wall_seconds\n";
    for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.wall_seconds << '\n';
}

}  // namespace lilan
