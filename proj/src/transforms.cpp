#include "lilan/transforms.hpp"

#include <cmath>

namespace lilan {

std::string to_string(InputLayout layout) {
    switch (layout) {
        case InputLayout::Params: return "params";
        case InputLayout::StateParams: return "state_params";
        case InputLayout::State: return "state";
    }
    return "params";
}

InputLayout input_layout_from_string(const std::string& s) {
    if (s == "params") return InputLayout::Params;
    if (s == "state_params") return InputLayout::StateParams;
    if (s == "state") return InputLayout::State;
    fail(ErrorKind::UnknownName, "unknown input layout '" + s + "'");
}

int encoder_input_dim(InputLayout layout, int state_dim, int param_dim) {
    switch (layout) {
        case InputLayout::Params: return param_dim;
        case InputLayout::StateParams: return state_dim + param_dim;
        case InputLayout::State: return state_dim;
    }
    return 0;
}

Vector encoder_input_raw(InputLayout layout, const Vector& x0, const Vector& p) {
    switch (layout) {
        case InputLayout::Params: return p;
        case InputLayout::State: return x0;
        case InputLayout::StateParams: {
            Vector u(x0.size() + p.size());
            u << x0, p;
            return u;
        }
    }
    return {};
}

TransformOptions TransformOptions::ode(InputLayout layout) {
    TransformOptions o;
    o.state_log10 = true;
    o.input_minmax = true;
    o.layout = layout;
    o.time = TimeScaling::Log10;
    return o;
}

TransformOptions TransformOptions::pde() {
    TransformOptions o;
    o.state_log10 = false;
    o.input_minmax = false;
    o.layout = InputLayout::State;
    o.time = TimeScaling::Linear;
    return o;
}

TransformSpec::TransformSpec(TransformOptions options, double t_lo, double t_hi, Vector input_lo,
                             Vector input_hi, Vector state_lo, Vector state_hi)
    : options_(options),
      fitted_(true),
      t_lo_(t_lo),
      t_hi_(t_hi),
      input_lo_(std::move(input_lo)),
      input_hi_(std::move(input_hi)),
      state_lo_(std::move(state_lo)),
      state_hi_(std::move(state_hi)) {
    require(t_hi_ > t_lo_, ErrorKind::Domain, "time range must be increasing");
    if (options_.time == TimeScaling::Log10)
        require(t_lo_ > 0.0, ErrorKind::Domain, "log time scaling needs a positive first time");
    if (options_.input_minmax)
        require(input_lo_.size() == input_hi_.size(), ErrorKind::Shape, "input range sizes differ");
    if (options_.state_minmax)
        require(state_lo_.size() == state_hi_.size(), ErrorKind::Shape, "state range sizes differ");
}

void TransformSpec::require_fitted() const {
    if (!fitted_) fail(ErrorKind::State, "transforms used before fitting");
}

double TransformSpec::apply_time(double t) const {
    require_fitted();
    if (options_.time == TimeScaling::Log10) {
        if (!(t > 0.0)) fail(ErrorKind::Domain, "log time scaling requires t > 0, got " + std::to_string(t));
        const double a = std::log10(t_lo_);
        const double b = std::log10(t_hi_);
        return (std::log10(t) - a) / (b - a);
    }
    return (t - t_lo_) / (t_hi_ - t_lo_);
}

double TransformSpec::invert_time(double s) const {
    require_fitted();
    if (options_.time == TimeScaling::Log10) {
        const double a = std::log10(t_lo_);
        const double b = std::log10(t_hi_);
        return std::pow(10.0, a + s * (b - a));
    }
    return t_lo_ + s * (t_hi_ - t_lo_);
}

Vector TransformSpec::apply_input(const Vector& raw) const {
    require_fitted();
    if (!options_.input_minmax) return raw;
    if (raw.size() != input_lo_.size()) fail(ErrorKind::Shape, "encoder input width mismatch");
    Vector out(raw.size());
    for (Eigen::Index k = 0; k < raw.size(); ++k) {
        const double span = input_hi_[k] - input_lo_[k];
        // A constant input column carries no information; it maps to the midpoint.
        out[k] = span > 0.0 ? 2.0 * (raw[k] - input_lo_[k]) / span - 1.0 : 0.0;
    }
    return out;
}

double TransformSpec::log_state(double x, int k, long sample) const {
    if (x < -options_.negative_tolerance || !std::isfinite(x))
        fail(ErrorKind::Domain, "cannot log10-transform state component " + std::to_string(k) + " of sample " +
                                    std::to_string(sample) + " (value " + std::to_string(x) + ")");
    return std::log10(std::max(x, options_.log_floor));
}

double TransformSpec::state_scale(int k) const {
    if (!options_.state_minmax) return 1.0;
    const double span = state_hi_[k] - state_lo_[k];
    return span > 0.0 ? 2.0 / span : 1.0;
}

double TransformSpec::state_shift(int k) const {
    if (!options_.state_minmax) return 0.0;
    const double span = state_hi_[k] - state_lo_[k];
    return span > 0.0 ? -1.0 - 2.0 * state_lo_[k] / span : -state_lo_[k];
}

Vector TransformSpec::apply_state(const Vector& x, long sample) const {
    require_fitted();
    Vector z(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const int kk = static_cast<int>(k);
        const double y = options_.state_log10 ? log_state(x[k], kk, sample) : x[k];
        z[k] = state_scale(kk) * y + state_shift(kk);
    }
    return z;
}

Vector TransformSpec::invert_state(const Vector& z) const {
    require_fitted();
    Vector x(z.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        const int kk = static_cast<int>(k);
        const double y = (z[k] - state_shift(kk)) / state_scale(kk);
        x[k] = options_.state_log10 ? std::pow(10.0, y) : y;
    }
    return x;
}

void TransformSpec::apply_state_inplace(Eigen::Ref<Matrix> x) const {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) = apply_state(x.col(j), static_cast<long>(j));
}

void TransformSpec::invert_state_inplace(Eigen::Ref<Matrix> z) const {
    for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j) = invert_state(z.col(j));
}

namespace {
nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
Vector json_vec(const nlohmann::json& j) {
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

nlohmann::json TransformSpec::to_json() const {
    return {
        {"fitted", fitted_},
        {"state_log10", options_.state_log10},
        {"log_floor", options_.log_floor},
        {"negative_tolerance", options_.negative_tolerance},
        {"state_minmax", options_.state_minmax},
        {"input_minmax", options_.input_minmax},
        {"input_layout", to_string(options_.layout)},
        {"time_scaling", options_.time == TimeScaling::Log10 ? "log10" : "linear"},
        {"time_lo", t_lo_},
        {"time_hi", t_hi_},
        {"input_lo", vec_json(input_lo_)},
        {"input_hi", vec_json(input_hi_)},
        {"state_lo", vec_json(state_lo_)},
        {"state_hi", vec_json(state_hi_)},
    };
}

TransformSpec TransformSpec::from_json(const nlohmann::json& j) {
    TransformOptions o;
    o.state_log10 = j.at("state_log10").get<bool>();
    o.log_floor = j.at("log_floor").get<double>();
    o.negative_tolerance = j.value("negative_tolerance", 1e-10);
    o.state_minmax = j.at("state_minmax").get<bool>();
    o.input_minmax = j.at("input_minmax").get<bool>();
    o.layout = input_layout_from_string(j.at("input_layout").get<std::string>());
    const auto ts = j.at("time_scaling").get<std::string>();
    if (ts == "log10") o.time = TimeScaling::Log10;
    else if (ts == "linear") o.time = TimeScaling::Linear;
    else fail(ErrorKind::Config, "unknown time scaling '" + ts + "'");
    if (!j.at("fitted").get<bool>()) {
        TransformSpec t;
        t.options_ = o;
        return t;
    }
    return TransformSpec(o, j.at("time_lo").get<double>(), j.at("time_hi").get<double>(), json_vec(j.at("input_lo")),
                         json_vec(j.at("input_hi")), json_vec(j.at("state_lo")), json_vec(j.at("state_hi")));
}

}  // namespace lilan
