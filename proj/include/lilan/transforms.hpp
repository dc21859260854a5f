#pragma once

#include <string>

#include "json.hpp"

#include "lilan/mlp.hpp"

namespace lilan {

/// What the e and c encoders see (before scaling).
enum class InputLayout {
    Params,       ///< p only; used when x0 is fixed across samples
    StateParams,  ///< [x0, p]
    State,        ///< x0 only; PDE problems with n_p = 0
};

enum class TimeScaling {
    Log10,   ///< log10 t, then affine onto [0, 1]
    Linear,  ///< affine onto [0, 1]
};

[[nodiscard]] std::string to_string(InputLayout layout);
[[nodiscard]] InputLayout input_layout_from_string(const std::string& s);

[[nodiscard]] int encoder_input_dim(InputLayout layout, int state_dim, int param_dim);
[[nodiscard]] Vector encoder_input_raw(InputLayout layout, const Vector& x0, const Vector& p);

struct TransformOptions {
    bool state_log10 = false;
    /// Values in [-negative_tolerance, log_floor) are raised to log_floor before log10.
    double log_floor = 1e-30;
    double negative_tolerance = 1e-10;
    /// Optional per-component affine map of the (logged) states onto [-1, 1].
    bool state_minmax = false;
    bool input_minmax = true;
    InputLayout layout = InputLayout::Params;
    TimeScaling time = TimeScaling::Log10;

    /// log10 states, [-1,1] inputs from p, log-time.
    [[nodiscard]] static TransformOptions ode(InputLayout layout = InputLayout::Params);
    /// identity states and inputs, linear time.
    [[nodiscard]] static TransformOptions pde();
};

/// Fitted data transforms. apply_* maps physical quantities into the network domain,
/// invert_* maps back.
class TransformSpec {
public:
    TransformSpec() = default;
    TransformSpec(TransformOptions options, double t_lo, double t_hi, Vector input_lo, Vector input_hi,
                  Vector state_lo, Vector state_hi);

    [[nodiscard]] bool fitted() const noexcept { return fitted_; }
    [[nodiscard]] const TransformOptions& options() const noexcept { return options_; }

    [[nodiscard]] double apply_time(double t) const;
    [[nodiscard]] double invert_time(double s) const;
    [[nodiscard]] double time_lo() const noexcept { return t_lo_; }
    [[nodiscard]] double time_hi() const noexcept { return t_hi_; }

    [[nodiscard]] Vector apply_input(const Vector& raw) const;

    /// One state vector; `sample` only labels domain errors.
    [[nodiscard]] Vector apply_state(const Vector& x, long sample = -1) const;
    [[nodiscard]] Vector invert_state(const Vector& z) const;
    /// Column-wise on a state_dim x n block.
    void apply_state_inplace(Eigen::Ref<Matrix> x) const;
    void invert_state_inplace(Eigen::Ref<Matrix> z) const;

    /// Affine stage of the state map (identity when state_minmax is off): z = scale * y + shift.
    [[nodiscard]] double state_scale(int k) const;
    [[nodiscard]] double state_shift(int k) const;

    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static TransformSpec from_json(const nlohmann::json& j);

private:
    void require_fitted() const;
    [[nodiscard]] double log_state(double x, int k, long sample) const;

    TransformOptions options_;
    bool fitted_ = false;
    double t_lo_ = 0.0;
    double t_hi_ = 1.0;
    Vector input_lo_, input_hi_;
    Vector state_lo_, state_hi_;
};

}  // namespace lilan
