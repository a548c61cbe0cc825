#include "krlab/activation.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace krlab {

namespace {

double tanh_value(double u) { return std::tanh(u); }

double tanh_derivative(double u) {
  const double t = std::tanh(u);
  return 1.0 - t * t;
}

double tanh_second(double u) {
  const double t = std::tanh(u);
  return -2.0 * t * (1.0 - t * t);
}

// tanh(z) = sign(z) (1 - e) / (1 + e) with e = exp(-2|z|), on packed exp.
void tanh_apply(const double* z, double* value, double* deriv, std::size_t n) {
  const auto len = static_cast<Eigen::Index>(n);
  const Eigen::Map<const Eigen::ArrayXd> zz(z, len);
  const Eigen::ArrayXd e = (-2.0 * zz.abs()).exp();
  Eigen::Map<Eigen::ArrayXd> v(value, len);
  v = zz.sign() * (1.0 - e) / (1.0 + e);
  if (deriv != nullptr) Eigen::Map<Eigen::ArrayXd>(deriv, len) = 1.0 - v.square();
}

}  // namespace

ActivationSpec tanh_activation() {
  // max of 2t(1-t^2) on [0,1] sits at t = 1/sqrt(3)
  return {"tanh", &tanh_value, &tanh_derivative, &tanh_second, &tanh_apply, 1.0, 1.0, 4.0 / (3.0 * std::sqrt(3.0))};
}

ActivationSpec activation_by_name(std::string_view name) {
  if (name == "tanh") return tanh_activation();
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

void apply_activation(const ActivationSpec& act, const double* z, double* value, double* deriv, std::size_t n) {
  if (act.apply != nullptr) {
    act.apply(z, value, deriv, n);
    return;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double u = z[k];
    if (deriv != nullptr) deriv[k] = act.derivative(u);
    value[k] = act.value(u);
  }
}

}  // namespace krlab
