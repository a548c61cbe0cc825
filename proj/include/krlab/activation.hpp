#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace krlab {

/// A scalar activation together with uniform bounds on |σ|, |σ'| and |σ''|.
struct ActivationSpec {
  std::string name;
  double (*value)(double) = nullptr;
  double (*derivative)(double) = nullptr;
  double (*second_derivative)(double) = nullptr;
  /// Batched form used by the kernels: value[k] = σ(z[k]) and, when `deriv`
  /// is non-null, deriv[k] = σ'(z[k]). `value` may alias `z`.
  void (*apply)(const double* z, double* value, double* deriv, std::size_t n) = nullptr;
  double sigma0 = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
};

/// tanh: σ0 = 1, σ1 = 1, σ2 = 4/(3√3).
ActivationSpec tanh_activation();

/// Looks up an activation by name ("tanh"); throws std::invalid_argument otherwise.
ActivationSpec activation_by_name(std::string_view name);

/// Runs act.apply, or the scalar functions when no batched form is set.
void apply_activation(const ActivationSpec& act, const double* z, double* value, double* deriv, std::size_t n);

}  // namespace krlab
