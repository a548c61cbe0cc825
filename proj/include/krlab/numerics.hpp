#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace krlab {

/// Raised when an operation needs state that the value does not carry
/// (for example a parameter set without its initialization snapshot).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace numerics {

/// A point of the probability simplex: nonnegative entries summing to one.
struct Simplex {
  std::vector<double> probs;
};

/// Max-subtracted softmax. Throws std::invalid_argument on empty input.
Simplex softmax(std::span<const double> z);

/// In-place variant used by the batched kernels; `z` must be nonempty.
void softmax_inplace(std::span<double> z);

/// J = diag(alpha) - alpha alpha^T with alpha = softmax(z).
Eigen::MatrixXd softmax_jacobian(std::span<const double> z);

/// Rescales `a` onto the Frobenius ball of radius `bound` when it lies outside.
Eigen::MatrixXd clip_frobenius(const Eigen::MatrixXd& a, double bound);

/// Rescales every column with Euclidean norm above one to unit norm.
Eigen::MatrixXd clip_token_norms(Eigen::MatrixXd x);

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Unweighted least squares of log y on log x.
PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points);

struct ConfidenceInterval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Two-sided Student-t interval for the mean at confidence `level`.
ConfidenceInterval mean_ci(std::span<const double> samples, double level);

double median(std::vector<double> values);

}  // namespace numerics
}  // namespace krlab
