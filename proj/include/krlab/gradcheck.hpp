#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krlab/activation.hpp"

namespace krlab {

struct GradcheckConfig {
  int instances = 100;
  int d = 4;
  int T = 5;
  int m = 4;
  double step = 1e-5;       ///< central-difference step
  double tolerance = 1e-6;  ///< per-block relative error
  std::uint64_t seed = 0;
  /// Test hook: added to the first entry of every analytic block before comparison.
  double perturbation = 0.0;
};

struct BlockError {
  std::string name;
  double worst = 0.0;
};

struct GradcheckReport {
  std::vector<BlockError> blocks;  ///< tf.c, tf.U, tf.W, rnn.U, rnn.w, rnn.c
  int instances = 0;
  double tolerance = 0.0;

  bool passed() const;
  double worst() const;
};

/// ‖g − n‖ / max(‖g‖ + ‖n‖, 1e-12).
double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

/// Compares analytic gradients of both models with central finite differences
/// of their forward passes on random parameters and inputs.
GradcheckReport run_gradient_checks(const GradcheckConfig& config, const ActivationSpec& act);

}  // namespace krlab
