#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "krlab/activation.hpp"
#include "krlab/params.hpp"

namespace krlab {

enum class QueryPolicy : std::uint32_t { kFixed = 0, kLastToken = 1 };

/// A d×T token matrix (tokens are columns) with its pooling query.
///
/// Construction enforces membership in the unit-token domain: every column and
/// the query have Euclidean norm at most one (up to 1e-12).
class TokenSequence {
 public:
  TokenSequence() = default;

  /// q = X_T.
  static TokenSequence last_token(Eigen::MatrixXd X);
  static TokenSequence fixed_query(Eigen::MatrixXd X, Eigen::VectorXd q);

  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::VectorXd& q() const { return q_; }
  QueryPolicy policy() const { return policy_; }
  int d() const { return static_cast<int>(X_.rows()); }
  int T() const { return static_cast<int>(X_.cols()); }

 private:
  TokenSequence(Eigen::MatrixXd X, Eigen::VectorXd q, QueryPolicy policy);

  Eigen::MatrixXd X_;
  Eigen::VectorXd q_;
  QueryPolicy policy_ = QueryPolicy::kLastToken;
};

/// ∇_φ f with the same per-head layout as ModelParams.
struct ModelGradient {
  HeadList heads;
};

/// Everything one head computes on one input.
struct HeadEval {
  Eigen::VectorXd alpha;  ///< softmax weights over tokens
  Eigen::VectorXd a;      ///< attention output X alpha
  double preact = 0.0;    ///< U^T a
  double h = 0.0;         ///< σ(U^T a)
  double dsigma = 0.0;    ///< σ'(U^T a)
  Eigen::VectorXd MU;     ///< softmax covariance applied to U
};

HeadEval evaluate_head(const TokenSequence& X, const HeadParams& head, const ActivationSpec& act);

/// a(X; W) = X softmax(X^T W q).
Eigen::VectorXd attention(const TokenSequence& X, const Eigen::MatrixXd& W);

/// M = Σ_t α_t X_t X_t^T − μ μ^T, the weighted-covariance form of X J_s X^T.
Eigen::MatrixXd softmax_covariance(const TokenSequence& X, const Eigen::MatrixXd& W);

double head_forward(const TokenSequence& X, const HeadParams& head, const ActivationSpec& act);

/// f(X; φ) = m^{-1/2} Σ_i c_i h(X; θ_i).
double forward(const TokenSequence& X, const ModelParams& params, const ActivationSpec& act);

/// Per head: dc = m^{-1/2} h, dU = m^{-1/2} c σ' a, dW = m^{-1/2} c σ' (M U) q^T.
ModelGradient gradients(const TokenSequence& X, const ModelParams& params, const ActivationSpec& act);

struct ForwardAndGradient {
  double value = 0.0;
  ModelGradient gradient;
};

ForwardAndGradient forward_and_gradients(const TokenSequence& X, const ModelParams& params, const ActivationSpec& act);

/// ⟨∇_φ f(X; φ⁰), φ − φ⁰⟩. Throws InvalidState without a snapshot.
double linearized_forward(const TokenSequence& X, const ModelParams& params, const ActivationSpec& act);

/// Frobenius inner product of two gradients (or displacements) with matching shapes.
double inner(const HeadList& a, const HeadList& b);

}  // namespace krlab
