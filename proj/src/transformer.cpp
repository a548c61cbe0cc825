#include "krlab/transformer.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "krlab/numerics.hpp"

namespace krlab {

namespace {

constexpr double kDomainSlack = 1e-12;

void check_head(const TokenSequence& X, const HeadParams& head) {
  if (head.U.size() != X.d() || head.W.rows() != X.d() || head.W.cols() != X.d())
    throw std::invalid_argument("dimension mismatch between input and head");
}

void check_model(const TokenSequence& X, const ModelParams& params) {
  if (params.d() != X.d()) throw std::invalid_argument("dimension mismatch between input and parameters");
}

Eigen::VectorXd softmax_weights(const TokenSequence& X, const Eigen::MatrixXd& W) {
  if (W.rows() != X.d() || W.cols() != X.d()) throw std::invalid_argument("attention: W must be d×d");
  Eigen::VectorXd z = X.X().transpose() * (W * X.q());
  numerics::softmax_inplace(std::span<double>(z.data(), static_cast<std::size_t>(z.size())));
  return z;
}

}  // namespace

TokenSequence::TokenSequence(Eigen::MatrixXd X, Eigen::VectorXd q, QueryPolicy policy)
    : X_(std::move(X)), q_(std::move(q)), policy_(policy) {
  if (X_.rows() < 1 || X_.cols() < 1) throw std::invalid_argument("TokenSequence: need d, T >= 1");
  if (q_.size() != X_.rows()) throw std::invalid_argument("TokenSequence: query length must equal d");
  for (Eigen::Index t = 0; t < X_.cols(); ++t) {
    if (X_.col(t).norm() > 1.0 + kDomainSlack) throw std::invalid_argument("TokenSequence: token norm exceeds 1");
  }
  if (q_.norm() > 1.0 + kDomainSlack) throw std::invalid_argument("TokenSequence: query norm exceeds 1");
}

TokenSequence TokenSequence::last_token(Eigen::MatrixXd X) {
  if (X.cols() < 1) throw std::invalid_argument("TokenSequence: need T >= 1");
  Eigen::VectorXd q = X.col(X.cols() - 1);
  return TokenSequence(std::move(X), std::move(q), QueryPolicy::kLastToken);
}

TokenSequence TokenSequence::fixed_query(Eigen::MatrixXd X, Eigen::VectorXd q) {
  return TokenSequence(std::move(X), std::move(q), QueryPolicy::kFixed);
}

HeadEval evaluate_head(const TokenSequence& X, const HeadParams& head, const ActivationSpec& act) {
  check_head(X, head);
  HeadEval e;
  e.alpha = softmax_weights(X, head.W);
  e.a = X.X() * e.alpha;
  e.preact = head.U.dot(e.a);
  e.h = act.value(e.preact);
  e.dsigma = act.derivative(e.preact);
  // centered form M U = Σ α_t (X_t − a)((X_t − a)·U), exactly zero when T = 1
  const Eigen::MatrixXd Xc = X.X().colwise() - e.a;
  const Eigen::VectorXd proj = Xc.transpose() * head.U;
  e.MU = Xc * e.alpha.cwiseProduct(proj);
  return e;
}

Eigen::VectorXd attention(const TokenSequence& X, const Eigen::MatrixXd& W) {
  return X.X() * softmax_weights(X, W);
}

Eigen::MatrixXd softmax_covariance(const TokenSequence& X, const Eigen::MatrixXd& W) {
  const Eigen::VectorXd alpha = softmax_weights(X, W);
  const Eigen::MatrixXd Xc = X.X().colwise() - X.X() * alpha;
  return Xc * alpha.asDiagonal() * Xc.transpose();
}

double head_forward(const TokenSequence& X, const HeadParams& head, const ActivationSpec& act) {
  check_head(X, head);
  return act.value(head.U.dot(attention(X, head.W)));
}

double forward(const TokenSequence& X, const ModelParams& params, const ActivationSpec& act) {
  check_model(X, params);
  double total = 0.0;
  for (const auto& head : params.heads) total += head.c * head_forward(X, head, act);
  return total / std::sqrt(static_cast<double>(params.m()));
}

ForwardAndGradient forward_and_gradients(const TokenSequence& X, const ModelParams& params, const ActivationSpec& act) {
  check_model(X, params);
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.m()));
  ForwardAndGradient out;
  out.gradient.heads.resize(params.heads.size());
  double total = 0.0;
  for (std::size_t i = 0; i < params.heads.size(); ++i) {
    const auto& head = params.heads[i];
    const HeadEval e = evaluate_head(X, head, act);
    total += head.c * e.h;
    auto& g = out.gradient.heads[i];
    g.c = scale * e.h;
    g.U = (scale * head.c * e.dsigma) * e.a;
    g.W = (scale * head.c * e.dsigma) * e.MU * X.q().transpose();
  }
  out.value = total * scale;
  return out;
}

ModelGradient gradients(const TokenSequence& X, const ModelParams& params, const ActivationSpec& act) {
  return forward_and_gradients(X, params, act).gradient;
}

double inner(const HeadList& a, const HeadList& b) {
  if (a.size() != b.size()) throw std::invalid_argument("inner: width mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    total += a[i].c * b[i].c + a[i].U.dot(b[i].U) + (a[i].W.array() * b[i].W.array()).sum();
  }
  return total;
}

double linearized_forward(const TokenSequence& X, const ModelParams& params, const ActivationSpec& act) {
  const HeadList& init = params.init_snapshot();
  check_model(X, params);
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.m()));
  double total = 0.0;
  for (std::size_t i = 0; i < init.size(); ++i) {
    const auto& h0 = init[i];
    const auto& h = params.heads[i];
    const HeadEval e = evaluate_head(X, h0, act);
    const double gate = h0.c * e.dsigma;
    total += e.h * (h.c - h0.c);
    total += gate * e.a.dot(h.U - h0.U);
    // ⟨(M U) q^T, ΔW⟩_F = (M U)^T ΔW q
    total += gate * e.MU.dot((h.W - h0.W) * X.q());
  }
  return total * scale;
}

}  // namespace krlab
