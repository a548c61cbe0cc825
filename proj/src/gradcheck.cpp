#include "krlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "krlab/data.hpp"
#include "krlab/indrnn.hpp"
#include "krlab/params.hpp"
#include "krlab/rng.hpp"
#include "krlab/transformer.hpp"

namespace krlab {

namespace {

enum Block { kTfC, kTfU, kTfW, kRnnU, kRnnW, kRnnC, kBlockCount };

const char* const kBlockNames[kBlockCount] = {"tf.c", "tf.U", "tf.W", "rnn.U", "rnn.w", "rnn.c"};

// Central difference of f with respect to the scalar at `x`, restored afterwards.
double central(double& x, double h, const std::function<double()>& f) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

ModelParams random_model(int m, int d, Stream& rng) {
  HeadList heads(static_cast<std::size_t>(m));
  for (auto& h : heads) {
    h.c = rng.gaussian();
    h.U.resize(d);
    for (int k = 0; k < d; ++k) h.U(k) = rng.gaussian();
    h.W.resize(d, d);
    for (int r = 0; r < d; ++r)
      for (int col = 0; col < d; ++col) h.W(r, col) = rng.gaussian();
  }
  return ModelParams(std::move(heads), d);
}

RnnParams random_rnn(int m, int d, Stream& rng) {
  RnnState s{Eigen::MatrixXd(m, d), Eigen::VectorXd(m), Eigen::VectorXd(m)};
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < d; ++k) s.U(i, k) = rng.gaussian();
    s.w(i) = 3.0 * rng.uniform() - 1.5;
    s.c(i) = rng.gaussian();
  }
  return RnnParams(std::move(s), 1.0);
}

void check_transformer(const TokenSequence& X, ModelParams& p, const GradcheckConfig& cfg, const ActivationSpec& act,
                       double* worst) {
  const ModelGradient g = gradients(X, p, act);
  const int m = p.m();
  const int d = p.d();
  const auto f = [&] { return forward(X, p, act); };
  Eigen::VectorXd ga[3] = {Eigen::VectorXd(m), Eigen::VectorXd(m * d), Eigen::VectorXd(m * d * d)};
  Eigen::VectorXd fd[3] = {Eigen::VectorXd(m), Eigen::VectorXd(m * d), Eigen::VectorXd(m * d * d)};
  for (int i = 0; i < m; ++i) {
    auto& h = p.heads[static_cast<std::size_t>(i)];
    const auto& gh = g.heads[static_cast<std::size_t>(i)];
    ga[0](i) = gh.c;
    fd[0](i) = central(h.c, cfg.step, f);
    for (int k = 0; k < d; ++k) {
      ga[1](i * d + k) = gh.U(k);
      fd[1](i * d + k) = central(h.U(k), cfg.step, f);
    }
    for (int r = 0; r < d; ++r)
      for (int col = 0; col < d; ++col) {
        const int idx = (i * d + r) * d + col;
        ga[2](idx) = gh.W(r, col);
        fd[2](idx) = central(h.W(r, col), cfg.step, f);
      }
  }
  for (int b = 0; b < 3; ++b) {
    ga[b](0) += cfg.perturbation;
    worst[kTfC + b] = std::max(worst[kTfC + b], relative_error(ga[b], fd[b]));
  }
}

void check_rnn(const Eigen::MatrixXd& X, RnnParams& p, const GradcheckConfig& cfg, const ActivationSpec& act,
               double* worst) {
  const RnnGradient g = rnn_gradients(X, p, act);
  const int m = p.m();
  const int d = p.d();
  const auto f = [&] { return rnn_forward(X, p, act); };
  Eigen::VectorXd ga_u(m * d), fd_u(m * d), ga_w(m), fd_w(m), ga_c(m), fd_c(m);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < d; ++k) {
      ga_u(i * d + k) = g.dU(i, k);
      fd_u(i * d + k) = central(p.state.U(i, k), cfg.step, f);
    }
    ga_w(i) = g.dw(i);
    fd_w(i) = central(p.state.w(i), cfg.step, f);
    ga_c(i) = g.dc(i);
    fd_c(i) = central(p.state.c(i), cfg.step, f);
  }
  ga_u(0) += cfg.perturbation;
  ga_w(0) += cfg.perturbation;
  ga_c(0) += cfg.perturbation;
  worst[kRnnU] = std::max(worst[kRnnU], relative_error(ga_u, fd_u));
  worst[kRnnW] = std::max(worst[kRnnW], relative_error(ga_w, fd_w));
  worst[kRnnC] = std::max(worst[kRnnC], relative_error(ga_c, fd_c));
}

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(blocks.begin(), blocks.end(), [&](const BlockError& b) { return b.worst <= tolerance; });
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& b : blocks) w = std::max(w, b.worst);
  return w;
}

double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("relative_error: size mismatch");
  return (analytic - numeric).norm() / std::max(analytic.norm() + numeric.norm(), 1e-12);
}

GradcheckReport run_gradient_checks(const GradcheckConfig& config, const ActivationSpec& act) {
  if (config.instances < 1 || config.d < 1 || config.T < 1 || config.m < 2 || config.m % 2 != 0)
    throw std::invalid_argument("gradcheck: instances, d, T >= 1 and even m >= 2 required");
  if (!(config.step > 0.0) || !(config.tolerance > 0.0))
    throw std::invalid_argument("gradcheck: step and tolerance must be positive");

  double worst[kBlockCount] = {};
  for (int k = 0; k < config.instances; ++k) {
    Stream rng(config.seed, {stream::kTest, 0x6763, static_cast<std::uint64_t>(k)});
    const auto inputs = gaussian_sequences(1, config.d, config.T, rng.engine()(), stream::kTest);
    ModelParams tf = random_model(config.m, config.d, rng);
    check_transformer(inputs.front(), tf, config, act, worst);
    RnnParams rnn = random_rnn(config.m, config.d, rng);
    check_rnn(inputs.front().X(), rnn, config, act, worst);
  }

  GradcheckReport report;
  report.instances = config.instances;
  report.tolerance = config.tolerance;
  for (int b = 0; b < kBlockCount; ++b) report.blocks.push_back({kBlockNames[b], worst[b]});
  return report;
}

}  // namespace krlab
