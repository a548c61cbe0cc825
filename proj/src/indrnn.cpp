#include "krlab/indrnn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "krlab/rng.hpp"

namespace krlab {

namespace {

void check_state(const RnnState& s) {
  const auto m = s.w.size();
  if (m < 2 || m % 2 != 0) throw std::invalid_argument("RnnParams: width must be a positive even integer");
  if (s.U.rows() != m || s.c.size() != m || s.U.cols() < 1)
    throw std::invalid_argument("RnnParams: inconsistent block shapes");
}

void check_input(const Eigen::MatrixXd& X, const RnnParams& p) {
  if (X.rows() != p.d() || X.cols() < 1) throw std::invalid_argument("IndRNN: dimension mismatch");
}

}  // namespace

RnnParams::RnnParams(RnnState s, double gamma) : state(std::move(s)), gamma_(gamma) { check_state(state); }

RnnParams RnnParams::at_init(RnnState s, double gamma) {
  RnnParams p(std::move(s), gamma);
  p.snapshot_ = std::make_shared<const RnnState>(p.state);
  return p;
}

const RnnState& RnnParams::init_snapshot() const {
  if (!snapshot_) throw InvalidState("IndRNN parameters carry no initialization snapshot");
  return *snapshot_;
}

RnnParams RnnParams::with_state(RnnState s) const {
  RnnParams p(std::move(s), gamma_);
  p.snapshot_ = snapshot_;
  return p;
}

RnnParams rnn_symmetric_init(int m, int d, double gamma, std::uint64_t seed) {
  if (m < 2 || m % 2 != 0) throw std::invalid_argument("rnn_symmetric_init: m must be even and >= 2");
  if (d < 1) throw std::invalid_argument("rnn_symmetric_init: d must be positive");
  if (!(gamma >= 0.0)) throw std::invalid_argument("rnn_symmetric_init: gamma must be nonnegative");
  Stream rng(seed, {stream::kInit, 0x524e4eu, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(d)});
  RnnState s{Eigen::MatrixXd(m, d), Eigen::VectorXd(m), Eigen::VectorXd(m)};
  const int half = m / 2;
  for (int i = 0; i < half; ++i) {
    for (int k = 0; k < d; ++k) s.U(i, k) = rng.gaussian();
    s.w(i) = gamma * rng.rademacher();
    s.c(i) = rng.rademacher();
  }
  for (int i = 0; i < half; ++i) {
    s.U.row(i + half) = s.U.row(i);
    s.w(i + half) = s.w(i);
    s.c(i + half) = -s.c(i);
  }
  return RnnParams::at_init(std::move(s), gamma);
}

double rnn_forward(const Eigen::MatrixXd& X, const RnnParams& params, const ActivationSpec& act) {
  check_input(X, params);
  const auto& s = params.state;
  const Eigen::MatrixXd drive = s.U * X;  // m×T
  Eigen::VectorXd h = Eigen::VectorXd::Zero(params.m());
  for (Eigen::Index t = 0; t < X.cols(); ++t) {
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = act.value(drive(i, t) + s.w(i) * h(i));
  }
  return s.c.dot(h) / std::sqrt(static_cast<double>(params.m()));
}

RnnGradient rnn_gradients(const Eigen::MatrixXd& X, const RnnParams& params, const ActivationSpec& act) {
  check_input(X, params);
  const auto& s = params.state;
  const Eigen::Index m = params.m();
  const Eigen::Index T = X.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  const Eigen::MatrixXd drive = s.U * X;

  // hidden(:, t) holds h_t for t = 0..T; slope(:, t-1) holds σ'(z_t)
  Eigen::MatrixXd hidden = Eigen::MatrixXd::Zero(m, T + 1);
  Eigen::MatrixXd slope(m, T);
  for (Eigen::Index t = 1; t <= T; ++t) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double z = drive(i, t - 1) + s.w(i) * hidden(i, t - 1);
      hidden(i, t) = act.value(z);
      slope(i, t - 1) = act.derivative(z);
    }
  }

  RnnGradient g{Eigen::MatrixXd::Zero(m, X.rows()), Eigen::VectorXd::Zero(m), hidden.col(T) * scale};
  Eigen::VectorXd delta = s.c * scale;  // ∂f/∂h_t
  for (Eigen::Index t = T; t >= 1; --t) {
    const Eigen::VectorXd gz = delta.cwiseProduct(slope.col(t - 1));
    g.dU.noalias() += gz * X.col(t - 1).transpose();
    g.dw += gz.cwiseProduct(hidden.col(t - 1));
    delta = gz.cwiseProduct(s.w);
  }
  return g;
}

RnnParams rnn_project(const RnnParams& params, const Radii& radii) {
  radii.validate();
  const RnnState& s0 = params.init_snapshot();
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.m()));
  const double ru = radii.rho_u * scale;
  const double rw = radii.rho_w * scale;
  const double rc = radii.rho_c * scale;
  RnnState s = params.state;
  for (Eigen::Index i = 0; i < s.U.rows(); ++i) {
    const double du = (s.U.row(i) - s0.U.row(i)).norm();
    if (du > ru * (1.0 + 1e-14)) s.U.row(i) = s0.U.row(i) + (s.U.row(i) - s0.U.row(i)) * (ru / du);
    s.w(i) = std::clamp(s.w(i), s0.w(i) - rw, s0.w(i) + rw);
    s.c(i) = std::clamp(s.c(i), s0.c(i) - rc, s0.c(i) + rc);
  }
  return params.with_state(std::move(s));
}

namespace {

constexpr std::uint32_t kRnnVersion = 1;

void write_state(std::ostream& out, const RnnState& s) {
  for (Eigen::Index i = 0; i < s.w.size(); ++i) {
    for (Eigen::Index k = 0; k < s.U.cols(); ++k) binio::write_f64(out, s.U(i, k));
    binio::write_f64(out, s.w(i));
    binio::write_f64(out, s.c(i));
  }
}

RnnState read_state(std::istream& in, std::uint32_t m, std::uint32_t d) {
  RnnState s{Eigen::MatrixXd(m, d), Eigen::VectorXd(m), Eigen::VectorXd(m)};
  for (std::uint32_t i = 0; i < m; ++i) {
    for (std::uint32_t k = 0; k < d; ++k) s.U(i, k) = binio::read_f64(in);
    s.w(i) = binio::read_f64(in);
    s.c(i) = binio::read_f64(in);
  }
  return s;
}

}  // namespace

void save_rnn_params(std::ostream& out, const RnnParams& params) {
  out.write("KRLR", 4);
  binio::write_u32(out, kRnnVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(params.m()));
  binio::write_u32(out, static_cast<std::uint32_t>(params.d()));
  binio::write_f64(out, params.gamma());
  write_state(out, params.state);
  write_state(out, params.init_snapshot());
}

RnnParams load_rnn_params(std::istream& in) {
  binio::expect_magic(in, "KRLR");
  if (binio::read_u32(in) != kRnnVersion) throw std::runtime_error("KRLR: unsupported version");
  const auto m = binio::read_u32(in);
  const auto d = binio::read_u32(in);
  const double gamma = binio::read_f64(in);
  RnnState current = read_state(in, m, d);
  RnnParams p = RnnParams::at_init(read_state(in, m, d), gamma);
  return p.with_state(std::move(current));
}

}  // namespace krlab
