#include "krlab/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "krlab/rng.hpp"

namespace krlab {

namespace {

void check_heads(const HeadList& heads, int d) {
  if (d < 1) throw std::invalid_argument("ModelParams: d must be positive");
  if (heads.size() < 2 || heads.size() % 2 != 0)
    throw std::invalid_argument("ModelParams: width must be a positive even integer");
  for (const auto& h : heads) {
    if (h.U.size() != d || h.W.rows() != d || h.W.cols() != d)
      throw std::invalid_argument("ModelParams: head shape does not match d");
  }
}

void check_same_shape(const HeadList& a, const HeadList& b) {
  if (a.size() != b.size()) throw std::invalid_argument("parameter width mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].U.size() != b[i].U.size() || a[i].W.rows() != b[i].W.rows() || a[i].W.cols() != b[i].W.cols())
      throw std::invalid_argument("parameter shape mismatch");
  }
}

}  // namespace

ModelParams::ModelParams(HeadList heads_in, int d) : heads(std::move(heads_in)), d_(d) {
  check_heads(heads, d_);
}

ModelParams ModelParams::at_init(HeadList heads_in, int d) {
  ModelParams p(std::move(heads_in), d);
  p.snapshot_ = std::make_shared<const HeadList>(p.heads);
  return p;
}

const HeadList& ModelParams::init_snapshot() const {
  if (!snapshot_) throw InvalidState("parameters carry no initialization snapshot");
  return *snapshot_;
}

ModelParams ModelParams::with_heads(HeadList new_heads) const {
  ModelParams p(std::move(new_heads), d_);
  if (snapshot_) check_same_shape(p.heads, *snapshot_);
  p.snapshot_ = snapshot_;
  return p;
}

void Radii::validate() const {
  if (!(rho_c > 0.0 && rho_u > 0.0 && rho_w > 0.0))
    throw std::invalid_argument("radii must be strictly positive");
}

Neighborhood Neighborhood::around_init(const ModelParams& params, const Radii& radii) {
  radii.validate();
  params.init_snapshot();
  return {params.snapshot_ptr(), radii};
}

ModelParams symmetric_init(int m, int d, std::uint64_t seed) {
  if (m < 2 || m % 2 != 0) throw std::invalid_argument("symmetric_init: m must be even and >= 2");
  if (d < 1) throw std::invalid_argument("symmetric_init: d must be positive");
  Stream rng(seed, {stream::kInit, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(d)});
  HeadList heads(static_cast<std::size_t>(m));
  const int half = m / 2;
  for (int i = 0; i < half; ++i) {
    auto& h = heads[static_cast<std::size_t>(i)];
    h.W.resize(d, d);
    for (int r = 0; r < d; ++r)
      for (int col = 0; col < d; ++col) h.W(r, col) = rng.gaussian();
    h.U.resize(d);
    for (int k = 0; k < d; ++k) h.U(k) = rng.gaussian();
    h.c = rng.rademacher();
  }
  for (int i = 0; i < half; ++i) {
    auto& twin = heads[static_cast<std::size_t>(i + half)];
    twin = heads[static_cast<std::size_t>(i)];
    twin.c = -twin.c;
  }
  return ModelParams::at_init(std::move(heads), d);
}

ModelParams project(const ModelParams& params, const Neighborhood& nbhd) {
  if (!nbhd.center) throw InvalidState("project: neighborhood has no center");
  const HeadList& center = *nbhd.center;
  check_same_shape(params.heads, center);
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.m()));
  const double rc = nbhd.radii.rho_c * scale;
  const double ru = nbhd.radii.rho_u * scale;
  const double rw = nbhd.radii.rho_w * scale;

  HeadList out = params.heads;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& h = out[i];
    const auto& h0 = center[i];
    h.c = std::clamp(h.c, h0.c - rc, h0.c + rc);
    const double du = (h.U - h0.U).norm();
    if (du > ru * (1.0 + 1e-14)) h.U = h0.U + (h.U - h0.U) * (ru / du);
    const double dw = (h.W - h0.W).norm();
    if (dw > rw * (1.0 + 1e-14)) h.W = h0.W + (h.W - h0.W) * (rw / dw);
  }
  return params.with_heads(std::move(out));
}

bool in_neighborhood(const ModelParams& params, const Neighborhood& nbhd, double slack) {
  const HeadList& center = *nbhd.center;
  check_same_shape(params.heads, center);
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.m()));
  for (std::size_t i = 0; i < center.size(); ++i) {
    const auto& h = params.heads[i];
    const auto& h0 = center[i];
    if (std::abs(h.c - h0.c) > nbhd.radii.rho_c * scale + slack) return false;
    if ((h.U - h0.U).norm() > nbhd.radii.rho_u * scale + slack) return false;
    if ((h.W - h0.W).norm() > nbhd.radii.rho_w * scale + slack) return false;
  }
  return true;
}

EventU check_event_u(const ModelParams& params, double delta_prime, double rho_u) {
  if (!(delta_prime > 0.0 && delta_prime < 1.0))
    throw std::invalid_argument("check_event_u: delta_prime must lie in (0,1)");
  const auto& init = params.init_snapshot();
  const double m = static_cast<double>(params.m());
  const double threshold = std::sqrt(static_cast<double>(params.d())) + std::sqrt(2.0 * std::log(m / (2.0 * delta_prime)));
  double worst = 0.0;
  for (const auto& h : init) worst = std::max(worst, h.U.norm());
  return {worst <= threshold, threshold + rho_u / std::sqrt(m)};
}

LipschitzConstants lipschitz_constants(double B_U, const ActivationSpec& act) {
  if (!(B_U >= 0.0)) throw std::invalid_argument("lipschitz_constants: B_U must be nonnegative");
  const double base = 1.0 + B_U * B_U;
  return {act.sigma1 * std::sqrt(base), act.sigma2 * base + 8.0 * act.sigma1 * std::sqrt(base)};
}

Eigen::VectorXd flatten(const HeadList& heads) {
  Eigen::Index total = 0;
  for (const auto& h : heads) total += 1 + h.U.size() + h.W.size();
  Eigen::VectorXd v(total);
  Eigen::Index k = 0;
  for (const auto& h : heads) {
    v(k++) = h.c;
    for (Eigen::Index j = 0; j < h.U.size(); ++j) v(k++) = h.U(j);
    for (Eigen::Index r = 0; r < h.W.rows(); ++r)
      for (Eigen::Index col = 0; col < h.W.cols(); ++col) v(k++) = h.W(r, col);
  }
  return v;
}

namespace binio {

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

void write_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated binary file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("truncated binary file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

void expect_magic(std::istream& in, const char (&magic)[5]) {
  char b[4];
  if (!in.read(b, 4) || !std::equal(b, b + 4, magic)) throw std::runtime_error(std::string("bad magic, expected ") + magic);
}

}  // namespace binio

namespace {

constexpr std::uint32_t kParamsVersion = 1;

void write_heads(std::ostream& out, const HeadList& heads) {
  for (const auto& h : heads) {
    binio::write_f64(out, h.c);
    for (Eigen::Index j = 0; j < h.U.size(); ++j) binio::write_f64(out, h.U(j));
    for (Eigen::Index r = 0; r < h.W.rows(); ++r)
      for (Eigen::Index col = 0; col < h.W.cols(); ++col) binio::write_f64(out, h.W(r, col));
  }
}

HeadList read_heads(std::istream& in, std::uint32_t m, std::uint32_t d) {
  HeadList heads(m);
  for (auto& h : heads) {
    h.c = binio::read_f64(in);
    h.U.resize(d);
    for (std::uint32_t j = 0; j < d; ++j) h.U(j) = binio::read_f64(in);
    h.W.resize(d, d);
    for (std::uint32_t r = 0; r < d; ++r)
      for (std::uint32_t col = 0; col < d; ++col) h.W(r, col) = binio::read_f64(in);
  }
  return heads;
}

}  // namespace

void save_params(std::ostream& out, const ModelParams& params) {
  out.write("KRLB", 4);
  binio::write_u32(out, kParamsVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(params.m()));
  binio::write_u32(out, static_cast<std::uint32_t>(params.d()));
  write_heads(out, params.heads);
  write_heads(out, params.init_snapshot());
}

ModelParams load_params(std::istream& in) {
  binio::expect_magic(in, "KRLB");
  if (binio::read_u32(in) != kParamsVersion) throw std::runtime_error("KRLB: unsupported version");
  const auto m = binio::read_u32(in);
  const auto d = binio::read_u32(in);
  HeadList heads = read_heads(in, m, d);
  HeadList init = read_heads(in, m, d);
  ModelParams snapshot = ModelParams::at_init(std::move(init), static_cast<int>(d));
  return snapshot.with_heads(std::move(heads));
}

void save_params(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  save_params(out, params);
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_params(in);
}

}  // namespace krlab
