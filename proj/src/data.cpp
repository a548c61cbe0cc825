#include "krlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "krlab/numerics.hpp"
#include "krlab/params.hpp"

namespace krlab {

void Dataset::validate() const {
  if (inputs.size() != labels.size()) throw std::invalid_argument("dataset: inputs and labels differ in length");
  if (inputs.empty()) return;
  const int d = inputs.front().d();
  const int T = inputs.front().T();
  const auto policy = inputs.front().policy();
  for (const auto& x : inputs) {
    if (x.d() != d || x.T() != T || x.policy() != policy)
      throw std::invalid_argument("dataset: inputs must share d, T and query policy");
  }
}

std::vector<TokenSequence> gaussian_sequences(int n, int d, int T, std::uint64_t seed, std::uint64_t tag) {
  if (n < 1 || d < 1 || T < 1) throw std::invalid_argument("gaussian_sequences: n, d, T must be positive");
  std::vector<TokenSequence> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    Stream rng(seed, {tag, static_cast<std::uint64_t>(j)});
    Eigen::MatrixXd X(d, T);
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < d; ++k) X(k, t) = rng.gaussian();
    out[static_cast<std::size_t>(j)] = TokenSequence::last_token(numerics::clip_token_norms(std::move(X)));
  }
  return out;
}

Eigen::MatrixXd positional_channels(int T, int d_pos) {
  if (T < 1 || d_pos < 1) throw std::invalid_argument("positional_channels: T and d_pos must be positive");
  Eigen::MatrixXd P(2 * d_pos, T);
  for (int k = 0; k < d_pos; ++k) {
    const double omega = std::pow(1.0 / 10000.0, static_cast<double>(k) / d_pos);
    for (int t = 1; t <= T; ++t) {
      P(2 * k, t - 1) = std::sin(t * omega);
      P(2 * k + 1, t - 1) = std::cos(t * omega);
    }
  }
  return P;
}

int ar_burn_in(int L, double alpha) {
  // one AR(L) "period" spans L steps, so mixing time scales with L
  return static_cast<int>(std::ceil(100.0 / (1.0 - std::abs(alpha)))) * std::max(L, 1);
}

double ar_token_scale(const ArConfig& config) {
  return std::sqrt(config.scalar_cap * config.scalar_cap + config.d_pos);
}

namespace {

void check_ar(const ArConfig& c) {
  if (c.n < 1) throw std::invalid_argument("ar_sequences: n must be positive");
  if (c.L < 1) throw std::invalid_argument("ar_sequences: L must be >= 1");
  if (!(std::abs(c.alpha) < 1.0)) throw std::invalid_argument("ar_sequences: |alpha| must be < 1");
  if (!(c.noise_var >= 0.0)) throw std::invalid_argument("ar_sequences: noise_var must be >= 0");
  if (c.d_pos < 1) throw std::invalid_argument("ar_sequences: d_pos must be positive");
  if (!(c.scalar_cap > 0.0)) throw std::invalid_argument("ar_sequences: scalar cap must be positive");
}

}  // namespace

std::vector<std::vector<double>> ar_raw_windows(const ArConfig& config, ArSplit split) {
  check_ar(config);
  const int L = config.L;
  const int T = L + 1;
  const int burn = ar_burn_in(L, config.alpha);
  const double noise_sd = std::sqrt(config.noise_var);
  std::vector<std::vector<double>> windows(static_cast<std::size_t>(config.n));
#pragma omp parallel for schedule(static)
  for (int j = 0; j < config.n; ++j) {
    Stream rng(config.seed, {stream::kData, 0x4152u, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(j)});
    const int offset = static_cast<int>(rng.index(static_cast<std::size_t>(10 * L)));
    const int total = L + burn + offset + T + 1;
    std::vector<double> series(static_cast<std::size_t>(total));
    for (int t = 0; t < L; ++t) series[static_cast<std::size_t>(t)] = rng.gaussian();
    for (int t = L; t < total; ++t) {
      series[static_cast<std::size_t>(t)] =
          config.alpha * series[static_cast<std::size_t>(t - L)] + noise_sd * rng.gaussian();
    }
    windows[static_cast<std::size_t>(j)].assign(series.end() - (T + 1), series.end());
  }
  return windows;
}

Dataset ar_sequences(const ArConfig& config, ArSplit split) {
  const auto windows = ar_raw_windows(config, split);
  const int T = config.L + 1;
  const int d = 1 + 2 * config.d_pos;
  const Eigen::MatrixXd pos = positional_channels(T, config.d_pos);
  const double scale = ar_token_scale(config);

  Dataset data;
  data.meta = {d, T, config.n, config.seed, split == ArSplit::kTrain ? "ar" : "ar-validation"};
  data.inputs.reserve(windows.size());
  data.labels.reserve(windows.size());
  for (const auto& w : windows) {
    Eigen::MatrixXd X(d, T);
    for (int t = 0; t < T; ++t) {
      X(0, t) = std::clamp(w[static_cast<std::size_t>(t)], -config.scalar_cap, config.scalar_cap);
      X.block(1, t, 2 * config.d_pos, 1) = pos.col(t);
    }
    X /= scale;
    data.inputs.push_back(TokenSequence::last_token(std::move(X)));
    data.labels.push_back(w[static_cast<std::size_t>(T)]);
  }
  return data;
}

namespace {
constexpr std::uint32_t kDatasetVersion = 1;
}

void save_dataset(std::ostream& out, const Dataset& data) {
  data.validate();
  if (data.inputs.empty()) throw std::invalid_argument("save_dataset: empty dataset");
  const auto& first = data.inputs.front();
  out.write("KRDS", 4);
  binio::write_u32(out, kDatasetVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(data.size()));
  binio::write_u32(out, static_cast<std::uint32_t>(first.d()));
  binio::write_u32(out, static_cast<std::uint32_t>(first.T()));
  binio::write_u32(out, static_cast<std::uint32_t>(first.policy()));
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& x = data.inputs[j];
    for (int r = 0; r < x.d(); ++r)
      for (int t = 0; t < x.T(); ++t) binio::write_f64(out, x.X()(r, t));
    for (int r = 0; r < x.d(); ++r) binio::write_f64(out, x.q()(r));
    binio::write_f64(out, data.labels[j]);
  }
}

Dataset load_dataset(std::istream& in) {
  binio::expect_magic(in, "KRDS");
  if (binio::read_u32(in) != kDatasetVersion) throw std::runtime_error("KRDS: unsupported version");
  const auto n = binio::read_u32(in);
  const auto d = binio::read_u32(in);
  const auto T = binio::read_u32(in);
  const auto policy = binio::read_u32(in);
  if (policy > 1) throw std::runtime_error("KRDS: unknown query policy");
  Dataset data;
  data.meta = {static_cast<int>(d), static_cast<int>(T), static_cast<int>(n), 0, "file"};
  for (std::uint32_t j = 0; j < n; ++j) {
    Eigen::MatrixXd X(d, T);
    for (std::uint32_t r = 0; r < d; ++r)
      for (std::uint32_t t = 0; t < T; ++t) X(r, t) = binio::read_f64(in);
    Eigen::VectorXd q(d);
    for (std::uint32_t r = 0; r < d; ++r) q(r) = binio::read_f64(in);
    const double y = binio::read_f64(in);
    if (static_cast<QueryPolicy>(policy) == QueryPolicy::kLastToken) {
      data.inputs.push_back(TokenSequence::last_token(std::move(X)));
    } else {
      data.inputs.push_back(TokenSequence::fixed_query(std::move(X), std::move(q)));
    }
    data.labels.push_back(y);
  }
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  save_dataset(out, data);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_dataset(in);
}

}  // namespace krlab
