#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krlab/rng.hpp"
#include "krlab/transformer.hpp"

namespace krlab {

struct DatasetMeta {
  int d = 0;
  int T = 0;
  int n = 0;
  std::uint64_t seed = 0;
  std::string generator;
};

/// Inputs with scalar labels. All inputs share d, T and the query policy.
struct Dataset {
  std::vector<TokenSequence> inputs;
  std::vector<double> labels;
  DatasetMeta meta;

  std::size_t size() const { return inputs.size(); }
  /// Throws std::invalid_argument on size or shape inconsistencies.
  void validate() const;
};

/// Standard normal d×T matrices with token-wise clipping and q = X_T.
/// `tag` selects the substream family (training inputs vs. teacher anchors).
std::vector<TokenSequence> gaussian_sequences(int n, int d, int T, std::uint64_t seed,
                                              std::uint64_t tag = stream::kData);

/// Rows (2k, 2k+1) at column t−1 hold sin(t ω_k), cos(t ω_k), ω_k = 10000^{−k/d_pos}.
Eigen::MatrixXd positional_channels(int T, int d_pos);

struct ArConfig {
  int n = 0;
  int L = 1;
  double alpha = 0.9;
  double noise_var = 0.1;
  int d_pos = 8;
  std::uint64_t seed = 0;
  /// Scalar-channel cap applied before token normalization.
  double scalar_cap = 3.0;
};

enum class ArSplit : std::uint64_t { kTrain = 0, kValidation = 1 };

/// Windows of the raw process: values X_1..X_{T+1} with T = L + 1.
std::vector<std::vector<double>> ar_raw_windows(const ArConfig& config, ArSplit split = ArSplit::kTrain);

/// Number of burn-in steps simulated before the first window is read.
int ar_burn_in(int L, double alpha);

/// Common divisor applied to every augmented token: √(scalar_cap² + d_pos).
double ar_token_scale(const ArConfig& config);

/// AR(L) forecasting data: scalar channel stacked over positional channels,
/// tokens divided by ar_token_scale, q = last token, label = raw X_{T+1}.
Dataset ar_sequences(const ArConfig& config, ArSplit split = ArSplit::kTrain);

// "KRDS", u32 version, u32 n, u32 d, u32 T, u32 query policy; then per sample
// X (row-major f64), q (f64), y (f64). Little-endian.
void save_dataset(std::ostream& out, const Dataset& data);
Dataset load_dataset(std::istream& in);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace krlab
