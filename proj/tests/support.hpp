#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "krlab/data.hpp"
#include "krlab/indrnn.hpp"
#include "krlab/params.hpp"
#include "krlab/rng.hpp"
#include "krlab/transformer.hpp"

namespace krlab::testing {

inline Stream test_stream(std::uint64_t a, std::uint64_t b = 0) { return Stream(0x5eed, {stream::kTest, a, b}); }

inline Eigen::MatrixXd gaussian_matrix(Stream& rng, int r, int c, double scale = 1.0) {
  Eigen::MatrixXd A(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) A(i, j) = scale * rng.gaussian();
  return A;
}

inline Eigen::VectorXd gaussian_vector(Stream& rng, int n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * rng.gaussian();
  return v;
}

/// Tokens uniform in direction with norms uniform in [0, 1].
inline TokenSequence random_sequence(Stream& rng, int d, int T) {
  Eigen::MatrixXd X = gaussian_matrix(rng, d, T);
  for (int t = 0; t < T; ++t) X.col(t) *= rng.uniform() / std::max(X.col(t).norm(), 1e-300);
  return TokenSequence::last_token(std::move(X));
}

inline HeadList random_heads(Stream& rng, int m, int d) {
  HeadList heads(static_cast<std::size_t>(m));
  for (auto& h : heads) {
    h.c = rng.gaussian();
    h.U = gaussian_vector(rng, d);
    h.W = gaussian_matrix(rng, d, d);
  }
  return heads;
}

/// Moves every entry of every head by `scale` times a standard normal draw.
inline HeadList perturb(Stream& rng, HeadList heads, double scale) {
  for (auto& h : heads) {
    h.c += scale * rng.gaussian();
    h.U += gaussian_vector(rng, static_cast<int>(h.U.size()), scale);
    h.W += gaussian_matrix(rng, static_cast<int>(h.W.rows()), static_cast<int>(h.W.cols()), scale);
  }
  return heads;
}

inline Dataset make_dataset(std::vector<TokenSequence> inputs, std::vector<double> labels) {
  Dataset data;
  data.meta = {inputs.front().d(), inputs.front().T(), static_cast<int>(inputs.size()), 0, "test"};
  data.inputs = std::move(inputs);
  data.labels = std::move(labels);
  return data;
}

inline double max_abs(const Eigen::MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace krlab::testing
