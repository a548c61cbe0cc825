#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "krlab/activation.hpp"
#include "krlab/params.hpp"

namespace krlab {

/// The three trainable blocks of the independent RNN.
struct RnnState {
  Eigen::MatrixXd U;  ///< m×d input weights
  Eigen::VectorXd w;  ///< diagonal recurrent weights
  Eigen::VectorXd c;  ///< readout
};

/// IndRNN parameters with the scale γ used at initialization and an immutable init snapshot.
class RnnParams {
 public:
  RnnParams() = default;
  RnnParams(RnnState state, double gamma);
  static RnnParams at_init(RnnState state, double gamma);

  int m() const { return static_cast<int>(state.w.size()); }
  int d() const { return static_cast<int>(state.U.cols()); }
  double gamma() const { return gamma_; }

  bool has_snapshot() const { return snapshot_ != nullptr; }
  const RnnState& init_snapshot() const;
  RnnParams with_state(RnnState s) const;

  RnnState state;

 private:
  double gamma_ = 0.0;
  std::shared_ptr<const RnnState> snapshot_;
};

struct RnnGradient {
  Eigen::MatrixXd dU;
  Eigen::VectorXd dw;
  Eigen::VectorXd dc;
};

/// First half: U rows N(0, I), w ∈ {±γ}, c ∈ {±1}; second half mirrors with c negated.
RnnParams rnn_symmetric_init(int m, int d, double gamma, std::uint64_t seed);

/// h_0 = 0, h_t = σ(U X_t + w ⊙ h_{t−1}), output c^T h_T / √m.
double rnn_forward(const Eigen::MatrixXd& X, const RnnParams& params, const ActivationSpec& act);

/// Backpropagation through time over the stored hidden trajectory.
RnnGradient rnn_gradients(const Eigen::MatrixXd& X, const RnnParams& params, const ActivationSpec& act);

/// Row-wise ball for U, entrywise clamps for w and c, all of radius ρ/√m around init.
RnnParams rnn_project(const RnnParams& params, const Radii& radii);

// "KRLR", u32 version, u32 m, u32 d, f64 gamma, then per unit (U row, w, c),
// then the snapshot in the same per-unit layout.
void save_rnn_params(std::ostream& out, const RnnParams& params);
RnnParams load_rnn_params(std::istream& in);

}  // namespace krlab
