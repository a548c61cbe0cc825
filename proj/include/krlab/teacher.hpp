#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "krlab/activation.hpp"
#include "krlab/params.hpp"
#include "krlab/transformer.hpp"

namespace krlab {

/// Random features of one head at one input: (σ(U^T a), σ'(U^T a) a, σ'(U^T a) (M U) q^T).
struct FeatureTriple {
  double phi_c = 0.0;
  Eigen::VectorXd phi_u;
  Eigen::MatrixXd phi_w;
};

/// Sup-norm caps ν̄ = (ν_c, ν_u, ν_w) of a transportation map.
struct TransportCaps {
  double c = 0.0;
  double u = 0.0;
  double w = 0.0;
};

/// Anchor-based transportation map: v(φ) = (1/R) Σ_r v^{(r)}(φ) where each
/// term rescales (c, u) features and Frobenius-clips the W feature at anchor r.
struct TransportMap {
  std::vector<TokenSequence> anchors;
  TransportCaps nu;
  ActivationSpec act;
};

struct TransportValue {
  double v_c = 0.0;
  Eigen::VectorXd v_u;
  Eigen::MatrixXd v_w;
};

FeatureTriple feature_maps(const TokenSequence& X, const HeadParams& head, const ActivationSpec& act);

/// Anchors drawn by the training-input pipeline on their own substream.
TransportMap make_anchor_map(int R, int d, int T, TransportCaps nu, const ActivationSpec& act, std::uint64_t seed);

/// |v_c| ≤ ν_c, ‖v_u‖ ≤ ν_u, ‖v_w‖_F ≤ ν_w by construction.
TransportValue evaluate_map(const TransportMap& map, const HeadParams& head);

/// Teacher labels as a Monte-Carlo average over a pool of `pool_size` unsigned
/// head draws (W, U standard normal).
std::vector<double> generate_labels(const std::vector<TokenSequence>& inputs, const TransportMap& map, int pool_size,
                                    std::uint64_t seed);

/// c̃ = c0 + v_c/√m, Ũ = U0 + c0 v_u/√m, W̃ = W0 + c0 v_w/√m, with v evaluated at each head's init.
/// Throws InvalidState unless `params` sits exactly at its snapshot.
ModelParams transported_params(const ModelParams& params, const TransportMap& map);

}  // namespace krlab
