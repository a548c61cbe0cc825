#include "krlab/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "krlab/data.hpp"
#include "krlab/kernels.hpp"
#include "krlab/numerics.hpp"
#include "krlab/rng.hpp"

namespace krlab {

namespace {

// Pool heads are summed in blocks of this size; blocks are reduced in index order.
constexpr int kPoolBlock = 64;

HeadParams draw_pool_head(int d, std::uint64_t seed, int index) {
  Stream rng(seed, {stream::kPool, static_cast<std::uint64_t>(index)});
  HeadParams h;
  h.W.resize(d, d);
  for (int r = 0; r < d; ++r)
    for (int col = 0; col < d; ++col) h.W(r, col) = rng.gaussian();
  h.U.resize(d);
  for (int k = 0; k < d; ++k) h.U(k) = rng.gaussian();
  return h;
}

bool same_head(const HeadParams& a, const HeadParams& b) {
  return a.c == b.c && a.U == b.U && a.W == b.W;
}

}  // namespace

FeatureTriple feature_maps(const TokenSequence& X, const HeadParams& head, const ActivationSpec& act) {
  const HeadEval e = evaluate_head(X, head, act);
  return {e.h, e.dsigma * e.a, e.dsigma * e.MU * X.q().transpose()};
}

TransportMap make_anchor_map(int R, int d, int T, TransportCaps nu, const ActivationSpec& act, std::uint64_t seed) {
  if (R < 1) throw std::invalid_argument("make_anchor_map: need at least one anchor");
  return {gaussian_sequences(R, d, T, seed, stream::kAnchors), nu, act};
}

TransportValue evaluate_map(const TransportMap& map, const HeadParams& head) {
  if (map.anchors.empty()) throw std::invalid_argument("evaluate_map: transport map has no anchors");
  const auto d = head.U.size();
  TransportValue v{0.0, Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  const double sc = map.nu.c / map.act.sigma0;
  const double su = map.nu.u / map.act.sigma1;
  for (const auto& anchor : map.anchors) {
    const FeatureTriple f = feature_maps(anchor, head, map.act);
    v.v_c += sc * f.phi_c;
    v.v_u += su * f.phi_u;
    if (map.nu.w > 0.0) v.v_w += numerics::clip_frobenius(f.phi_w, map.nu.w);
  }
  const double inv_r = 1.0 / static_cast<double>(map.anchors.size());
  v.v_c *= inv_r;
  v.v_u *= inv_r;
  v.v_w *= inv_r;
  return v;
}

std::vector<double> generate_labels(const std::vector<TokenSequence>& inputs, const TransportMap& map, int pool_size,
                                    std::uint64_t seed) {
  if (pool_size < 1) throw std::invalid_argument("generate_labels: pool size must be >= 1");
  if (inputs.empty()) return {};
  Dataset shell;
  shell.inputs = inputs;
  shell.labels.assign(inputs.size(), 0.0);
  const auto batch = kernels::PackedBatch::from(shell);
  const auto samples = kernels::all_indices(batch.n);
  const int d = batch.d;
  const auto n = static_cast<std::size_t>(batch.n);

  const int blocks = (pool_size + kPoolBlock - 1) / kPoolBlock;
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(blocks));

#pragma omp parallel for schedule(dynamic)
  for (int blk = 0; blk < blocks; ++blk) {
    auto& acc = partial[static_cast<std::size_t>(blk)];
    acc.assign(n, 0.0);
    kernels::HeadFeatureBlock fb;
    const int end = std::min(pool_size, (blk + 1) * kPoolBlock);
    for (int i = blk * kPoolBlock; i < end; ++i) {
      const HeadParams head = draw_pool_head(d, seed, i);
      const TransportValue v = evaluate_map(map, head);
      kernels::head_features(batch, head, map.act, samples, true, fb);
      for (std::size_t b = 0; b < n; ++b) {
        const Eigen::Map<const Eigen::VectorXd> a(fb.a.data() + b * d, d);
        const Eigen::Map<const Eigen::VectorXd> mu(fb.MU.data() + b * d, d);
        const Eigen::Map<const Eigen::VectorXd> q(batch.query(static_cast<int>(b)), d);
        acc[b] += fb.h[b] * v.v_c + fb.dsigma[b] * (a.dot(v.v_u) + mu.dot(v.v_w * q));
      }
    }
  }

  std::vector<double> labels(n, 0.0);
  for (const auto& acc : partial)
    for (std::size_t b = 0; b < n; ++b) labels[b] += acc[b];
  const double inv = 1.0 / static_cast<double>(pool_size);
  for (double& y : labels) y *= inv;
  return labels;
}

ModelParams transported_params(const ModelParams& params, const TransportMap& map) {
  const HeadList& init = params.init_snapshot();
  for (std::size_t i = 0; i < init.size(); ++i) {
    if (!same_head(params.heads[i], init[i])) throw InvalidState("transported_params: parameters are not at initialization");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.m()));
  HeadList heads = init;
  for (auto& h : heads) {
    const TransportValue v = evaluate_map(map, h);
    const double c0 = h.c;
    h.c = c0 + scale * v.v_c;
    h.U += (c0 * scale) * v.v_u;
    h.W += (c0 * scale) * v.v_w;
  }
  return params.with_heads(std::move(heads));
}

}  // namespace krlab
