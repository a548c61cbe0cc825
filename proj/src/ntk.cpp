#include "krlab/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "krlab/rng.hpp"

namespace krlab {

namespace {

// Samples per Monte-Carlo block; each block owns one substream.
constexpr long long kMcBlock = 4096;

struct BlockTerms {
  double c = 0.0;
  double u = 0.0;
  double w = 0.0;
};

BlockTerms head_terms(const TokenSequence& X, const TokenSequence& Xp, const HeadParams& head, const ActivationSpec& act) {
  const HeadEval e = evaluate_head(X, head, act);
  const HeadEval ep = evaluate_head(Xp, head, act);
  const double gate = e.dsigma * ep.dsigma;
  return {e.h * ep.h, gate * e.a.dot(ep.a), gate * e.MU.dot(ep.MU) * X.q().dot(Xp.q())};
}

void check_pair(const TokenSequence& X, const TokenSequence& Xp) {
  if (X.d() != Xp.d()) throw std::invalid_argument("ntk: inputs differ in token dimension");
}

}  // namespace

KernelEstimate empirical_ntk(const TokenSequence& X, const TokenSequence& Xp, const ModelParams& params,
                             const ActivationSpec& act) {
  check_pair(X, Xp);
  if (params.d() != X.d()) throw std::invalid_argument("empirical_ntk: dimension mismatch");
  const HeadList& init = params.init_snapshot();
  KernelEstimate k;
  for (const auto& head : init) {
    const BlockTerms t = head_terms(X, Xp, head, act);
    const double c2 = head.c * head.c;
    k.k_c += t.c;
    k.k_u += c2 * t.u;
    k.k_w += c2 * t.w;
  }
  const double inv_m = 1.0 / static_cast<double>(params.m());
  k.k_c *= inv_m;
  k.k_u *= inv_m;
  k.k_w *= inv_m;
  k.k_total = k.k_c + k.k_u + k.k_w;
  k.n_samples = 1;
  k.std_error = 0.0;
  return k;
}

KernelEstimate mc_kernel(const TokenSequence& X, const TokenSequence& Xp, long long n_samples, std::uint64_t seed,
                         const ActivationSpec& act) {
  check_pair(X, Xp);
  if (n_samples < 2) throw std::invalid_argument("mc_kernel: need at least two samples");
  const int d = X.d();
  const long long blocks = (n_samples + kMcBlock - 1) / kMcBlock;
  struct Partial {
    double c = 0.0, u = 0.0, w = 0.0, sq = 0.0;
  };
  std::vector<Partial> partial(static_cast<std::size_t>(blocks));

#pragma omp parallel for schedule(dynamic)
  for (long long blk = 0; blk < blocks; ++blk) {
    Stream rng(seed, {stream::kMonteCarlo, static_cast<std::uint64_t>(blk)});
    Partial acc;
    HeadParams head;
    head.W.resize(d, d);
    head.U.resize(d);
    const long long end = std::min(n_samples, (blk + 1) * kMcBlock);
    for (long long s = blk * kMcBlock; s < end; ++s) {
      for (int r = 0; r < d; ++r)
        for (int col = 0; col < d; ++col) head.W(r, col) = rng.gaussian();
      for (int k = 0; k < d; ++k) head.U(k) = rng.gaussian();
      const BlockTerms t = head_terms(X, Xp, head, act);
      const double total = t.c + t.u + t.w;
      acc.c += t.c;
      acc.u += t.u;
      acc.w += t.w;
      acc.sq += total * total;
    }
    partial[static_cast<std::size_t>(blk)] = acc;
  }

  Partial sum;
  for (const auto& p : partial) {
    sum.c += p.c;
    sum.u += p.u;
    sum.w += p.w;
    sum.sq += p.sq;
  }
  const double n = static_cast<double>(n_samples);
  KernelEstimate k;
  k.k_c = sum.c / n;
  k.k_u = sum.u / n;
  k.k_w = sum.w / n;
  k.k_total = k.k_c + k.k_u + k.k_w;
  k.n_samples = n_samples;
  const double mean = (sum.c + sum.u + sum.w) / n;
  const double var = std::max(0.0, (sum.sq - n * mean * mean) / (n - 1.0));
  k.std_error = std::sqrt(var / n);
  return k;
}

}  // namespace krlab
