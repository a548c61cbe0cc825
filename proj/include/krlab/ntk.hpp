#pragma once

#include <cstdint>

#include "krlab/activation.hpp"
#include "krlab/params.hpp"
#include "krlab/transformer.hpp"

namespace krlab {

/// Kernel value split into the c, U and W blocks.
struct KernelEstimate {
  double k_c = 0.0;
  double k_u = 0.0;
  double k_w = 0.0;
  double k_total = 0.0;
  long long n_samples = 1;
  double std_error = 0.0;
};

/// Width-m kernel: block-wise ⟨∇f(X; φ⁰), ∇f(X'; φ⁰)⟩ at the init snapshot.
KernelEstimate empirical_ntk(const TokenSequence& X, const TokenSequence& Xp, const ModelParams& params,
                             const ActivationSpec& act);

/// Monte-Carlo estimate of the infinite-width kernel from `n_samples` i.i.d.
/// head draws; std_error is the standard error of the total.
KernelEstimate mc_kernel(const TokenSequence& X, const TokenSequence& Xp, long long n_samples, std::uint64_t seed,
                         const ActivationSpec& act);

}  // namespace krlab
