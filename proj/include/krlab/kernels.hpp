#pragma once

#include <span>
#include <vector>

#include "krlab/activation.hpp"
#include "krlab/data.hpp"
#include "krlab/indrnn.hpp"
#include "krlab/params.hpp"
#include "krlab/transformer.hpp"

// Batched evaluation over a whole dataset.
//
// The per-sample functions in transformer.hpp / indrnn.hpp are the serial
// reference. The kernels here evaluate many samples with dense products and
// OpenMP; work is split into fixed blocks (of samples or recurrent units) and
// every cross-block reduction runs afterwards in block order, so results are
// bit-identical for any thread count.

namespace krlab::kernels {

/// Contiguous copy of a dataset: sample j owns a d×T column-major token block,
/// a d-vector query and a label.
struct PackedBatch {
  int d = 0;
  int T = 0;
  int n = 0;
  std::vector<double> tokens;
  std::vector<double> queries;
  std::vector<double> labels;

  static PackedBatch from(const Dataset& data);

  const double* token_block(int j) const { return tokens.data() + static_cast<std::size_t>(j) * d * T; }
  const double* query(int j) const { return queries.data() + static_cast<std::size_t>(j) * d; }
};

/// All sample indices 0..n−1.
std::vector<int> all_indices(int n);

/// Per-sample features of one head over a list of samples. Arrays are indexed
/// by position in the sample list; `a` and `MU` hold d entries per sample.
struct HeadFeatureBlock {
  std::vector<double> h;
  std::vector<double> dsigma;
  std::vector<double> a;
  std::vector<double> MU;
};

void head_features(const PackedBatch& batch, const HeadParams& head, const ActivationSpec& act,
                   std::span<const int> samples, bool with_covariance, HeadFeatureBlock& out);

/// Loss, gradient and attention-Jacobian telemetry for the Transformer.
///
/// Samples are processed in fixed blocks; each block evaluates all heads of a
/// sample with dense products and the block partials are summed in block order.
class TransformerBatch {
 public:
  explicit TransformerBatch(const PackedBatch& batch) : batch_(&batch) {}

  /// Mean squared error over `samples`. When `grad` is non-null it receives the
  /// loss gradient; when `attn_norm` is non-null it receives the Frobenius norm
  /// of the sample-mean ∇_W f stacked over heads.
  double loss(const ModelParams& params, const ActivationSpec& act, std::span<const int> samples,
              ModelGradient* grad = nullptr, double* attn_norm = nullptr);

  std::vector<double> outputs(const ModelParams& params, const ActivationSpec& act, std::span<const int> samples);

 private:
  const PackedBatch* batch_;
};

/// Same contract for the IndRNN; `rec_norm` is the 2-norm of the sample-mean ∇_w f.
class RnnBatch {
 public:
  explicit RnnBatch(const PackedBatch& batch) : batch_(&batch) {}

  double loss(const RnnParams& params, const ActivationSpec& act, std::span<const int> samples,
              RnnGradient* grad = nullptr, double* rec_norm = nullptr);

  std::vector<double> outputs(const RnnParams& params, const ActivationSpec& act, std::span<const int> samples);

 private:
  // Fills tokens_, hidden_ and slope_ for the selected samples.
  void forward_units(const RnnParams& params, const ActivationSpec& act, std::span<const int> samples);
  Eigen::Map<const Eigen::MatrixXd> tokens(std::size_t nb) const;

  const PackedBatch* batch_;
  bool gathered_ = false;
  Eigen::MatrixXd gather_;  // d × (nb·T) when the samples are not 0..n−1
  Eigen::MatrixXd hidden_;  // ((T+1)·nb) × m, time-major per unit
  Eigen::MatrixXd slope_;   // (T·nb) × m
};

/// Serial reference: loss and gradient by summing per-sample reference gradients.
double reference_loss(const ModelParams& params, const Dataset& data, const ActivationSpec& act,
                      ModelGradient* grad = nullptr);
double reference_rnn_loss(const RnnParams& params, const Dataset& data, const ActivationSpec& act,
                          RnnGradient* grad = nullptr);

}  // namespace krlab::kernels
