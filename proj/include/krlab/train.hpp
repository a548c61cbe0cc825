#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "krlab/activation.hpp"
#include "krlab/data.hpp"
#include "krlab/indrnn.hpp"
#include "krlab/params.hpp"
#include "krlab/teacher.hpp"
#include "krlab/transformer.hpp"

namespace krlab {

enum class BatchMode { kFullBatch, kSingleSample };

struct TrainConfig {
  int steps = 1;
  double step_size = 1.0;
  std::optional<Radii> radii;  ///< absent: no projection
  BatchMode batch_mode = BatchMode::kFullBatch;
  std::uint64_t seed = 0;
  int record_every = 0;  ///< 0 selects max(1, steps/200)

  int resolved_record_every() const;
  void validate() const;
};

/// Telemetry of one training run. Entry k of the per-record vectors belongs to
/// iterate `steps[k]`; losses are evaluated at that (post-projection) iterate.
template <class Params>
struct RunRecordOf {
  std::vector<int> steps;
  std::vector<double> losses;
  std::vector<double> grad_norms;  ///< attention (Transformer) or recurrent (IndRNN) Jacobian norm
  std::vector<double> val_losses;  ///< empty without a validation set
  double min_loss = 0.0;
  double min_val_loss = 0.0;
  double avg_iterate_loss = 0.0;  ///< loss at the running mean of iterates 0..τ−1
  double max_grad_norm = 0.0;
  /// Transformer: max over recorded iterates of σ1·max|c|·max‖U‖, which bounds
  /// the attention norm at every iterate. Zero for the IndRNN.
  double max_grad_bound = 0.0;
  Params final_params;
};

using RunRecord = RunRecordOf<ModelParams>;
using RnnRunRecord = RunRecordOf<RnnParams>;

/// (1/n) Σ (f(X_j) − y_j)². Throws std::invalid_argument on an empty dataset.
double mse_loss(const ModelParams& params, const Dataset& data, const ActivationSpec& act);
double rnn_mse_loss(const RnnParams& params, const Dataset& data, const ActivationSpec& act);

/// φ ← Π(φ − η ∇L̂_n(φ)) for τ steps. Requires full-batch mode.
RunRecord run_projgd(const ModelParams& params, const Dataset& data, const TrainConfig& config,
                     const ActivationSpec& act, const Dataset* validation = nullptr);

/// As run_projgd but each step descends on one uniformly sampled example.
RunRecord run_projsgd(const ModelParams& params, const Dataset& data, const TrainConfig& config,
                      const ActivationSpec& act, const Dataset* validation = nullptr);

/// Gradient descent for the IndRNN (full-batch or single-sample per config).
RnnRunRecord run_rnn_descent(const RnnParams& params, const Dataset& data, const TrainConfig& config,
                             const ActivationSpec& act, const Dataset* validation = nullptr);

/// sup_j |f(X_j; φ) − f_lin(X_j; φ)|.
double linearization_error(const ModelParams& params, const Dataset& data, const ActivationSpec& act);

/// sup_j |f_lin(X_j; φ̃) − y_j|.
double approximation_error(const ModelParams& transported, const Dataset& data, const ActivationSpec& act);

/// ‖(1/n) Σ_j ∇_W f(X_j; φ)‖_F with W stacked over heads.
double attention_grad_norm(const ModelParams& params, const Dataset& data, const ActivationSpec& act);

/// ‖(1/n) Σ_j ∇_w f_rnn(X_j)‖_2.
double recurrent_grad_norm(const RnnParams& params, const Dataset& data, const ActivationSpec& act);

/// How boundary displacements are oriented across heads.
enum class BoundaryDirections {
  kShared,       ///< one random direction per block, used by every head
  kIndependent,  ///< a fresh random direction per head and block
};

/// Parameters on the boundary of Ω_ρ: every head's c, U and W blocks are
/// displaced from init by exactly ρ_c/√m, ρ_u/√m and ρ_w/√m.
ModelParams boundary_params(const ModelParams& params, const Radii& radii, std::uint64_t seed,
                            BoundaryDirections mode = BoundaryDirections::kShared);

struct TheoreticalBounds {
  double B_U = 0.0;
  double L1 = 0.0;
  double L2 = 0.0;
  double B_lin = 0.0;
  double B_app = 0.0;
  double B_cof = 0.0;
  double A_m = 0.0;
  double B_grad = 0.0;
  double f_max = 0.0;
  double y_max = 0.0;
};

/// Evaluates the linearization, approximation, cross-term and gradient-norm
/// bounds for width m, sample count n, radii ρ and caps ν̄.
TheoreticalBounds theoretical_bounds(int d, int m, int n, const Radii& radii, const TransportCaps& nu, double delta,
                                     double delta_prime, const ActivationSpec& act);

/// CSV with header step,loss,attn_grad_norm.
template <class Params>
void write_run_csv(const std::string& path, const RunRecordOf<Params>& record);

/// run_{experiment}_{m}_{seed}.csv
std::string run_csv_name(const std::string& experiment, int m, std::uint64_t seed);

}  // namespace krlab
