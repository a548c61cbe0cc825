#include "krlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "krlab/kernels.hpp"
#include "krlab/rng.hpp"

namespace krlab {

int TrainConfig::resolved_record_every() const {
  return record_every > 0 ? record_every : std::max(1, steps / 200);
}

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
  if (!(step_size > 0.0)) throw std::invalid_argument("TrainConfig: step size must be positive");
  if (record_every < 0) throw std::invalid_argument("TrainConfig: record_every must be >= 0");
  if (radii) radii->validate();
}

namespace {

struct TransformerPolicy {
  using Params = ModelParams;
  using Gradient = ModelGradient;
  using Batch = kernels::TransformerBatch;

  static void descend(Params& p, const Gradient& g, double eta) {
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
      p.heads[i].c -= eta * g.heads[i].c;
      p.heads[i].U -= eta * g.heads[i].U;
      p.heads[i].W -= eta * g.heads[i].W;
    }
  }

  static Params project(const Params& p, const Radii& r) { return krlab::project(p, Neighborhood::around_init(p, r)); }

  static double grad_bound(const Params& p, const ActivationSpec& act) {
    double c = 0.0;
    double u = 0.0;
    for (const auto& h : p.heads) {
      c = std::max(c, std::abs(h.c));
      u = std::max(u, h.U.norm());
    }
    return act.sigma1 * c * u;
  }

  // avg += weight * (p - avg)
  static void blend(Params& avg, const Params& p, double weight) {
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
      avg.heads[i].c += weight * (p.heads[i].c - avg.heads[i].c);
      avg.heads[i].U += weight * (p.heads[i].U - avg.heads[i].U);
      avg.heads[i].W += weight * (p.heads[i].W - avg.heads[i].W);
    }
  }
};

struct RnnPolicy {
  using Params = RnnParams;
  using Gradient = RnnGradient;
  using Batch = kernels::RnnBatch;

  static void descend(Params& p, const Gradient& g, double eta) {
    p.state.U -= eta * g.dU;
    p.state.w -= eta * g.dw;
    p.state.c -= eta * g.dc;
  }

  static Params project(const Params& p, const Radii& r) { return rnn_project(p, r); }

  static double grad_bound(const Params&, const ActivationSpec&) { return 0.0; }

  static void blend(Params& avg, const Params& p, double weight) {
    avg.state.U += weight * (p.state.U - avg.state.U);
    avg.state.w += weight * (p.state.w - avg.state.w);
    avg.state.c += weight * (p.state.c - avg.state.c);
  }
};

template <class Policy>
RunRecordOf<typename Policy::Params> descent(const typename Policy::Params& init, const Dataset& data,
                                             const TrainConfig& config, const ActivationSpec& act,
                                             const Dataset* validation) {
  config.validate();
  if (data.size() == 0) throw std::invalid_argument("training: empty dataset");
  const auto packed = kernels::PackedBatch::from(data);
  typename Policy::Batch batch(packed);
  const auto all = kernels::all_indices(packed.n);

  std::optional<kernels::PackedBatch> val_packed;
  if (validation != nullptr && validation->size() > 0) val_packed = kernels::PackedBatch::from(*validation);
  std::optional<typename Policy::Batch> val_batch;
  if (val_packed) val_batch.emplace(*val_packed);
  const auto val_all = val_packed ? kernels::all_indices(val_packed->n) : std::vector<int>{};

  const bool stochastic = config.batch_mode == BatchMode::kSingleSample;
  const int every = config.resolved_record_every();
  Stream sampler(config.seed, {stream::kSgd});

  typename Policy::Params phi = init;
  typename Policy::Params avg = init;
  typename Policy::Gradient grad;
  RunRecordOf<typename Policy::Params> rec;

  for (int s = 0; s < config.steps; ++s) {
    const bool record = s % every == 0;
    double loss = 0.0;
    double norm = 0.0;
    if (!stochastic) {
      loss = batch.loss(phi, act, all, &grad, record ? &norm : nullptr);
    } else {
      const int pick[1] = {static_cast<int>(sampler.index(static_cast<std::size_t>(packed.n)))};
      batch.loss(phi, act, pick, &grad, nullptr);
      if (record) loss = batch.loss(phi, act, all, nullptr, &norm);
    }
    if (record) {
      rec.steps.push_back(s);
      rec.losses.push_back(loss);
      rec.grad_norms.push_back(norm);
      rec.max_grad_bound = std::max(rec.max_grad_bound, Policy::grad_bound(phi, act));
      if (val_batch) rec.val_losses.push_back(val_batch->loss(phi, act, val_all));
    }
    if (s > 0) Policy::blend(avg, phi, 1.0 / static_cast<double>(s + 1));
    Policy::descend(phi, grad, config.step_size);
    if (config.radii) phi = Policy::project(phi, *config.radii);
  }

  rec.min_loss = *std::min_element(rec.losses.begin(), rec.losses.end());
  rec.max_grad_norm = *std::max_element(rec.grad_norms.begin(), rec.grad_norms.end());
  rec.min_val_loss = rec.val_losses.empty() ? std::numeric_limits<double>::quiet_NaN()
                                            : *std::min_element(rec.val_losses.begin(), rec.val_losses.end());
  rec.avg_iterate_loss = batch.loss(avg, act, all);
  rec.final_params = std::move(phi);
  return rec;
}

}  // namespace

double mse_loss(const ModelParams& params, const Dataset& data, const ActivationSpec& act) {
  if (data.size() == 0) throw std::invalid_argument("mse_loss: empty dataset");
  const auto packed = kernels::PackedBatch::from(data);
  kernels::TransformerBatch batch(packed);
  return batch.loss(params, act, kernels::all_indices(packed.n));
}

double rnn_mse_loss(const RnnParams& params, const Dataset& data, const ActivationSpec& act) {
  if (data.size() == 0) throw std::invalid_argument("rnn_mse_loss: empty dataset");
  const auto packed = kernels::PackedBatch::from(data);
  kernels::RnnBatch batch(packed);
  return batch.loss(params, act, kernels::all_indices(packed.n));
}

RunRecord run_projgd(const ModelParams& params, const Dataset& data, const TrainConfig& config,
                     const ActivationSpec& act, const Dataset* validation) {
  if (config.batch_mode != BatchMode::kFullBatch) throw std::invalid_argument("run_projgd: requires full-batch mode");
  return descent<TransformerPolicy>(params, data, config, act, validation);
}

RunRecord run_projsgd(const ModelParams& params, const Dataset& data, const TrainConfig& config,
                      const ActivationSpec& act, const Dataset* validation) {
  if (config.batch_mode != BatchMode::kSingleSample)
    throw std::invalid_argument("run_projsgd: requires single-sample mode");
  return descent<TransformerPolicy>(params, data, config, act, validation);
}

RnnRunRecord run_rnn_descent(const RnnParams& params, const Dataset& data, const TrainConfig& config,
                             const ActivationSpec& act, const Dataset* validation) {
  return descent<RnnPolicy>(params, data, config, act, validation);
}

double linearization_error(const ModelParams& params, const Dataset& data, const ActivationSpec& act) {
  params.init_snapshot();
  const int n = static_cast<int>(data.size());
  double worst = 0.0;
#pragma omp parallel for schedule(static) reduction(max : worst)
  for (int j = 0; j < n; ++j) {
    const auto& x = data.inputs[static_cast<std::size_t>(j)];
    worst = std::max(worst, std::abs(forward(x, params, act) - linearized_forward(x, params, act)));
  }
  return worst;
}

double approximation_error(const ModelParams& transported, const Dataset& data, const ActivationSpec& act) {
  transported.init_snapshot();
  const int n = static_cast<int>(data.size());
  double worst = 0.0;
#pragma omp parallel for schedule(static) reduction(max : worst)
  for (int j = 0; j < n; ++j) {
    const auto& x = data.inputs[static_cast<std::size_t>(j)];
    worst = std::max(worst, std::abs(linearized_forward(x, transported, act) - data.labels[static_cast<std::size_t>(j)]));
  }
  return worst;
}

double attention_grad_norm(const ModelParams& params, const Dataset& data, const ActivationSpec& act) {
  if (data.size() == 0) throw std::invalid_argument("attention_grad_norm: empty dataset");
  const auto packed = kernels::PackedBatch::from(data);
  kernels::TransformerBatch batch(packed);
  double norm = 0.0;
  batch.loss(params, act, kernels::all_indices(packed.n), nullptr, &norm);
  return norm;
}

double recurrent_grad_norm(const RnnParams& params, const Dataset& data, const ActivationSpec& act) {
  if (data.size() == 0) throw std::invalid_argument("recurrent_grad_norm: empty dataset");
  const auto packed = kernels::PackedBatch::from(data);
  kernels::RnnBatch batch(packed);
  double norm = 0.0;
  batch.loss(params, act, kernels::all_indices(packed.n), nullptr, &norm);
  return norm;
}

namespace {

Eigen::VectorXd unit_gaussian(Stream& rng, Eigen::Index size) {
  Eigen::VectorXd v(size);
  for (Eigen::Index k = 0; k < size; ++k) v(k) = rng.gaussian();
  return v / v.norm();
}

}  // namespace

ModelParams boundary_params(const ModelParams& params, const Radii& radii, std::uint64_t seed, BoundaryDirections mode) {
  radii.validate();
  const HeadList& init = params.init_snapshot();
  const int d = params.d();
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.m()));
  Stream rng(seed, {stream::kBoundary, static_cast<std::uint64_t>(params.m())});

  double sign = rng.rademacher();
  Eigen::VectorXd du = unit_gaussian(rng, d);
  Eigen::VectorXd dw = unit_gaussian(rng, static_cast<Eigen::Index>(d) * d);

  HeadList heads = init;
  for (auto& h : heads) {
    if (mode == BoundaryDirections::kIndependent) {
      sign = rng.rademacher();
      du = unit_gaussian(rng, d);
      dw = unit_gaussian(rng, static_cast<Eigen::Index>(d) * d);
    }
    h.c += sign * radii.rho_c * scale;
    h.U += radii.rho_u * scale * du;
    h.W += radii.rho_w * scale * Eigen::Map<const Eigen::MatrixXd>(dw.data(), d, d);
  }
  return params.with_heads(std::move(heads));
}

TheoreticalBounds theoretical_bounds(int d, int m, int n, const Radii& radii, const TransportCaps& nu, double delta,
                                     double delta_prime, const ActivationSpec& act) {
  if (!(delta > 0.0 && delta < 1.0) || !(delta_prime > 0.0 && delta_prime < 1.0))
    throw std::invalid_argument("theoretical_bounds: probabilities must lie in (0,1)");
  if (d < 1 || m < 2 || n < 1) throw std::invalid_argument("theoretical_bounds: d, m, n must be positive (m >= 2)");
  if (radii.rho_c < 0.0 || radii.rho_u < 0.0 || radii.rho_w < 0.0 || nu.c < 0.0 || nu.u < 0.0 || nu.w < 0.0)
    throw std::invalid_argument("theoretical_bounds: radii and caps must be nonnegative");

  const double sm = std::sqrt(static_cast<double>(m));
  TheoreticalBounds b;
  b.B_U = std::sqrt(static_cast<double>(d)) + std::sqrt(2.0 * std::log(m / (2.0 * delta_prime))) + radii.rho_u / sm;
  const auto L = lipschitz_constants(b.B_U, act);
  b.L1 = L.L1;
  b.L2 = L.L2;
  const double r_uw = std::hypot(radii.rho_u, radii.rho_w);
  const double rho_norm = std::sqrt(radii.rho_c * radii.rho_c + r_uw * r_uw);
  const double nu_norm = std::sqrt(nu.c * nu.c + nu.u * nu.u + nu.w * nu.w);

  b.B_lin = (b.L1 * radii.rho_c * r_uw + b.L2 * r_uw * r_uw) / sm;
  b.B_app = 2.0 * (act.sigma0 * nu.c + act.sigma1 * nu.u + act.sigma1 * nu.w) *
            std::sqrt(2.0 * std::log(2.0 * n / delta) / m);
  b.B_cof = ((b.L1 + b.L2) * r_uw + radii.rho_c * b.L1) * (nu_norm + rho_norm) / sm;
  b.A_m = act.sigma0 + (1.0 + radii.rho_c / sm) * b.L1;
  b.f_max = b.L1 * r_uw + act.sigma0 * radii.rho_c;
  b.y_max = act.sigma0 * nu.c + act.sigma1 * nu.u + act.sigma1 * std::sqrt(static_cast<double>(d)) * nu.w;
  b.B_grad = 4.0 * (b.f_max + b.y_max) * (b.f_max + b.y_max) * b.A_m * b.A_m;
  return b;
}

template <class Params>
void write_run_csv(const std::string& path, const RunRecordOf<Params>& record) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "step,loss,attn_grad_norm\n";
  char line[128];
  for (std::size_t k = 0; k < record.steps.size(); ++k) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", record.steps[k], record.losses[k], record.grad_norms[k]);
    out << line;
  }
}

template void write_run_csv<ModelParams>(const std::string&, const RunRecordOf<ModelParams>&);
template void write_run_csv<RnnParams>(const std::string&, const RunRecordOf<RnnParams>&);

std::string run_csv_name(const std::string& experiment, int m, std::uint64_t seed) {
  return "run_" + experiment + "_" + std::to_string(m) + "_" + std::to_string(seed) + ".csv";
}

}  // namespace krlab
