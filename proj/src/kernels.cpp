#include "krlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "krlab/numerics.hpp"

namespace krlab::kernels {

namespace {

using MapMat = Eigen::Map<Eigen::MatrixXd>;
using ConstMapMat = Eigen::Map<const Eigen::MatrixXd>;

void check_samples(std::span<const int> samples, int n) {
  if (samples.empty()) throw std::invalid_argument("empty sample list");
  for (int j : samples) {
    if (j < 0 || j >= n) throw std::out_of_range("sample index out of range");
  }
}

// d×nb matrix of the queries of the selected samples.
Eigen::MatrixXd gather_queries(const PackedBatch& batch, std::span<const int> samples) {
  Eigen::MatrixXd Q(batch.d, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t b = 0; b < samples.size(); ++b) {
    Q.col(static_cast<Eigen::Index>(b)) = Eigen::Map<const Eigen::VectorXd>(batch.query(samples[b]), batch.d);
  }
  return Q;
}

}  // namespace

PackedBatch PackedBatch::from(const Dataset& data) {
  data.validate();
  if (data.inputs.empty()) throw std::invalid_argument("PackedBatch: empty dataset");
  PackedBatch p;
  p.d = data.inputs.front().d();
  p.T = data.inputs.front().T();
  p.n = static_cast<int>(data.size());
  const std::size_t block = static_cast<std::size_t>(p.d) * p.T;
  p.tokens.resize(block * p.n);
  p.queries.resize(static_cast<std::size_t>(p.d) * p.n);
  p.labels = data.labels;
  for (int j = 0; j < p.n; ++j) {
    const auto& x = data.inputs[static_cast<std::size_t>(j)];
    std::copy(x.X().data(), x.X().data() + block, p.tokens.begin() + static_cast<std::ptrdiff_t>(block * j));
    std::copy(x.q().data(), x.q().data() + p.d, p.queries.begin() + static_cast<std::ptrdiff_t>(p.d) * j);
  }
  return p;
}

std::vector<int> all_indices(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

void head_features(const PackedBatch& batch, const HeadParams& head, const ActivationSpec& act,
                   std::span<const int> samples, bool with_covariance, HeadFeatureBlock& out) {
  const int d = batch.d;
  const int T = batch.T;
  const auto nb = samples.size();
  out.h.resize(nb);
  out.dsigma.resize(nb);
  out.a.assign(nb * d, 0.0);
  if (with_covariance) out.MU.assign(nb * d, 0.0);

  // W q for every selected sample at once
  const Eigen::MatrixXd WQ = head.W * gather_queries(batch, samples);
  const double* U = head.U.data();
  std::vector<double> z(static_cast<std::size_t>(T));

  // out.h holds the pre-activations until the batched activation below
  for (std::size_t b = 0; b < nb; ++b) {
    const double* x = batch.token_block(samples[b]);
    const double* wq = WQ.data() + b * d;
    for (int t = 0; t < T; ++t) {
      const double* xt = x + static_cast<std::size_t>(t) * d;
      double s = 0.0;
      for (int r = 0; r < d; ++r) s += xt[r] * wq[r];
      z[static_cast<std::size_t>(t)] = s;
    }
    numerics::softmax_inplace(z);

    double* a = out.a.data() + b * d;
    for (int t = 0; t < T; ++t) {
      const double* xt = x + static_cast<std::size_t>(t) * d;
      const double w = z[static_cast<std::size_t>(t)];
      for (int r = 0; r < d; ++r) a[r] += w * xt[r];
    }
    double u = 0.0;
    for (int r = 0; r < d; ++r) u += U[r] * a[r];
    out.h[b] = u;

    if (with_covariance) {
      double* mu = out.MU.data() + b * d;
      for (int t = 0; t < T; ++t) {
        const double* xt = x + static_cast<std::size_t>(t) * d;
        double p = 0.0;
        for (int r = 0; r < d; ++r) p += (xt[r] - a[r]) * U[r];
        p *= z[static_cast<std::size_t>(t)];
        for (int r = 0; r < d; ++r) mu[r] += p * (xt[r] - a[r]);
      }
    }
  }
  apply_activation(act, out.h.data(), out.h.data(), out.dsigma.data(), nb);
}

namespace {

// Samples per reduction block of the Transformer kernel.
constexpr std::size_t kSampleBlock = 64;

// Heads stacked for whole-model products: rows i·d..i·d+d−1 of W hold W_i,
// column i of U holds U_i.
struct HeadStack {
  Eigen::MatrixXd W;
  Eigen::MatrixXd U;
  Eigen::VectorXd c;

  explicit HeadStack(const ModelParams& p) {
    const int m = p.m();
    const int d = p.d();
    W.resize(static_cast<Eigen::Index>(m) * d, d);
    U.resize(d, m);
    c.resize(m);
    for (int i = 0; i < m; ++i) {
      const auto& h = p.heads[static_cast<std::size_t>(i)];
      W.middleRows(static_cast<Eigen::Index>(i) * d, d) = h.W;
      U.col(i) = h.U;
      c(i) = h.c;
    }
  }
};

// All heads on one sample.
struct SampleEval {
  Eigen::VectorXd wq;     // (m·d), W_i q in block i
  Eigen::MatrixXd alpha;  // T × m
  Eigen::MatrixXd a;      // d × m
  Eigen::MatrixXd xu;     // T × m
  Eigen::MatrixXd MU;     // d × m
  Eigen::VectorXd u, h, ds;

  void run(const double* x, const double* q, int d, int T, const HeadStack& s, const ActivationSpec& act,
           bool with_covariance) {
    const auto m = s.U.cols();
    const Eigen::Map<const Eigen::MatrixXd> X(x, d, T);
    const Eigen::Map<const Eigen::VectorXd> qv(q, d);
    wq.noalias() = s.W * qv;
    alpha.noalias() = X.transpose() * Eigen::Map<const Eigen::MatrixXd>(wq.data(), d, m);
    alpha.array().rowwise() -= alpha.colwise().maxCoeff().array();
    alpha = alpha.array().exp();
    alpha.array().rowwise() /= alpha.colwise().sum().array();
    a.noalias() = X * alpha;
    u = (s.U.array() * a.array()).colwise().sum().transpose();
    h.resize(m);
    ds.resize(m);
    apply_activation(act, u.data(), h.data(), ds.data(), static_cast<std::size_t>(m));
    if (with_covariance) {
      xu.noalias() = X.transpose() * s.U;
      xu.array() *= alpha.array();
      MU.noalias() = X * xu;
      MU -= a * u.asDiagonal();
    }
  }
};

struct TfPartial {
  double loss = 0.0;
  Eigen::VectorXd gc;
  Eigen::MatrixXd gU;
  Eigen::MatrixXd gW;
  Eigen::MatrixXd nW;
};

bool is_identity(std::span<const int> samples, int n) {
  if (samples.size() != static_cast<std::size_t>(n)) return false;
  for (std::size_t k = 0; k < samples.size(); ++k)
    if (samples[k] != static_cast<int>(k)) return false;
  return true;
}

}  // namespace

double TransformerBatch::loss(const ModelParams& params, const ActivationSpec& act, std::span<const int> samples,
                              ModelGradient* grad, double* attn_norm) {
  const PackedBatch& batch = *batch_;
  if (params.d() != batch.d) throw std::invalid_argument("TransformerBatch: dimension mismatch");
  check_samples(samples, batch.n);
  const int m = params.m();
  const int d = batch.d;
  const int T = batch.T;
  const auto nb = samples.size();
  const auto md = static_cast<Eigen::Index>(m) * d;
  const bool need_cov = grad != nullptr || attn_norm != nullptr;
  const HeadStack stack(params);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  const double inv_nb = 1.0 / static_cast<double>(nb);

  const auto blocks = static_cast<long>((nb + kSampleBlock - 1) / kSampleBlock);
  std::vector<TfPartial> part(static_cast<std::size_t>(blocks));

#pragma omp parallel for schedule(static)
  for (long blk = 0; blk < blocks; ++blk) {
    TfPartial& P = part[static_cast<std::size_t>(blk)];
    const std::size_t begin = static_cast<std::size_t>(blk) * kSampleBlock;
    const std::size_t end = std::min(nb, begin + kSampleBlock);
    const auto bs = static_cast<Eigen::Index>(end - begin);
    SampleEval ev;
    Eigen::MatrixXd MW, MN, Qb;
    if (grad != nullptr) {
      P.gc = Eigen::VectorXd::Zero(m);
      P.gU = Eigen::MatrixXd::Zero(d, m);
      MW.resize(md, bs);
    }
    if (attn_norm != nullptr) MN.resize(md, bs);
    if (need_cov) Qb.resize(d, bs);

    for (std::size_t k = begin; k < end; ++k) {
      const int j = samples[k];
      const auto col = static_cast<Eigen::Index>(k - begin);
      ev.run(batch.token_block(j), batch.query(j), d, T, stack, act, need_cov);
      const double r = scale * stack.c.dot(ev.h) - batch.labels[static_cast<std::size_t>(j)];
      P.loss += r * r;
      if (!need_cov) continue;
      Qb.col(col) = Eigen::Map<const Eigen::VectorXd>(batch.query(j), d);
      if (grad != nullptr) {
        const double w = 2.0 * r * inv_nb;
        P.gc += w * ev.h;
        const Eigen::VectorXd wd = w * ev.ds;
        P.gU.noalias() += ev.a * wd.asDiagonal();
        Eigen::Map<Eigen::MatrixXd>(MW.col(col).data(), d, m).noalias() = ev.MU * wd.asDiagonal();
      }
      if (attn_norm != nullptr) {
        const Eigen::VectorXd wd = inv_nb * ev.ds;
        Eigen::Map<Eigen::MatrixXd>(MN.col(col).data(), d, m).noalias() = ev.MU * wd.asDiagonal();
      }
    }
    if (grad != nullptr) P.gW.noalias() = MW * Qb.transpose();
    if (attn_norm != nullptr) P.nW.noalias() = MN * Qb.transpose();
  }

  double total = 0.0;
  for (const auto& P : part) total += P.loss;
  const double loss_value = total * inv_nb;

  if (grad != nullptr) {
    Eigen::VectorXd gc = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd gU = Eigen::MatrixXd::Zero(d, m);
    Eigen::MatrixXd gW = Eigen::MatrixXd::Zero(md, d);
    for (const auto& P : part) {
      gc += P.gc;
      gU += P.gU;
      gW += P.gW;
    }
    grad->heads.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      auto& g = grad->heads[static_cast<std::size_t>(i)];
      const double gate = scale * stack.c(i);
      g.c = scale * gc(i);
      g.U = gate * gU.col(i);
      g.W = gate * gW.middleRows(static_cast<Eigen::Index>(i) * d, d);
    }
  }
  if (attn_norm != nullptr) {
    Eigen::MatrixXd nW = Eigen::MatrixXd::Zero(md, d);
    for (const auto& P : part) nW += P.nW;
    double sq = 0.0;
    for (int i = 0; i < m; ++i) {
      const double gate = scale * stack.c(i);
      sq += gate * gate * nW.middleRows(static_cast<Eigen::Index>(i) * d, d).squaredNorm();
    }
    *attn_norm = std::sqrt(sq);
  }
  return loss_value;
}

std::vector<double> TransformerBatch::outputs(const ModelParams& params, const ActivationSpec& act,
                                              std::span<const int> samples) {
  const PackedBatch& batch = *batch_;
  if (params.d() != batch.d) throw std::invalid_argument("TransformerBatch: dimension mismatch");
  check_samples(samples, batch.n);
  const HeadStack stack(params);
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.m()));
  const auto nb = static_cast<long>(samples.size());
  std::vector<double> out(samples.size());
#pragma omp parallel
  {
    SampleEval ev;
#pragma omp for schedule(static)
    for (long k = 0; k < nb; ++k) {
      const int j = samples[static_cast<std::size_t>(k)];
      ev.run(batch.token_block(j), batch.query(j), batch.d, batch.T, stack, act, false);
      out[static_cast<std::size_t>(k)] = scale * stack.c.dot(ev.h);
    }
  }
  return out;
}

Eigen::Map<const Eigen::MatrixXd> RnnBatch::tokens(std::size_t nb) const {
  const auto cols = static_cast<Eigen::Index>(nb) * batch_->T;
  if (gathered_) return {gather_.data(), batch_->d, cols};
  return {batch_->tokens.data(), batch_->d, cols};
}

void RnnBatch::forward_units(const RnnParams& params, const ActivationSpec& act, std::span<const int> samples) {
  const PackedBatch& batch = *batch_;
  const int m = params.m();
  const int d = batch.d;
  const int T = batch.T;
  const auto nb = samples.size();
  const auto N = static_cast<Eigen::Index>(nb);
  const auto& s = params.state;

  gathered_ = !is_identity(samples, batch.n);
  if (gathered_) {
    gather_.resize(d, N * T);
    for (std::size_t b = 0; b < nb; ++b)
      gather_.middleCols(static_cast<Eigen::Index>(b) * T, T) =
          Eigen::Map<const Eigen::MatrixXd>(batch.token_block(samples[b]), d, T);
  }
  // input drive of every unit at every (sample, time), row b·T + t
  const Eigen::MatrixXd drive = tokens(nb).transpose() * s.U.transpose();

  hidden_.resize(N * (T + 1), m);
  slope_.resize(N * T, m);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* hid = hidden_.col(i).data();
    double* slp = slope_.col(i).data();
    const double* dr = drive.col(i).data();
    const double w = s.w(i);
    std::vector<double> z(nb);
    std::fill(hid, hid + nb, 0.0);
    for (int t = 0; t < T; ++t) {
      const double* prev = hid + static_cast<std::size_t>(t) * nb;
      for (std::size_t b = 0; b < nb; ++b) z[b] = dr[b * T + t] + w * prev[b];
      apply_activation(act, z.data(), hid + static_cast<std::size_t>(t + 1) * nb, slp + static_cast<std::size_t>(t) * nb,
                       nb);
    }
  }
}

double RnnBatch::loss(const RnnParams& params, const ActivationSpec& act, std::span<const int> samples,
                      RnnGradient* grad, double* rec_norm) {
  const PackedBatch& batch = *batch_;
  if (params.d() != batch.d) throw std::invalid_argument("RnnBatch: dimension mismatch");
  check_samples(samples, batch.n);
  forward_units(params, act, samples);
  const int m = params.m();
  const int T = batch.T;
  const auto nb = samples.size();
  const auto N = static_cast<Eigen::Index>(nb);
  const auto& s = params.state;
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));

  const Eigen::VectorXd f = scale * (hidden_.middleRows(N * T, N) * s.c);
  std::vector<double> resid(nb);
  double total = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    const double r = f(static_cast<Eigen::Index>(b)) - batch.labels[static_cast<std::size_t>(samples[b])];
    resid[b] = r;
    total += r * r;
  }
  const double inv_nb = 1.0 / static_cast<double>(nb);
  const double loss_value = total * inv_nb;
  if (grad == nullptr && rec_norm == nullptr) return loss_value;

  Eigen::MatrixXd G;  // loss-weighted ∂f/∂z at row b·T + t
  if (grad != nullptr) {
    G.resize(N * T, m);
    grad->dw = Eigen::VectorXd::Zero(m);
    grad->dc = Eigen::VectorXd::Zero(m);
  }
  std::vector<double> rec(static_cast<std::size_t>(m), 0.0);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* hid = hidden_.col(i).data();
    const double* slp = slope_.col(i).data();
    const double w = s.w(i);
    std::vector<double> delta(nb, s.c(i) * scale);
    std::vector<double> dw_sample(nb, 0.0);
    for (int t = T; t >= 1; --t) {
      const double* sl = slp + static_cast<std::size_t>(t - 1) * nb;
      const double* hp = hid + static_cast<std::size_t>(t - 1) * nb;
      for (std::size_t b = 0; b < nb; ++b) {
        const double g = delta[b] * sl[b];
        if (grad != nullptr) G(static_cast<Eigen::Index>(b * T + t - 1), i) = 2.0 * resid[b] * inv_nb * g;
        dw_sample[b] += g * hp[b];
        delta[b] = g * w;
      }
    }
    double dw = 0.0, dc = 0.0, mean_dw = 0.0;
    const double* hT = hid + static_cast<std::size_t>(T) * nb;
    for (std::size_t b = 0; b < nb; ++b) {
      const double weight = 2.0 * resid[b] * inv_nb;
      dw += weight * dw_sample[b];
      dc += weight * hT[b] * scale;
      mean_dw += dw_sample[b] * inv_nb;
    }
    if (grad != nullptr) {
      grad->dw(i) = dw;
      grad->dc(i) = dc;
    }
    rec[static_cast<std::size_t>(i)] = mean_dw * mean_dw;
  }
  if (grad != nullptr) grad->dU.noalias() = G.transpose() * tokens(nb).transpose();
  if (rec_norm != nullptr) *rec_norm = std::sqrt(std::accumulate(rec.begin(), rec.end(), 0.0));
  return loss_value;
}

std::vector<double> RnnBatch::outputs(const RnnParams& params, const ActivationSpec& act, std::span<const int> samples) {
  const PackedBatch& batch = *batch_;
  if (params.d() != batch.d) throw std::invalid_argument("RnnBatch: dimension mismatch");
  check_samples(samples, batch.n);
  forward_units(params, act, samples);
  const auto N = static_cast<Eigen::Index>(samples.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.m()));
  const Eigen::VectorXd f = scale * (hidden_.middleRows(N * batch.T, N) * params.state.c);
  return {f.data(), f.data() + f.size()};
}

double reference_loss(const ModelParams& params, const Dataset& data, const ActivationSpec& act, ModelGradient* grad) {
  if (data.size() == 0) throw std::invalid_argument("reference_loss: empty dataset");
  const double inv_n = 1.0 / static_cast<double>(data.size());
  double total = 0.0;
  if (grad != nullptr) {
    grad->heads = params.heads;
    for (auto& h : grad->heads) {
      h.c = 0.0;
      h.U.setZero();
      h.W.setZero();
    }
  }
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto fg = forward_and_gradients(data.inputs[j], params, act);
    const double r = fg.value - data.labels[j];
    total += r * r;
    if (grad != nullptr) {
      const double w = 2.0 * r * inv_n;
      for (std::size_t i = 0; i < grad->heads.size(); ++i) {
        grad->heads[i].c += w * fg.gradient.heads[i].c;
        grad->heads[i].U += w * fg.gradient.heads[i].U;
        grad->heads[i].W += w * fg.gradient.heads[i].W;
      }
    }
  }
  return total * inv_n;
}

double reference_rnn_loss(const RnnParams& params, const Dataset& data, const ActivationSpec& act, RnnGradient* grad) {
  if (data.size() == 0) throw std::invalid_argument("reference_rnn_loss: empty dataset");
  const double inv_n = 1.0 / static_cast<double>(data.size());
  const int m = params.m();
  double total = 0.0;
  if (grad != nullptr) *grad = RnnGradient{Eigen::MatrixXd::Zero(m, params.d()), Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m)};
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double r = rnn_forward(data.inputs[j].X(), params, act) - data.labels[j];
    total += r * r;
    if (grad != nullptr) {
      const auto g = rnn_gradients(data.inputs[j].X(), params, act);
      const double w = 2.0 * r * inv_n;
      grad->dU += w * g.dU;
      grad->dw += w * g.dw;
      grad->dc += w * g.dc;
    }
  }
  return total * inv_n;
}

}  // namespace krlab::kernels
