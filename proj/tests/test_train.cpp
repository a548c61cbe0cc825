#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "krlab/activation.hpp"
#include "krlab/data.hpp"
#include "krlab/numerics.hpp"
#include "krlab/teacher.hpp"
#include "krlab/train.hpp"
#include "support.hpp"

namespace krlab {
namespace {

const ActivationSpec kTanh = tanh_activation();

struct Task {
  ModelParams init;
  Dataset data;
};

Task teacher_task(int m, int d, int T, int n, std::uint64_t seed) {
  auto inputs = gaussian_sequences(n, d, T, seed);
  const auto map = make_anchor_map(4, d, T, {3, 3, 3}, kTanh, seed);
  auto labels = generate_labels(inputs, map, 512, seed);
  return {symmetric_init(m, d, seed), testing::make_dataset(std::move(inputs), std::move(labels))};
}

TrainConfig gd(int steps, double eta) {
  TrainConfig c;
  c.steps = steps;
  c.step_size = eta;
  c.record_every = 1;
  return c;
}

double naive_mse(const ModelParams& p, const Dataset& data) {
  double s = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double r = forward(data.inputs[j], p, kTanh) - data.labels[j];
    s += r * r;
  }
  return s / data.size();
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.steps = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.steps = 10;
  c.step_size = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.step_size = 0.1;
  EXPECT_EQ(c.resolved_record_every(), 1);
  c.steps = 1000;
  EXPECT_EQ(c.resolved_record_every(), 5);
  c.record_every = 7;
  EXPECT_EQ(c.resolved_record_every(), 7);
}

TEST(MseLoss, Examples) {
  auto task = teacher_task(8, 3, 4, 10, 1);
  std::fill(task.data.labels.begin(), task.data.labels.end(), 0.0);
  EXPECT_EQ(mse_loss(task.init, task.data, kTanh), 0.0);

  // m = 2, T = 1: U chosen so h = 0.5, c = 2√2 on both heads gives f = 2
  Eigen::MatrixXd X(2, 1);
  X << 0.6, 0.0;
  const auto seq = TokenSequence::last_token(X);
  const Eigen::VectorXd U = Eigen::Vector2d(std::atanh(0.5) / 0.36 * 0.6, 0.0);
  const HeadParams h{2.0 * std::sqrt(2.0), U, Eigen::MatrixXd::Zero(2, 2)};
  const ModelParams p({h, h}, 2);
  ASSERT_NEAR(forward(seq, p, kTanh), 2.0, 1e-14);
  EXPECT_NEAR(mse_loss(p, testing::make_dataset({seq}, {1.0}), kTanh), 1.0, 1e-13);

  Dataset empty;
  EXPECT_THROW(mse_loss(p, empty, kTanh), std::invalid_argument);
}

TEST(MseLoss, MatchesNaiveSum) {
  auto rng = testing::test_stream(80);
  const auto task = teacher_task(8, 3, 5, 30, 2);
  const auto p = task.init.with_heads(testing::perturb(rng, task.init.heads, 0.3));
  EXPECT_NEAR(mse_loss(p, task.data, kTanh), naive_mse(p, task.data), 1e-13);
}

TEST(ProjGd, ZeroLabelsFixedPoint) {
  auto task = teacher_task(8, 3, 4, 10, 3);
  std::fill(task.data.labels.begin(), task.data.labels.end(), 0.0);
  auto cfg = gd(20, 0.5);
  cfg.radii = Radii{1, 1, 1};
  const auto rec = run_projgd(task.init, task.data, cfg, kTanh);
  EXPECT_EQ(flatten(rec.final_params.heads), flatten(task.init.heads));
  for (double l : rec.losses) EXPECT_EQ(l, 0.0);

  cfg.batch_mode = BatchMode::kSingleSample;
  const auto srec = run_projsgd(task.init, task.data, cfg, kTanh);
  EXPECT_EQ(flatten(srec.final_params.heads), flatten(task.init.heads));
}

TEST(ProjGd, SingleHandStep) {
  // m = 2, d = 1, T = 1, one sample: f = 0 at init, residual = −y
  Eigen::MatrixXd X(1, 1);
  X << 0.8;
  const auto seq = TokenSequence::last_token(X);
  const double y = 0.7, eta = 0.3;
  const auto init = symmetric_init(2, 1, 4);
  const auto data = testing::make_dataset({seq}, {y});
  const auto rec = run_projgd(init, data, gd(1, eta), kTanh);
  for (int i = 0; i < 2; ++i) {
    const auto& h0 = init.heads[i];
    const double z = h0.U(0) * 0.8;
    const double h = std::tanh(z), ds = 1.0 - h * h;
    const double r = 2.0 * (0.0 - y);  // d(loss)/df
    EXPECT_NEAR(rec.final_params.heads[i].c, h0.c - eta * r * h / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(rec.final_params.heads[i].U(0), h0.U(0) - eta * r * h0.c * ds * 0.8 / std::sqrt(2.0), 1e-15);
    EXPECT_EQ(rec.final_params.heads[i].W, h0.W);
  }
  EXPECT_NEAR(rec.losses[0], y * y, 1e-15);
}

TEST(ProjGd, IteratesStayInNeighborhood) {
  const auto task = teacher_task(8, 3, 4, 20, 5);
  const Radii r{0.2, 0.2, 0.2};
  const auto nb = Neighborhood::around_init(task.init, r);
  for (int steps = 1; steps <= 15; ++steps) {
    auto cfg = gd(steps, 1.0);
    cfg.radii = r;
    EXPECT_TRUE(in_neighborhood(run_projgd(task.init, task.data, cfg, kTanh).final_params, nb, 1e-12));
  }
}

TEST(ProjGd, TelemetryConsistency) {
  const auto task = teacher_task(8, 3, 4, 20, 6);
  auto cfg = gd(30, 0.5);
  cfg.record_every = 4;
  cfg.radii = Radii{3, 3, 3};
  const auto rec = run_projgd(task.init, task.data, cfg, kTanh);
  ASSERT_EQ(rec.steps.size(), 8u);
  EXPECT_EQ(rec.steps[0], 0);
  EXPECT_EQ(rec.steps[1], 4);
  for (double l : rec.losses) EXPECT_LE(rec.min_loss, l);
  double mean_sq = 0.0;
  for (double yv : task.data.labels) mean_sq += yv * yv / task.data.size();
  EXPECT_NEAR(rec.losses[0], mean_sq, 1e-14);
  EXPECT_TRUE(rec.val_losses.empty());
  EXPECT_THROW(run_projsgd(task.init, task.data, cfg, kTanh), std::invalid_argument);
  Dataset empty;
  EXPECT_THROW(run_projgd(task.init, empty, cfg, kTanh), std::invalid_argument);
}

TEST(ProjGd, AverageIterateIsParameterMean) {
  const auto task = teacher_task(6, 3, 4, 15, 7);
  auto cfg = gd(3, 0.8);
  cfg.radii = Radii{2, 2, 2};
  const auto rec = run_projgd(task.init, task.data, cfg, kTanh);
  std::vector<ModelParams> iterates{task.init};
  for (int s = 1; s < 3; ++s) {
    auto c = cfg;
    c.steps = s;
    iterates.push_back(run_projgd(task.init, task.data, c, kTanh).final_params);
  }
  HeadList avg = task.init.heads;
  for (std::size_t i = 0; i < avg.size(); ++i) {
    avg[i].c = 0;
    avg[i].U.setZero();
    avg[i].W.setZero();
    for (const auto& it : iterates) {
      avg[i].c += it.heads[i].c / 3.0;
      avg[i].U += it.heads[i].U / 3.0;
      avg[i].W += it.heads[i].W / 3.0;
    }
  }
  EXPECT_NEAR(rec.avg_iterate_loss, naive_mse(task.init.with_heads(avg), task.data), 1e-12);
}

TEST(ProjGd, ValidationTracked) {
  const auto task = teacher_task(6, 3, 4, 15, 8);
  const auto val = teacher_task(6, 3, 4, 9, 9).data;
  auto cfg = gd(10, 0.5);
  cfg.record_every = 3;
  const auto rec = run_projgd(task.init, task.data, cfg, kTanh, &val);
  ASSERT_EQ(rec.val_losses.size(), rec.losses.size());
  EXPECT_EQ(rec.min_val_loss, *std::min_element(rec.val_losses.begin(), rec.val_losses.end()));
}

TEST(ProjSgd, SingleSampleEqualsFullBatch) {
  const auto task = teacher_task(6, 3, 4, 1, 10);
  auto cfg = gd(25, 0.7);
  cfg.radii = Radii{1, 1, 1};
  const auto a = run_projgd(task.init, task.data, cfg, kTanh);
  cfg.batch_mode = BatchMode::kSingleSample;
  const auto b = run_projsgd(task.init, task.data, cfg, kTanh);
  EXPECT_EQ(flatten(a.final_params.heads), flatten(b.final_params.heads));
  EXPECT_EQ(a.losses, b.losses);
}

TEST(ProjSgd, ComparableToFullBatch) {
  const auto task = teacher_task(16, 3, 4, 20, 11);
  auto cfg = gd(200, 1.0 / std::sqrt(200.0));
  cfg.radii = Radii{3, 3, 3};
  const double full = run_projgd(task.init, task.data, cfg, kTanh).min_loss;
  cfg.batch_mode = BatchMode::kSingleSample;
  double mean = 0.0;
  for (int seed = 0; seed < 50; ++seed) {
    cfg.seed = seed;
    mean += run_projsgd(task.init, task.data, cfg, kTanh).min_loss / 50.0;
  }
  EXPECT_LE(mean, 2.0 * full);
  EXPECT_GE(mean, 0.5 * full);
}

TEST(ErrorMetrics, ZeroCases) {
  const auto task = teacher_task(8, 3, 4, 10, 12);
  EXPECT_LE(linearization_error(task.init, task.data, kTanh), 1e-15);
  const auto map = make_anchor_map(4, 3, 4, {0, 0, 0}, kTanh, 12);
  Dataset zero = task.data;
  std::fill(zero.labels.begin(), zero.labels.end(), 0.0);
  EXPECT_EQ(approximation_error(transported_params(task.init, map), zero, kTanh), 0.0);
}

TEST(ErrorMetrics, MatchNaiveSup) {
  auto rng = testing::test_stream(81);
  const auto task = teacher_task(8, 3, 4, 12, 13);
  const auto p = task.init.with_heads(testing::perturb(rng, task.init.heads, 0.2));
  double lin = 0.0, app = 0.0;
  for (std::size_t j = 0; j < task.data.size(); ++j) {
    const double fl = linearized_forward(task.data.inputs[j], p, kTanh);
    lin = std::max(lin, std::abs(forward(task.data.inputs[j], p, kTanh) - fl));
    app = std::max(app, std::abs(fl - task.data.labels[j]));
  }
  EXPECT_NEAR(linearization_error(p, task.data, kTanh), lin, 1e-13);
  EXPECT_NEAR(approximation_error(p, task.data, kTanh), app, 1e-13);
}

TEST(BoundaryParams, ExactRadii) {
  const auto p = symmetric_init(16, 4, 14);
  const Radii r{1.0, 2.0, 3.0};
  for (auto mode : {BoundaryDirections::kShared, BoundaryDirections::kIndependent}) {
    const auto b = boundary_params(p, r, 3, mode);
    for (int i = 0; i < 16; ++i) {
      EXPECT_NEAR(std::abs(b.heads[i].c - p.heads[i].c), 0.25, 1e-15);
      EXPECT_NEAR((b.heads[i].U - p.heads[i].U).norm(), 0.5, 1e-14);
      EXPECT_NEAR((b.heads[i].W - p.heads[i].W).norm(), 0.75, 1e-14);
    }
    EXPECT_TRUE(in_neighborhood(b, Neighborhood::around_init(p, r), 1e-12));
  }
  const auto s = boundary_params(p, r, 3, BoundaryDirections::kShared);
  const auto ind = boundary_params(p, r, 3, BoundaryDirections::kIndependent);
  EXPECT_LE(testing::max_abs((s.heads[0].U - p.heads[0].U) - (s.heads[5].U - p.heads[5].U)), 1e-15);
  EXPECT_GT(testing::max_abs((ind.heads[0].U - p.heads[0].U) - (ind.heads[5].U - p.heads[5].U)), 1e-3);
}

TEST(Bounds, DegenerateAndFormula) {
  const auto z = theoretical_bounds(4, 64, 100, {0, 0, 0}, {0, 0, 0}, 0.05, 0.05, kTanh);
  EXPECT_EQ(z.B_lin, 0.0);
  EXPECT_EQ(z.B_app, 0.0);
  EXPECT_EQ(z.B_cof, 0.0);
  EXPECT_EQ(z.f_max, 0.0);
  EXPECT_EQ(z.y_max, 0.0);

  const auto b = theoretical_bounds(8, 256, 5000, {3, 3, 3}, {3, 3, 3}, 0.05, 0.05, kTanh);
  EXPECT_NEAR(b.B_U, 6.9776849511342716232, 1e-13);
  EXPECT_NEAR(b.L1, 7.0489777469705266882, 1e-13);
  EXPECT_NEAR(b.L2, 94.641729395842224117, 1e-11);
  EXPECT_NEAR(b.B_lin, 112.07937303130292448, 1e-10);
  EXPECT_NEAR(b.B_app, 5.5584729363376639771, 1e-12);
  EXPECT_NEAR(b.B_cof, 293.96197314209614802, 1e-10);
  EXPECT_NEAR(b.A_m, 9.3706610745275004422, 1e-13);
  EXPECT_NEAR(b.f_max, 32.90627979189558586, 1e-12);
  EXPECT_NEAR(b.y_max, 14.485281374238570293, 1e-12);
  EXPECT_NEAR(b.B_grad, 788864.62715668007952, 1e-6);

  EXPECT_THROW(theoretical_bounds(8, 256, 10, {3, 3, 3}, {3, 3, 3}, 0.0, 0.05, kTanh), std::invalid_argument);
  EXPECT_THROW(theoretical_bounds(8, 256, 10, {3, 3, 3}, {3, 3, 3}, 0.05, 1.0, kTanh), std::invalid_argument);
}

TEST(Bounds, LinearizationScalesInverseRootWidth) {
  // With δ' = m/const, B_U only moves through ρ_u/√m; zero ρ_u removes it.
  const auto a = theoretical_bounds(4, 64, 10, {2, 0, 3}, {1, 1, 1}, 0.1, 0.05, kTanh);
  const auto b = theoretical_bounds(4, 128, 10, {2, 0, 3}, {1, 1, 1}, 0.1, 0.1, kTanh);
  EXPECT_EQ(a.B_U, b.B_U);
  EXPECT_NEAR(b.B_lin, a.B_lin / std::sqrt(2.0), 1e-12);
}

TEST(Bounds, LinearizationDominance) {
  auto rng = testing::test_stream(82);
  int checked = 0;
  for (int cfg = 0; cfg < 20; ++cfg) {
    const int m = 8 << rng.index(5);
    const Radii r{0.5 + 3.0 * rng.uniform(), 0.5 + 3.0 * rng.uniform(), 0.5 + 3.0 * rng.uniform()};
    const auto init = symmetric_init(m, 8, 500 + cfg);
    const auto ev = check_event_u(init, 0.05, r.rho_u);
    if (!ev.holds) continue;
    ++checked;
    const auto data = testing::make_dataset(gaussian_sequences(30, 8, 16, 600 + cfg), std::vector<double>(30, 0.0));
    const auto bounds = theoretical_bounds(8, m, 30, r, {1, 1, 1}, 0.05, 0.05, kTanh);
    const auto b = boundary_params(init, r, cfg, BoundaryDirections::kIndependent);
    EXPECT_LE(linearization_error(b, data, kTanh), bounds.B_lin);
  }
  EXPECT_GE(checked, 10);
}

TEST(Bounds, ApproximationAudit) {
  const int d = 4, T = 6, n = 30, m = 32;
  const auto inputs = gaussian_sequences(n, d, T, 700);
  const auto map = make_anchor_map(8, d, T, {3, 3, 3}, kTanh, 701);
  const auto labels = generate_labels(inputs, map, 1 << 15, 702);
  const auto data = testing::make_dataset(inputs, labels);
  const double bound = theoretical_bounds(d, m, n, {3, 3, 3}, {3, 3, 3}, 0.1, 0.05, kTanh).B_app;
  int violations = 0;
  for (int seed = 0; seed < 50; ++seed) {
    const auto t = transported_params(symmetric_init(m, d, 800 + seed), map);
    violations += approximation_error(t, data, kTanh) > bound ? 1 : 0;
  }
  EXPECT_LE(violations, 15);
}

TEST(GradNorm, ZeroReadoutAndNaiveOracle) {
  auto rng = testing::test_stream(83);
  const auto task = teacher_task(6, 3, 5, 9, 15);
  auto p = task.init.with_heads(testing::perturb(rng, task.init.heads, 0.5));
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(6 * 9);
  for (const auto& X : task.data.inputs) {
    const auto g = gradients(X, p, kTanh);
    for (int i = 0; i < 6; ++i)
      mean.segment(9 * i, 9) += Eigen::Map<const Eigen::VectorXd>(g.heads[i].W.data(), 9) / task.data.size();
  }
  EXPECT_NEAR(attention_grad_norm(p, task.data, kTanh), mean.norm(), 1e-14);
  for (auto& h : p.heads) h.c = 0.0;
  EXPECT_EQ(attention_grad_norm(p, task.data, kTanh), 0.0);
}

TEST(GradNorm, BoundedAcrossLengths) {
  auto rng = testing::test_stream(84);
  const ModelParams p(testing::random_heads(rng, 8, 4), 4);
  double max_c = 0.0, max_u = 0.0;
  for (const auto& h : p.heads) {
    max_c = std::max(max_c, std::abs(h.c));
    max_u = std::max(max_u, h.U.norm());
  }
  for (int T : {4, 64}) {
    std::vector<TokenSequence> xs;
    for (int j = 0; j < 20; ++j) {
      Eigen::MatrixXd X = testing::random_sequence(rng, 4, T).X();
      X.colwise() -= X.rowwise().mean();  // mean-zero tokens
      xs.push_back(TokenSequence::last_token(numerics::clip_token_norms(X)));
    }
    const auto data = testing::make_dataset(xs, std::vector<double>(20, 0.0));
    EXPECT_LE(attention_grad_norm(p, data, kTanh), kTanh.sigma1 * max_c * max_u);
  }
}

TEST(GradNorm, RecurrentNaiveOracle) {
  auto rng = testing::test_stream(85);
  const auto p = rnn_symmetric_init(6, 3, 1.2, 3);
  std::vector<TokenSequence> xs;
  for (int j = 0; j < 7; ++j) xs.push_back(testing::random_sequence(rng, 3, 6));
  const auto data = testing::make_dataset(xs, std::vector<double>(7, 0.0));
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
  for (const auto& X : xs) mean += rnn_gradients(X.X(), p, kTanh).dw / 7.0;
  EXPECT_NEAR(recurrent_grad_norm(p, data, kTanh), mean.norm(), 1e-13);
}

TEST(RnnDescent, ZeroLabelsAndLossDecrease) {
  auto rng = testing::test_stream(86);
  const auto p = rnn_symmetric_init(8, 3, 1.0, 4);
  std::vector<TokenSequence> xs;
  std::vector<double> ys;
  for (int j = 0; j < 20; ++j) {
    xs.push_back(testing::random_sequence(rng, 3, 5));
    ys.push_back(xs.back().X()(0, 4));
  }
  const auto zero = testing::make_dataset(xs, std::vector<double>(20, 0.0));
  const auto rec0 = run_rnn_descent(p, zero, gd(10, 0.5), kTanh);
  EXPECT_EQ(rec0.final_params.state.w, p.state.w);

  const auto data = testing::make_dataset(xs, ys);
  const auto rec = run_rnn_descent(p, data, gd(100, 0.5), kTanh);
  EXPECT_LT(rec.losses.back(), rec.losses.front());
  EXPECT_NEAR(rec.losses.front(), rnn_mse_loss(p, data, kTanh), 1e-15);
  EXPECT_EQ(rec.max_grad_bound, 0.0);
}

TEST(RunCsv, FormatAndName) {
  RunRecord rec;
  rec.steps = {0, 5};
  rec.losses = {0.5, 0.25};
  rec.grad_norms = {0.1, 1.0 / 3.0};
  const auto path = std::filesystem::temp_directory_path() / "krlab_run_csv_test.csv";
  write_run_csv(path.string(), rec);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "step,loss,attn_grad_norm\n0,0.5,0.10000000000000001\n5,0.25,0.33333333333333331\n");
  std::filesystem::remove(path);
  EXPECT_EQ(run_csv_name("scaling", 64, 3), "run_scaling_64_3.csv");
}

}  // namespace
}  // namespace krlab
