#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "krlab/activation.hpp"
#include "krlab/params.hpp"
#include "support.hpp"

namespace krlab {
namespace {

double max_tanh_second_derivative() {
  // |tanh''| = 2t(1 − t²) with t = tanh(x) ∈ [0, 1); maximise on a fine grid.
  double best = 0.0;
  for (int k = 0; k <= 1000000; ++k) {
    const double t = k / 1000000.0;
    best = std::max(best, 2.0 * t * (1.0 - t * t));
  }
  return best;
}

TEST(Activation, TanhBounds) {
  const auto act = tanh_activation();
  EXPECT_EQ(act.sigma0, 1.0);
  EXPECT_EQ(act.sigma1, 1.0);
  EXPECT_NEAR(act.sigma2, 0.769800358919501019, 1e-15);
  EXPECT_NEAR(act.sigma2, max_tanh_second_derivative(), 1e-10);
  for (double x = -20.0; x <= 20.0; x += 0.001) {
    EXPECT_LE(std::abs(act.value(x)), act.sigma0);
    EXPECT_LE(std::abs(act.derivative(x)), act.sigma1);
    EXPECT_LE(std::abs(act.second_derivative(x)), act.sigma2 + 1e-15);
  }
}

TEST(Activation, BatchedMatchesScalar) {
  const auto act = tanh_activation();
  std::vector<double> z;
  for (double x = -30.0; x <= 30.0; x += 0.0137) z.push_back(x);
  z.push_back(0.0);
  z.push_back(-0.0);
  z.push_back(1e-300);
  std::vector<double> v(z.size()), dv(z.size());
  apply_activation(act, z.data(), v.data(), dv.data(), z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    EXPECT_NEAR(v[k], std::tanh(z[k]), 1e-15);
    EXPECT_NEAR(dv[k], 1.0 - std::tanh(z[k]) * std::tanh(z[k]), 1e-15);
  }
}

TEST(Activation, LookupByName) {
  EXPECT_EQ(activation_by_name("tanh").name, "tanh");
  EXPECT_THROW(activation_by_name("relu"), std::invalid_argument);
}

TEST(Rng, SubstreamsAreReproducibleAndDistinct) {
  Stream a(7, {stream::kInit, 3}), b(7, {stream::kInit, 3}), c(7, {stream::kInit, 4}), e(8, {stream::kInit, 3});
  const double x = a.gaussian();
  EXPECT_EQ(x, b.gaussian());
  EXPECT_NE(x, c.gaussian());
  EXPECT_NE(x, e.gaussian());
}

TEST(SymmetricInit, PairsHeads) {
  const auto p = symmetric_init(2, 3, 11);
  ASSERT_EQ(p.m(), 2);
  EXPECT_EQ(p.heads[1].W, p.heads[0].W);
  EXPECT_EQ(p.heads[1].U, p.heads[0].U);
  EXPECT_EQ(p.heads[1].c, -p.heads[0].c);
  EXPECT_EQ(std::abs(p.heads[0].c), 1.0);
  ASSERT_TRUE(p.has_snapshot());
  EXPECT_EQ(flatten(p.init_snapshot()), flatten(p.heads));
}

TEST(SymmetricInit, Deterministic) {
  const auto a = symmetric_init(16, 5, 123);
  const auto b = symmetric_init(16, 5, 123);
  const auto c = symmetric_init(16, 5, 124);
  EXPECT_EQ(flatten(a.heads), flatten(b.heads));
  EXPECT_NE(flatten(a.heads), flatten(c.heads));
}

TEST(SymmetricInit, SamplerMean) {
  const auto p = symmetric_init(128, 8, 5);
  double sum = 0.0;
  int plus = 0;
  for (int i = 0; i < 64; ++i) {
    sum += p.heads[i].W.sum();
    plus += p.heads[i].c > 0 ? 1 : 0;
  }
  EXPECT_LE(std::abs(sum / (64.0 * 64.0)), 3.0 / std::sqrt(128.0 * 64.0 / 2.0));
  EXPECT_GT(plus, 10);
  EXPECT_LT(plus, 54);
}

TEST(SymmetricInit, RejectsOddWidth) {
  EXPECT_THROW(symmetric_init(3, 2, 0), std::invalid_argument);
  EXPECT_THROW(symmetric_init(0, 2, 0), std::invalid_argument);
  EXPECT_THROW(symmetric_init(2, 0, 0), std::invalid_argument);
}

TEST(ModelParams, SnapshotRequired) {
  auto rng = testing::test_stream(20);
  const ModelParams p(testing::random_heads(rng, 2, 2), 2);
  EXPECT_FALSE(p.has_snapshot());
  EXPECT_THROW(p.init_snapshot(), InvalidState);
  EXPECT_THROW(Neighborhood::around_init(p, {1, 1, 1}), InvalidState);
}

TEST(Radii, MustBePositive) {
  EXPECT_THROW((Radii{0.0, 1.0, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((Radii{1.0, -1.0, 1.0}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((Radii{1.0, 1.0, 1.0}.validate()));
}

ModelParams zero_init(int m, int d) {
  HeadList heads(m);
  for (auto& h : heads) {
    h.c = 0.0;
    h.U = Eigen::VectorXd::Zero(d);
    h.W = Eigen::MatrixXd::Zero(d, d);
  }
  return ModelParams::at_init(heads, d);
}

TEST(Project, ClampsScalar) {
  // m = 4 and ρ_c = 2 give half-width 1
  auto p = zero_init(4, 2);
  const auto nb = Neighborhood::around_init(p, {2.0, 2.0, 2.0});
  p.heads[0].c = 5.0;
  p.heads[1].c = -5.0;
  p.heads[2].c = 0.5;
  const auto q = project(p, nb);
  EXPECT_EQ(q.heads[0].c, 1.0);
  EXPECT_EQ(q.heads[1].c, -1.0);
  EXPECT_EQ(q.heads[2].c, 0.5);
}

TEST(Project, HalvesDoubledDisplacement) {
  auto rng = testing::test_stream(21);
  auto p = symmetric_init(4, 3, 9);
  const Radii r{1.0, 1.5, 2.0};
  const auto nb = Neighborhood::around_init(p, r);
  const Eigen::MatrixXd dir = testing::gaussian_matrix(rng, 3, 3);
  const Eigen::MatrixXd disp = dir / dir.norm() * (2.0 * r.rho_w / 2.0);
  p.heads[1].W += disp;
  const auto q = project(p, nb);
  const Eigen::MatrixXd got = q.heads[1].W - p.init_snapshot()[1].W;
  EXPECT_LE(testing::max_abs(got - disp / 2.0), 1e-14);
  EXPECT_EQ(q.heads[0].W, p.heads[0].W);
}

TEST(Project, InsideUnchangedAndIdempotent) {
  auto rng = testing::test_stream(22);
  const auto init = symmetric_init(6, 3, 10);
  const auto nb = Neighborhood::around_init(init, {1.0, 1.0, 1.0});
  const auto inside = init.with_heads(testing::perturb(rng, init.heads, 1e-3));
  EXPECT_EQ(flatten(project(inside, nb).heads), flatten(inside.heads));
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = init.with_heads(testing::perturb(rng, init.heads, 1.0));
    const auto once = project(p, nb);
    const auto twice = project(once, nb);
    EXPECT_EQ(flatten(once.heads), flatten(twice.heads));
    EXPECT_TRUE(in_neighborhood(once, nb));
  }
}

TEST(Project, NonExpansive) {
  auto rng = testing::test_stream(23);
  const auto init = symmetric_init(4, 3, 12);
  const auto nb = Neighborhood::around_init(init, {0.5, 0.7, 0.9});
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = init.with_heads(testing::perturb(rng, init.heads, 0.5));
    const auto q = init.with_heads(testing::perturb(rng, init.heads, 0.5));
    const double before = (flatten(p.heads) - flatten(q.heads)).norm();
    const double after = (flatten(project(p, nb).heads) - flatten(project(q, nb).heads)).norm();
    EXPECT_LE(after, before + 1e-12);
  }
}

TEST(Project, ShapeMismatch) {
  const auto a = symmetric_init(4, 3, 1);
  const auto b = symmetric_init(6, 3, 1);
  EXPECT_THROW(project(b, Neighborhood::around_init(a, {1, 1, 1})), std::invalid_argument);
}

TEST(EventU, FormulaAndCases) {
  const auto p = symmetric_init(256, 8, 1);
  const auto ev = check_event_u(p, 0.01, 3.0);
  EXPECT_NEAR(ev.B_U, 7.36499609405622129347990071364, 1e-13);

  const auto z = zero_init(4, 3);
  EXPECT_TRUE(check_event_u(z, 0.05, 1.0).holds);

  HeadList heads = zero_init(4, 3).heads;
  heads[2].U(0) = 10.0 * std::sqrt(3.0);
  EXPECT_FALSE(check_event_u(ModelParams::at_init(heads, 3), 0.05, 1.0).holds);

  EXPECT_THROW(check_event_u(p, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(check_event_u(p, 1.0, 1.0), std::invalid_argument);
}

TEST(Lipschitz, Examples) {
  ActivationSpec unit = tanh_activation();
  unit.sigma2 = 1.0;
  auto c = lipschitz_constants(0.0, unit);
  EXPECT_DOUBLE_EQ(c.L1, 1.0);
  EXPECT_DOUBLE_EQ(c.L2, 9.0);

  ActivationSpec flat = unit;
  flat.sigma1 = 0.0;
  c = lipschitz_constants(2.0, flat);
  EXPECT_EQ(c.L1, 0.0);
  EXPECT_DOUBLE_EQ(c.L2, 5.0);

  c = lipschitz_constants(7.0, tanh_activation());
  EXPECT_NEAR(c.L1, 7.07106781186547524400844362105, 1e-13);
  EXPECT_NEAR(c.L2, 95.0585604408988529193441343352, 1e-12);

  EXPECT_THROW(lipschitz_constants(-1.0, unit), std::invalid_argument);
}

TEST(Serialization, RoundTrip) {
  auto rng = testing::test_stream(24);
  const auto init = symmetric_init(6, 4, 3);
  const auto p = init.with_heads(testing::perturb(rng, init.heads, 0.1));
  std::stringstream buf;
  save_params(buf, p);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "KRLB");
  EXPECT_EQ(bytes.size(), 4u + 12u + 2u * 6u * (1 + 4 + 16) * 8u);
  const auto q = load_params(buf);
  EXPECT_EQ(q.m(), 6);
  EXPECT_EQ(q.d(), 4);
  EXPECT_EQ(flatten(q.heads), flatten(p.heads));
  EXPECT_EQ(flatten(q.init_snapshot()), flatten(p.init_snapshot()));
}

TEST(Serialization, RejectsBadInput) {
  std::stringstream bad("XXXX0000");
  EXPECT_THROW(load_params(bad), std::runtime_error);
  const auto p = symmetric_init(2, 2, 0);
  std::stringstream buf;
  save_params(buf, p);
  std::stringstream truncated(buf.str().substr(0, 30));
  EXPECT_THROW(load_params(truncated), std::runtime_error);
}

}  // namespace
}  // namespace krlab
