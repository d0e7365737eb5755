#include <gtest/gtest.h>

#include <cmath>

#include "dynafilter/bounds.hpp"
#include "dynafilter/rng.hpp"
#include "oracles.hpp"

using namespace dynafilter;

TEST(BinomialSlack, FrozenValues) {
  EXPECT_NEAR(binomial_slack(0.1, 1000000), 0.0009, 1e-12);
  EXPECT_NEAR(binomial_slack(0.5, 10000), 0.015, 1e-12);
  EXPECT_DOUBLE_EQ(binomial_slack(0.1, 0), 0.0);
}

TEST(Chebyshev, GaussianRateMatchesNormalTail) {
  // x - xh ~ N(0, 2); the bound allows sqrt(2 / 0.25) = sqrt(8), so the true
  // exceedance rate is 2 Phi(-2) ~ 0.0455, far below the allowed 0.25.
  Rng rng = Rng::derive(101, "chebyshev");
  BoundReport rep = verify_chebyshev(0.0, 1.0, 0.0, 1.0, 0.25, 200000, rng);
  double expected = 2.0 * oracle::normal_cdf(-2.0);
  EXPECT_NEAR(rep.violation_rate, expected, 0.005);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.n_trials, 200000u);
  EXPECT_DOUBLE_EQ(rep.allowed_rate, 0.25);
  EXPECT_DOUBLE_EQ(rep.rhs_min, std::sqrt(8.0));
  EXPECT_GT(rep.lhs_max, rep.rhs_min);  // some trial always lands in the tail
}

TEST(Chebyshev, ShiftedMeansUseTheMeanGap) {
  Rng rng = Rng::derive(102, "chebyshev");
  BoundReport rep = verify_chebyshev(0.0, 1.0, 0.3, 2.0, 0.1, 50000, rng);
  EXPECT_DOUBLE_EQ(rep.rhs_min, std::sqrt(3.0 / 0.1) + 0.3);
  EXPECT_TRUE(rep.pass);
}

TEST(Chebyshev, Validation) {
  Rng rng = Rng::derive(1, "chebyshev");
  EXPECT_THROW(verify_chebyshev(0.0, -1.0, 0.0, 1.0, 0.1, 10000, rng), NumericalError);
  EXPECT_THROW(verify_chebyshev(0.0, 1.0, 0.0, 1.0, 1.5, 10000, rng), ConfigError);
  EXPECT_THROW(verify_chebyshev(0.0, 1.0, 0.0, 1.0, 0.0, 10000, rng), ConfigError);
  EXPECT_THROW(verify_chebyshev(0.0, 1.0, 0.0, 1.0, 0.1, 5000, rng), ConfigError);
}

TEST(TrajectoryRhs, FrozenArithmetic) {
  // 2 * 0.5 + sqrt(4 / (4 * 0.25)) + sqrt((3 + 1) / 0.25) = 1 + 2 + 4.
  EXPECT_DOUBLE_EQ(trajectory_shift_rhs(2.0, 0.5, 4.0, 4.0, 3.0, 1.0, 0.25, 0.25), 7.0);
}

TEST(TrajectoryRhs, LinearInKeyGap) {
  double base = trajectory_shift_rhs(1.7, 0.3, 2.0, 5.0, 1.0, 0.5, 0.1, 0.1);
  double wide = trajectory_shift_rhs(1.7, 3.0, 2.0, 5.0, 1.0, 0.5, 0.1, 0.1);
  EXPECT_NEAR(wide - base, 1.7 * 2.7, 1e-12);
}

TEST(TrajectoryBound, HoldsOnLinearGaussianWorld) {
  LinearGaussianEnv env;  // 4 states, 4 actions, sigma 0.1
  Rng rng = Rng::derive(7, "verify-trajectory");
  BoundReport rep = verify_trajectory_shift(env, 0.1, 0.1, 300, rng);
  EXPECT_EQ(rep.check, "trajectory");
  EXPECT_DOUBLE_EQ(rep.allowed_rate, 1.0 - 0.9 * 0.9);
  EXPECT_TRUE(rep.pass);
}

TEST(TrajectoryBound, Validation) {
  Rng rng = Rng::derive(1, "x");
  LinearGaussianEnv::Params p;
  p.sigma = 0.0;
  LinearGaussianEnv noiseless(p);
  EXPECT_THROW(verify_trajectory_shift(noiseless, 0.1, 0.1, 10, rng), NumericalError);
  LinearGaussianEnv env;
  EXPECT_THROW(verify_trajectory_shift(env, 0.0, 0.1, 10, rng), ConfigError);
  EXPECT_THROW(verify_trajectory_shift(env, 0.1, 1.0, 10, rng), ConfigError);
  EXPECT_THROW(verify_trajectory_shift(env, 0.1, 0.1, 10, rng, 3, 2), ConfigError);
}

TEST(UpdateConstants, FrozenArithmetic) {
  LipschitzBundle b;
  b.l1 = 1.0;
  b.l2 = 2.0;
  b.l3 = 3.0;
  b.l4 = 4.0;
  b.d1 = 1.0;
  b.d2 = 2.0;
  b.d3 = 3.0;
  // c1 = 0.1 * (1*2 + 3*2 + 0.5*4*2) = 1.2
  EXPECT_NEAR(q_update_c1(b, 0.1, 0.5), 1.2, 1e-12);
  // c2 = 0.1*2*2 + 0.1*(0.5*1 + 3 + 0.5*4)*1 + 0.1*1.5*2*3 = 0.4 + 0.55 + 0.9
  EXPECT_NEAR(q_update_c2(b, 0.1, 0.5), 1.85, 1e-12);
}

TEST(QSingleUpdate, MatchesHandComputation) {
  ClosedFormLinearQ cf;
  QUpdateProblem qp = cf.problem();
  Vec theta = {0.4, -0.2};
  Vec theta_minus = {0.1, 0.3};
  Vec s = {0.5, 0.5};
  Vec s_next = {-0.5, 1.0};
  double alpha = 0.1, gamma = 0.9;
  Vec got = q_single_update(qp, theta, theta_minus, s, 0, s_next, alpha, gamma);
  double y = qp.reward(s, 0) + gamma * dot(theta_minus, s_next);
  double delta = y - dot(theta, s);
  EXPECT_DOUBLE_EQ(got[0], theta[0] + alpha * delta * s[0]);
  EXPECT_DOUBLE_EQ(got[1], theta[1] + alpha * delta * s[1]);
}

namespace {

Vec random_unit_scaled(Rng& rng, int dim, double norm) {
  Vec v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = rng.normal();
  double n = norm2(v);
  for (auto& x : v) x *= norm / n;
  return v;
}

}  // namespace

TEST(UpdateBound, ClosedFormHasZeroViolationsInSafeRegime) {
  ClosedFormLinearQ cf;
  QUpdateProblem qp = cf.problem();
  Rng rng = Rng::derive(31, "update");
  for (int rep_i = 0; rep_i < 5; ++rep_i) {
    Vec theta_t = random_unit_scaled(rng, cf.dim, 0.5);
    Vec theta_minus = random_unit_scaled(rng, cf.dim, 0.5);
    auto pairs = make_q_update_pairs(cf.dim, 1, cf.box_half, 200, 0.6, rng);
    for (double gamma : {0.0, 0.5}) {
      BoundReport rep = verify_update_shift(qp, cf.bundle(theta_t, theta_minus), theta_t,
                                            theta_minus, pairs, 0.1, gamma);
      EXPECT_EQ(rep.check, "update");
      EXPECT_EQ(rep.violations, 0u) << "gamma " << gamma;
      EXPECT_TRUE(rep.pass);
    }
  }
}

TEST(UpdateBound, WeakenedLinearTermFailsOpenly) {
  // At a small pair distance the linear term carries nearly all of the
  // budget, so cutting C2 to a tenth must surface a violation while the
  // intact constants still cover the same pair. Constants hold on the pair,
  // so the violation is reported without an assumption-failure flag.
  ClosedFormLinearQ cf;
  QUpdateProblem qp = cf.problem();
  Vec theta_t = {0.5, 0.0};
  Vec theta_minus = {0.0, 0.0};
  QUpdatePair p;
  p.s = {1.0, 0.0};
  p.s_hat = {0.8, 0.0};
  p.s_next = {0.0, 0.0};
  p.s_next_hat = {0.0, 0.0};
  LipschitzBundle b = cf.bundle(theta_t, theta_minus);
  BoundReport intact = verify_update_shift(qp, b, theta_t, theta_minus, {p}, 0.1, 0.0);
  EXPECT_EQ(intact.violations, 0u);
  BoundReport rep =
      verify_update_shift(qp, b, theta_t, theta_minus, {p}, 0.1, 0.0, 1.0, 0.1);
  EXPECT_EQ(rep.violations, 1u);
  EXPECT_EQ(rep.violations_without_flag, 1u);
  EXPECT_EQ(rep.flagged_constant_violations, 0u);
  EXPECT_FALSE(rep.pass);
}

TEST(UpdateBound, HalvedQuadraticTermFailsOnLargeParameters) {
  // The quadratic term only carries real load once ||theta|| is well above 1;
  // this instance is built so that halving C1 opens a double-digit relative
  // gap while every bundle constant still holds exactly.
  ClosedFormLinearQ cf;
  QUpdateProblem qp = cf.problem();
  Vec theta_t = {6.0, 0.0};
  Vec theta_minus = {0.0, 0.0};
  QUpdatePair p;
  p.s = {1.0, 1.0};
  p.s_hat = {0.5, 1.0};
  p.s_next = {0.0, 0.0};
  p.s_next_hat = {0.0, 0.0};
  LipschitzBundle b = cf.bundle(theta_t, theta_minus);
  BoundReport full =
      verify_update_shift(qp, b, theta_t, theta_minus, {p}, 0.1, 0.0, 1.0, 1.0);
  EXPECT_EQ(full.violations, 0u);  // intact constants cover the pair
  BoundReport halved =
      verify_update_shift(qp, b, theta_t, theta_minus, {p}, 0.1, 0.0, 0.5, 1.0);
  EXPECT_EQ(halved.violations, 1u);
  EXPECT_EQ(halved.violations_without_flag, 1u);
  EXPECT_FALSE(halved.pass);
  EXPECT_GT(halved.max_violation_excess, 0.05);  // not a borderline trip
}

TEST(UpdateBound, OutOfDomainViolationIsFlaggedNotCounted) {
  // A small shift between two states far outside the box: the TD errors and
  // gradients out there dwarf the in-box sup constants, so the bound breaks,
  // and the recheck must classify that as an assumption failure.
  ClosedFormLinearQ cf;
  QUpdateProblem qp = cf.problem();
  Vec theta_t = {0.5, 0.0};
  Vec theta_minus = {0.0, 0.0};
  QUpdatePair p;
  p.s = {10.2, 10.0};
  p.s_hat = {10.0, 10.0};
  p.s_next = {0.0, 0.0};
  p.s_next_hat = {0.0, 0.0};
  BoundReport rep = verify_update_shift(qp, cf.bundle(theta_t, theta_minus), theta_t,
                                        theta_minus, {p}, 0.1, 0.0);
  EXPECT_EQ(rep.violations, 1u);
  EXPECT_EQ(rep.flagged_constant_violations, 1u);
  EXPECT_EQ(rep.violations_without_flag, 0u);
  EXPECT_TRUE(rep.pass);
}

TEST(UpdateBound, Validation) {
  ClosedFormLinearQ cf;
  QUpdateProblem qp = cf.problem();
  LipschitzBundle b;
  EXPECT_THROW(verify_update_shift(qp, b, {0.0, 0.0}, {0.0, 0.0}, {}, 0.0, 0.5), ConfigError);
  EXPECT_THROW(verify_update_shift(qp, b, {0.0, 0.0}, {0.0, 0.0}, {}, 0.1, 1.5), ConfigError);
}

TEST(ClosedFormBundle, DominatesSampledSuprema) {
  ClosedFormLinearQ cf;
  QUpdateProblem qp = cf.problem();
  Rng rng = Rng::derive(77, "bundle");
  Vec theta_t = random_unit_scaled(rng, cf.dim, 1.3);
  Vec theta_minus = random_unit_scaled(rng, cf.dim, 0.9);
  LipschitzBundle b = cf.bundle(theta_t, theta_minus);
  for (int i = 0; i < 500; ++i) {
    Vec x = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    Vec y = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    EXPECT_LE(std::abs(qp.reward(x, 0)), b.d1 + 1e-12);
    EXPECT_LE(norm2(qp.grad_q(x, 0, theta_t)), b.d2 + 1e-12);
    EXPECT_LE(std::abs(qp.q(x, 0, theta_t)), b.d3 + 1e-12);
    EXPECT_LE(std::abs(qp.max_q(x, theta_minus)), b.d3 + 1e-12);
    double d = l2_dist(x, y);
    if (d < 1e-9) continue;
    EXPECT_LE(std::abs(qp.reward(x, 0) - qp.reward(y, 0)), b.l1 * d + 1e-12);
    EXPECT_LE(l2_dist(qp.grad_q(x, 0, theta_t), qp.grad_q(y, 0, theta_t)), b.l2 * d + 1e-12);
    EXPECT_LE(std::abs(qp.q(x, 0, theta_t) - qp.q(y, 0, theta_t)), b.l3 * d + 1e-12);
    EXPECT_LE(std::abs(qp.max_q(x, theta_minus) - qp.max_q(y, theta_minus)),
              b.l4 * d + 1e-12);
  }
}

TEST(MakeQUpdatePairs, RespectsBoxAndShift) {
  Rng rng = Rng::derive(55, "pairs");
  auto pairs = make_q_update_pairs(3, 4, 1.0, 200, 0.25, rng);
  ASSERT_EQ(pairs.size(), 200u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.a, p.a_hat);
    EXPECT_GE(p.a, 0);
    EXPECT_LT(p.a, 4);
    for (int d = 0; d < 3; ++d) {
      EXPECT_LE(std::abs(p.s[d]), 1.0);
      EXPECT_LE(std::abs(p.s_hat[d]), 1.0);
      EXPECT_LE(std::abs(p.s_hat[d] - p.s[d]), 0.25 + 1e-12);
      EXPECT_LE(std::abs(p.s_next_hat[d] - p.s_next[d]), 0.25 + 1e-12);
    }
  }
}

TEST(MlpQInstance, EstimatedBundleCoversFreshSamples) {
  Rng rng = Rng::derive(91, "mlp-instance");
  MlpQInstance inst = make_mlp_q_instance(3, 2, 1.0, 12, 0.05, 0.1, 1500, 1.2, rng);
  EXPECT_EQ(inst.theta_t.size(), inst.problem.n_params);
  EXPECT_EQ(inst.theta_minus.size(), inst.problem.n_params);
  EXPECT_GT(inst.bundle.l2, 0.0);
  EXPECT_GT(inst.bundle.d2, 0.0);
  // Fresh box samples should sit inside the safety margin.
  Rng probe = Rng::derive(92, "mlp-probe");
  for (int i = 0; i < 300; ++i) {
    Vec x = {probe.uniform(-1.0, 1.0), probe.uniform(-1.0, 1.0), probe.uniform(-1.0, 1.0)};
    EXPECT_LE(std::abs(inst.problem.reward(x, 0)), inst.bundle.d1);
    for (int a = 0; a < 2; ++a) {
      EXPECT_LE(norm2(inst.problem.grad_q(x, a, inst.theta_t)), inst.bundle.d2);
      EXPECT_LE(std::abs(inst.problem.q(x, a, inst.theta_t)), inst.bundle.d3);
    }
    EXPECT_LE(std::abs(inst.problem.max_q(x, inst.theta_minus)), inst.bundle.d3);
  }
}

TEST(UpdateBound, MlpInstancePassesWithEstimatedConstants) {
  Rng rng = Rng::derive(3, "verify-update-mlp");
  MlpQInstance inst = make_mlp_q_instance(4, 2, 1.0, 16, 0.02, 0.1, 2000, 1.2, rng);
  auto pairs = make_q_update_pairs(4, 2, 1.0, 150, 0.3, rng);
  BoundReport rep = verify_update_shift(inst.problem, inst.bundle, inst.theta_t,
                                        inst.theta_minus, pairs, 0.1, 0.9);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.violations_without_flag, 0u);
}

TEST(ComposedRhs, CollapsesToQuadraticWhenErrorTermsVanish) {
  EXPECT_DOUBLE_EQ(composed_rhs(2.0, 3.0, 1.5, 2.0, 0.0, 0.0), 27.0);
  EXPECT_DOUBLE_EQ(composed_rhs(2.0, 3.0, 1.5, 0.0, 1.0, 2.0), 23.0);
  EXPECT_DOUBLE_EQ(composed_rhs(0.0, 1.0, 2.0, 3.0, 0.5, 0.5), 2.0 * 3.0 + 1.0);
}

TEST(ComposedSigmaMax, FrozenValues) {
  EXPECT_DOUBLE_EQ(composed_sigma_max(2.0, 0.5, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(composed_sigma_max(0.1, 0.9, 0.4), 0.9);
  EXPECT_DOUBLE_EQ(composed_sigma_max(0.0, 0.0, 0.0), 0.0);
}

TEST(ComposedBound, HoldsOnLinearGaussianWorld) {
  LinearGaussianEnv::Params p;
  p.state_dim = 4;
  p.num_actions = 2;
  LinearGaussianEnv env(p);
  Rng rng = Rng::derive(5, "verify-composed");
  BoundReport rep = verify_composed_shift(env, 0.1, 0.1, 0.1, 200, rng);
  EXPECT_EQ(rep.check, "composed");
  EXPECT_DOUBLE_EQ(rep.allowed_rate, 1.0 - 0.9 * 0.9);
  EXPECT_TRUE(rep.pass);
}

TEST(ComposedBound, Validation) {
  LinearGaussianEnv env;
  Rng rng = Rng::derive(1, "x");
  EXPECT_THROW(verify_composed_shift(env, 0.0, 0.1, 0.1, 10, rng), ConfigError);
  EXPECT_THROW(verify_composed_shift(env, 0.1, 0.0, 0.1, 10, rng), ConfigError);
  LinearGaussianEnv::Params p;
  p.sigma = 0.0;
  LinearGaussianEnv noiseless(p);
  EXPECT_THROW(verify_composed_shift(noiseless, 0.1, 0.1, 0.1, 10, rng), NumericalError);
}
