#include <gtest/gtest.h>

#include <cmath>

#include "drvf/linear_mdp.hpp"
#include "drvf/oracles.hpp"

using namespace drvf;
using namespace drvf::linear_mdp;

namespace {

FeatureDataset random_ridge_data(std::size_t m, std::size_t d, Rng& rng) {
  FeatureDataset data{Matrix(m, d), Vector(m)};
  for (double& v : data.features.flat()) v = rng.uniform(-1.0, 1.0) / std::sqrt(double(d));
  for (double& y : data.targets) y = rng.normal() * 3.0;
  return data;
}

// One state, one action, reward 1, self loop.
LinearMdpSpec self_loop(std::size_t horizon, double gamma) {
  LinearMdpSpec m;
  m.num_states = 1;
  m.num_actions = 1;
  m.dim = 1;
  m.features = Matrix(1, 1, 1.0);
  m.next_measure = Matrix(1, 1, 1.0);
  m.reward_weights = {1.0};
  m.horizon = horizon;
  m.gamma = gamma;
  return m;
}

}  // namespace

TEST(LinearMdp, RandomInstancesAreValidKernels) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto mdp = random_linear_mdp(6, 3, 6, 5, 1.0, rng);
    EXPECT_NO_THROW(mdp.validate());
    for (std::size_t s = 0; s < 6; ++s) {
      for (std::size_t a = 0; a < 3; ++a) {
        double total = 0.0;
        for (std::size_t n = 0; n < 6; ++n) {
          EXPECT_GE(mdp.transition(s, a, n), 0.0);
          total += mdp.transition(s, a, n);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
        EXPECT_LE(norm2(mdp.feature(s, a)), 1.0 + 1e-12);
        EXPECT_GE(mdp.reward(s, a), 0.0);
        EXPECT_LE(mdp.reward(s, a), 1.0);
      }
    }
  }
}

TEST(LinearMdp, ValidateRejectsBrokenKernel) {
  auto m = self_loop(3, 1.0);
  m.next_measure(0, 0) = 0.5;
  EXPECT_THROW(m.validate(), ConfigError);
  auto r = self_loop(3, 1.0);
  r.reward_weights = {1.5};
  EXPECT_THROW(r.validate(), ConfigError);
}

TEST(LinearMdp, JsonRoundTrip) {
  Rng rng(2);
  const auto mdp = random_linear_mdp(4, 2, 3, 4, 0.9, rng);
  const auto back = LinearMdpSpec::from_json(mdp.to_json());
  EXPECT_EQ(back.features, mdp.features);
  EXPECT_EQ(back.next_measure, mdp.next_measure);
  EXPECT_EQ(back.reward_weights, mdp.reward_weights);
  EXPECT_EQ(back.horizon, mdp.horizon);
  EXPECT_EQ(back.gamma, mdp.gamma);
}

TEST(Lsvi, EmptyDataGivesPrior) {
  const auto post = lsvi_solve(FeatureDataset{Matrix(0, 3), {}}, 2.0, 3);
  EXPECT_EQ(post.mean, Vector(3, 0.0));
  Matrix expected = Matrix::identity(3);
  for (double& v : expected.flat()) v *= 2.0;
  EXPECT_EQ(post.precision, expected);
}

TEST(Lsvi, IdentityFeaturesShrinkTargets) {
  // Rows e₁, e₂ with targets 4, −2 and λ = 1 → μ = (2, −1).
  FeatureDataset data{Matrix::identity(2), {4.0, -2.0}};
  const auto post = lsvi_solve(data, 1.0);
  EXPECT_NEAR(post.mean[0], 2.0, 1e-15);
  EXPECT_NEAR(post.mean[1], -1.0, 1e-15);
}

TEST(Lsvi, SingleFeatureRidge) {
  FeatureDataset data{Matrix(3, 1), {1.0, 2.0, 3.0}};
  data.features(0, 0) = 0.5;
  data.features(1, 0) = 1.0;
  data.features(2, 0) = -0.25;
  const auto post = lsvi_solve(data, 0.3);
  const double sxy = 0.5 * 1.0 + 1.0 * 2.0 - 0.25 * 3.0;
  const double sxx = 0.25 + 1.0 + 0.0625;
  EXPECT_NEAR(post.mean[0], sxy / (sxx + 0.3), 1e-14);
  EXPECT_NEAR(post.precision(0, 0), sxx + 0.3, 1e-14);
}

TEST(Lsvi, AgreesWithNormalEquationOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.index(8);
    const std::size_t m = 1 + rng.index(500);
    const auto data = random_ridge_data(m, d, rng);
    const double lambda = rng.uniform(0.1, 2.0);
    const auto post = lsvi_solve(data, lambda);
    const auto ref = oracles::normal_equation_oracle(data.features, data.targets, lambda);
    for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(post.mean[i], ref[i], 1e-10);
  }
}

TEST(Lsvi, BadInputs) {
  FeatureDataset data{Matrix::identity(2), {1.0, 2.0}};
  EXPECT_THROW(lsvi_solve(data, 0.0), ConfigError);
  EXPECT_THROW(lsvi_solve(data, -1.0), ConfigError);
  data.targets[1] = std::nan("");
  EXPECT_THROW(lsvi_solve(data, 1.0), NumericError);
}

TEST(Lsvi, PrecisionEigenvaluesBoundPenalty) {
  // Λ ⪰ λI, so sqrt(ψᵀΛ⁻¹ψ) ≤ ‖ψ‖/√λ, and equals the explicit-inverse value.
  Rng rng(32);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + rng.index(8);
    const auto data = random_ridge_data(1 + rng.index(200), d, rng);
    const double lambda = rng.uniform(0.2, 3.0);
    const auto post = lsvi_solve(data, lambda);
    Vector psi(d);
    for (double& v : psi) v = rng.normal();
    const double pen = lcb_penalty(psi, post);
    EXPECT_LE(pen, norm2(psi) / std::sqrt(lambda) * (1.0 + 1e-12));
    const Matrix inv = oracles::gauss_jordan_inverse(post.precision);
    double q = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) q += psi[i] * inv(i, j) * psi[j];
    EXPECT_NEAR(pen, std::sqrt(q), 1e-12);
    EXPECT_NEAR(lcb_penalty(psi, post.precision), pen, 1e-12);
  }
}

TEST(Lsvi, PenaltyShrinksWithMoreData) {
  Rng rng(33);
  const auto big = random_ridge_data(400, 4, rng);
  FeatureDataset small{Matrix(100, 4), Vector(big.targets.begin(), big.targets.begin() + 100)};
  std::copy(big.features.data(), big.features.data() + 400, small.features.data());
  const Vector psi{0.3, -0.2, 0.5, 0.1};
  EXPECT_LT(lcb_penalty(psi, lsvi_solve(big, 1.0)), lcb_penalty(psi, lsvi_solve(small, 1.0)));
}

TEST(Lsvi, PosteriorSampleStdMatchesPenalty) {
  Rng rng(34);
  const auto data = random_ridge_data(60, 5, rng);
  const auto post = lsvi_solve(data, 1.0);
  const Vector psi{0.1, 0.4, -0.3, 0.2, 0.0};
  const auto cmp = posterior_std_check(post, psi, 200'000, 9);
  EXPECT_NEAR(cmp.sampled / cmp.analytic, 1.0, 0.01);
  EXPECT_THROW(posterior_std_check(post, psi, 1, 9), UsageError);
}

TEST(ExactValues, SelfLoopGeometricSeries) {
  const auto disc = optimal_values(self_loop(0, 0.9));
  EXPECT_NEAR(disc.values.v[0][0], 10.0, 1e-9);
  const auto fin = optimal_values(self_loop(4, 1.0));
  ASSERT_EQ(fin.values.v.size(), 4u);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(fin.values.v[t][0], 4.0 - t, 1e-12);
}

TEST(ExactValues, OptimalMatchesTabularOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    for (std::size_t horizon : {std::size_t{0}, std::size_t{6}}) {
      const auto mdp = random_linear_mdp(5, 3, 4, horizon, 0.8, rng);
      const auto mine = optimal_values(mdp);
      const auto ref = oracles::tabular_value_oracle(mdp);
      ASSERT_EQ(mine.values.v.size(), ref.v.size());
      for (std::size_t t = 0; t < ref.v.size(); ++t) {
        for (std::size_t s = 0; s < 5; ++s) EXPECT_NEAR(mine.values.v[t][s], ref.v[t][s], 1e-9);
      }
    }
  }
}

TEST(ExactValues, PolicyEvaluationMatchesLinearSolve) {
  Rng rng(7);
  const auto mdp = random_linear_mdp(5, 3, 4, 0, 0.85, rng);
  TabularPolicy pi(5, 3);
  for (std::size_t s = 0; s < 5; ++s) {
    double tot = 0.0;
    for (std::size_t a = 0; a < 3; ++a) tot += (pi(s, a) = rng.uniform(0.1, 1.0));
    for (std::size_t a = 0; a < 3; ++a) pi(s, a) /= tot;
  }
  const auto mine = exact_values(mdp, pi);
  const auto ref = oracles::policy_value_linear_solve(mdp, pi);
  for (std::size_t s = 0; s < 5; ++s) EXPECT_NEAR(mine.v[0][s], ref[s], 1e-9);
}

TEST(ExactValues, DiscountedNeedsGammaBelowOne) {
  EXPECT_THROW(optimal_values(self_loop(0, 1.0)), ConfigError);
}

TEST(Episodes, ShapeAndStepDatasetTargets) {
  Rng rng(41);
  const auto mdp = random_linear_mdp(4, 2, 3, 3, 1.0, rng);
  const auto data = sample_episodes(mdp, uniform_policy(4, 2), 7, rng);
  ASSERT_EQ(data.size(), 3u);
  for (std::size_t t = 0; t + 1 < 3; ++t) {
    ASSERT_EQ(data[t].size(), 7u);
    for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(data[t][k].next_state, data[t + 1][k].state);
  }
  const Vector next_v{1.0, 2.0, 3.0, 4.0};
  const auto ds = step_dataset(mdp, data[0], next_v);
  for (std::size_t k = 0; k < 7; ++k) {
    const auto& tr = data[0][k];
    EXPECT_DOUBLE_EQ(ds.targets[k], tr.reward + next_v[tr.next_state]);
    EXPECT_DOUBLE_EQ(tr.reward, mdp.reward(tr.state, tr.action));
  }
}

TEST(XiCoverage, MonotoneInTau) {
  Rng rng(51);
  const auto mdp = random_linear_mdp(6, 3, 6, 5, 1.0, rng);
  XiCoverageOptions opts;
  opts.trials = 20;
  opts.tau_grid = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
  const auto cov = xi_quantifier_check(mdp, opts);
  for (std::size_t k = 1; k < cov.tau.size(); ++k) {
    EXPECT_GE(cov.tuple_coverage[k], cov.tuple_coverage[k - 1]);
    EXPECT_GE(cov.trial_coverage[k], cov.trial_coverage[k - 1]);
  }
  EXPECT_EQ(cov.tuple_coverage[0], 0.0);
  EXPECT_GT(cov.tuple_coverage.back(), 0.9);
}

TEST(XiCoverage, IndependentOfThreadSchedule) {
  Rng rng(52);
  const auto mdp = random_linear_mdp(6, 3, 6, 5, 1.0, rng);
  XiCoverageOptions opts;
  opts.trials = 8;
  opts.tau_grid = {1.0, 2.0};
  EXPECT_EQ(xi_quantifier_check(mdp, opts).tuple_coverage,
            xi_quantifier_check(mdp, opts).tuple_coverage);
}

TEST(Pevi, OptimalPolicyHasZeroGap) {
  Rng rng(61);
  const auto mdp = random_linear_mdp(6, 3, 6, 5, 1.0, rng);
  const auto opt = optimal_values(mdp);
  std::vector<Matrix> zero_pen(5, Matrix(6, 3));
  const auto g = suboptimality_gap(mdp, opt.policy, zero_pen, 0);
  EXPECT_NEAR(g.gap, 0.0, 1e-12);
  EXPECT_EQ(g.bound, 0.0);
}

TEST(Pevi, PessimisticQIsClippedAndPolicyIsGreedy) {
  Rng rng(62);
  const auto mdp = random_linear_mdp(6, 3, 6, 5, 1.0, rng);
  const auto data = sample_episodes(mdp, uniform_policy(6, 3), 100, rng);
  const auto sol = pessimistic_lsvi(mdp, data, 1.0, 1.0);
  ASSERT_EQ(sol.q.size(), 5u);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t s = 0; s < 6; ++s) {
      std::size_t best = 0;
      for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_GE(sol.q[t](s, a), 0.0);
        EXPECT_LE(sol.q[t](s, a), 5.0 - t);
        EXPECT_GT(sol.penalty[t](s, a), 0.0);
        if (sol.q[t](s, a) > sol.q[t](s, best)) best = a;
      }
      EXPECT_EQ(sol.policy[t](s, best), 1.0);
    }
  }
  const auto g = suboptimality_gap(mdp, sol.policy, sol.penalty, 0);
  EXPECT_GE(g.gap, -1e-12);
  EXPECT_GT(g.bound, 0.0);
}
