#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "drvf/dataset.hpp"
#include "drvf/envs.hpp"
#include "drvf/errors.hpp"

using namespace drvf;

namespace {

// Hand-built dataset with actions uniform on [lo, hi].
data::OfflineDataset uniform_action_dataset(std::size_t rows, double lo, double hi,
                                            std::uint64_t seed) {
  data::OfflineDataset ds;
  ds.meta = {envs::kPointMass, "custom", seed, 1, rows, 2, 1, 0};
  ds.states = Matrix(rows, 2);
  ds.actions = Matrix(rows, 1);
  ds.next_states = Matrix(rows, 2);
  ds.rewards.assign(rows, 0.0);
  ds.dones.assign(rows, 0.0);
  Rng rng(seed);
  for (std::size_t i = 0; i < rows; ++i) {
    ds.states(i, 0) = rng.uniform(-1.0, 1.0);
    ds.states(i, 1) = rng.uniform(-1.0, 1.0);
    ds.actions(i, 0) = rng.uniform(lo, hi);
  }
  ds.dones.back() = 1.0;
  return ds;
}

}  // namespace

TEST(PointMass, StepMatchesHandComputation) {
  envs::PointMass env;
  Rng rng(1);
  // Force 2 is clipped to 1: v' = 0.2 + 0.1, x' = 0.5 + 0.1·0.3.
  const auto r = env.step(Vector{0.5, 0.2}, Vector{2.0}, rng);
  EXPECT_NEAR(r.next_state[1], 0.3, 1e-15);
  EXPECT_NEAR(r.next_state[0], 0.53, 1e-15);
  EXPECT_NEAR(r.reward, -0.53 * 0.53 - 0.01, 1e-15);
  EXPECT_FALSE(r.terminal);
}

TEST(PointMass, ResetStartsAtRestInsideUnitInterval) {
  envs::PointMass env;
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Vector s = env.reset(rng);
    EXPECT_GE(s[0], -1.0);
    EXPECT_LE(s[0], 1.0);
    EXPECT_EQ(s[1], 0.0);
  }
}

TEST(PointMass, ExpertBeatsMediocreBeatsRandom) {
  const auto expert = data::generate_dataset(envs::kPointMass, "expert", 100, 5);
  const auto mediocre = data::generate_dataset(envs::kPointMass, "mediocre", 100, 5);
  const auto random = data::generate_dataset(envs::kPointMass, "random", 100, 5);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double e = mean(expert.episode_returns());
  const double m = mean(mediocre.episode_returns());
  const double r = mean(random.episode_returns());
  EXPECT_GT(e, m);
  EXPECT_GT(m, r);
}

TEST(LinearChain, TransitionRowsSumToOne) {
  envs::LinearChain env;
  const auto& spec = env.spec();
  for (std::size_t s = 0; s < spec.num_states; ++s) {
    for (std::size_t a = 0; a < spec.num_actions; ++a) {
      double total = 0.0;
      for (std::size_t n = 0; n < spec.num_states; ++n) {
        const double p = spec.transition(s, a, n);
        EXPECT_GE(p, 0.0);
        total += p;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(LinearChain, EmpiricalSlipMatchesModel) {
  envs::LinearChain env;
  Rng rng(11);
  const Vector s = env.encode(2);
  int moved_right = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    const auto r = env.step(s, Vector{1.0}, rng);
    if (env.decode(r.next_state) == 3) ++moved_right;
  }
  // 0.9 ± 4 binomial standard deviations.
  const double sd = std::sqrt(0.9 * 0.1 / trials);
  EXPECT_NEAR(moved_right / static_cast<double>(trials), 0.9, 4.0 * sd);
}

TEST(LinearChain, RejectsNonIndexActionsAndBadStates) {
  envs::LinearChain env;
  Rng rng(1);
  EXPECT_THROW(env.step(env.encode(0), Vector{0.5}, rng), ShapeError);
  EXPECT_THROW(env.step(env.encode(0), Vector{2.0}, rng), ShapeError);
  EXPECT_THROW(env.step(Vector(6, 0.0), Vector{1.0}, rng), ShapeError);
}

TEST(LinearChain, ExpertReachesGoalMoreOftenThanMediocre) {
  const auto expert = data::generate_dataset(envs::kLinearChain, "expert", 200, 2);
  const auto mediocre = data::generate_dataset(envs::kLinearChain, "mediocre", 200, 2);
  double e = 0.0, m = 0.0;
  for (double r : expert.episode_returns()) e += r;
  for (double r : mediocre.episode_returns()) m += r;
  EXPECT_GT(e, m);
}

TEST(Envs, UnknownIdsThrow) {
  EXPECT_THROW(envs::make_env("hopper"), ConfigError);
  envs::PointMass pm;
  EXPECT_THROW(envs::make_behavior(pm, "superb"), ConfigError);
  EXPECT_THROW(data::generate_dataset(envs::kPointMass, "superb", 1, 0), ConfigError);
  EXPECT_THROW(data::generate_dataset(envs::kPointMass, "random", 0, 0), ConfigError);
}

TEST(Dataset, SingleEpisodeHasHorizonRowsAndFinalDone) {
  const auto ds = data::generate_dataset(envs::kPointMass, "mediocre", 1, 0);
  ASSERT_EQ(ds.size(), 50u);
  for (std::size_t i = 0; i + 1 < ds.size(); ++i) EXPECT_EQ(ds.dones[i], 0.0);
  EXPECT_EQ(ds.dones.back(), 1.0);
  // Consecutive rows chain: next_state of t is the state of t + 1.
  for (std::size_t i = 0; i + 1 < ds.size(); ++i) {
    EXPECT_EQ(ds.next_states(i, 0), ds.states(i + 1, 0));
    EXPECT_EQ(ds.next_states(i, 1), ds.states(i + 1, 1));
  }
  EXPECT_EQ(ds.episode_returns().size(), 1u);
}

TEST(Dataset, RandomBehaviorActionsPassUniformKsTest) {
  const auto ds = data::generate_dataset(envs::kPointMass, "random", 200, 17);
  std::vector<double> a(ds.actions.flat().begin(), ds.actions.flat().end());
  ASSERT_EQ(a.size(), 10000u);
  std::sort(a.begin(), a.end());
  double d = 0.0;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = (a[i] + 1.0) / 2.0;
    d = std::max({d, std::abs((i + 1) / n - f), std::abs(f - i / n)});
  }
  // Critical value at level 0.001.
  EXPECT_LT(d, 1.95 / std::sqrt(n));
}

TEST(Dataset, SameSeedGivesIdenticalBytes) {
  const auto a = data::encode_dataset(data::generate_dataset(envs::kPointMass, "mixed", 20, 9));
  const auto b = data::encode_dataset(data::generate_dataset(envs::kPointMass, "mixed", 20, 9));
  const auto c = data::encode_dataset(data::generate_dataset(envs::kPointMass, "mixed", 20, 10));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Dataset, FileRoundTripIsExact) {
  const auto ds = data::generate_dataset(envs::kLinearChain, "mediocre", 7, 4);
  const auto path = std::filesystem::temp_directory_path() / "drvf_dataset_roundtrip.bin";
  data::save_dataset(ds, path);
  const auto back = data::load_dataset(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.meta.env, ds.meta.env);
  EXPECT_EQ(back.meta.behavior, "mediocre");
  EXPECT_EQ(back.meta.discrete_actions, 2u);
  EXPECT_EQ(back.states.flat().size(), ds.states.flat().size());
  EXPECT_TRUE(std::equal(ds.states.flat().begin(), ds.states.flat().end(), back.states.flat().begin()));
  EXPECT_EQ(back.rewards, ds.rewards);
  EXPECT_EQ(back.dones, ds.dones);
  EXPECT_EQ(data::encode_dataset(back), data::encode_dataset(ds));
}

TEST(Dataset, TruncatedOrCorruptFilesThrowFormatError) {
  const auto bytes = data::encode_dataset(data::generate_dataset(envs::kPointMass, "random", 2, 1));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 8);
  EXPECT_THROW(data::decode_dataset(truncated), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(data::decode_dataset(bad_magic), FormatError);
  auto extra = bytes;
  extra.insert(extra.end(), 8, 0);
  EXPECT_THROW(data::decode_dataset(extra), FormatError);
  EXPECT_THROW(data::load_dataset("/nonexistent/drvf.bin"), std::exception);
}

TEST(Dataset, EmptyDatasetIsAValidFile) {
  data::OfflineDataset ds;
  ds.meta = {envs::kPointMass, "random", 0, 0, 50, 2, 1, 0};
  ds.states = Matrix(0, 2);
  ds.actions = Matrix(0, 1);
  ds.next_states = Matrix(0, 2);
  const auto back = data::decode_dataset(data::encode_dataset(ds));
  EXPECT_TRUE(back.empty());
  EXPECT_TRUE(back.episode_returns().empty());
  EXPECT_THROW(data::ood_probe_sets(back, {}), UsageError);
}

TEST(Dataset, ValidateRejectsBadDoneFlags) {
  auto ds = data::generate_dataset(envs::kPointMass, "random", 1, 1);
  ds.dones[3] = 0.5;
  EXPECT_THROW(ds.validate(), FormatError);
  EXPECT_THROW(data::encode_dataset(ds), FormatError);
}

TEST(ProbeSets, RegionProbeHasNoOverlapWithSupport) {
  const auto ds = uniform_action_dataset(2000, -1.0, 0.0, 3);
  data::ProbeOptions o;
  o.size = 500;
  o.ood_low = 0.5;
  o.ood_high = 1.0;
  o.mirror = false;
  const auto p = data::ood_probe_sets(ds, o);
  ASSERT_EQ(p.in_states.rows(), 500u);
  ASSERT_EQ(p.ood_states.rows(), 500u);
  for (std::size_t i = 0; i < 500; ++i) {
    EXPECT_LE(p.in_actions(i, 0), 0.0);
    EXPECT_GE(p.ood_actions(i, 0), 0.5);
    EXPECT_LE(p.ood_actions(i, 0), 1.0);
    EXPECT_EQ(p.in_states(i, 0), p.ood_states(i, 0));
  }
}

TEST(ProbeSets, InDistributionPairsAreDatasetRows) {
  const auto ds = data::generate_dataset(envs::kPointMass, "mediocre", 10, 8);
  data::ProbeOptions o;
  o.size = 200;
  const auto p = data::ood_probe_sets(ds, o);
  for (std::size_t i = 0; i < p.in_states.rows(); ++i) {
    bool found = false;
    for (std::size_t r = 0; r < ds.size() && !found; ++r) {
      found = ds.states(r, 0) == p.in_states(i, 0) && ds.states(r, 1) == p.in_states(i, 1) &&
              ds.actions(r, 0) == p.in_actions(i, 0);
    }
    EXPECT_TRUE(found) << "probe row " << i;
  }
}

TEST(ProbeSets, MirroredRegionCoversBothSigns) {
  const auto ds = data::generate_dataset(envs::kPointMass, "mediocre", 10, 8);
  const auto p = data::ood_probe_sets(ds, {});
  std::size_t neg = 0;
  for (std::size_t i = 0; i < p.ood_actions.rows(); ++i) {
    const double a = p.ood_actions(i, 0);
    EXPECT_GE(std::abs(a), 0.7);
    EXPECT_LE(std::abs(a), 1.0);
    if (a < 0) ++neg;
  }
  EXPECT_GT(neg, 400u);
  EXPECT_LT(neg, 600u);
}

TEST(ProbeSets, ExpertProbeUsesTheController) {
  const auto ds = data::generate_dataset(envs::kPointMass, "mediocre", 10, 8);
  data::ProbeOptions o;
  o.size = 50;
  o.expert = envs::point_mass_expert;
  const auto p = data::ood_probe_sets(ds, o);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(p.ood_actions(i, 0), envs::point_mass_expert(p.ood_states.row(i))[0]);
  }
}
