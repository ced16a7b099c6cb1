#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drvf/errors.hpp"
#include "drvf/harness.hpp"
#include "drvf/stats.hpp"

using namespace drvf;
using namespace drvf::harness;

namespace {

TrainConfig tiny_config(std::size_t steps = 20) {
  TrainConfig c;
  c.critic_hidden = {8, 8};
  c.actor_hidden = {8, 8};
  c.ensemble_size = 2;
  c.posterior_samples = 3;
  c.ood_actions = 2;
  c.batch_size = 16;
  c.steps = steps;
  c.eval_interval = 5;
  c.eval_episodes = 2;
  c.seed = 4;
  return c;
}

const data::OfflineDataset& small_dataset() {
  static const auto ds = data::generate_dataset(envs::kPointMass, "mediocre", 10, 3);
  return ds;
}

std::string csv(const std::vector<MetricsRecord>& m) {
  std::ostringstream s;
  write_metrics_csv(s, m);
  return s.str();
}

std::vector<double> flatten(ParamList list) {
  std::vector<double> out;
  for (const auto& t : list) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

// Zero reward everywhere, horizon 7.
class NullEnv final : public envs::Env {
 public:
  std::string id() const override { return "null"; }
  std::size_t state_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  std::size_t horizon() const override { return 7; }
  Vector reset(Rng& rng) const override { return {rng.uniform()}; }
  envs::StepResult step(std::span<const double> s, std::span<const double>, Rng&) const override {
    return {{s[0]}, 0.0, false};
  }
};

}  // namespace

TEST(TrainConfig, JsonRoundTripAndDefaults) {
  TrainConfig c = tiny_config();
  c.pooling = critic::RepulsivePooling::kPerMember;
  c.layer_norm = true;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());

  const auto partial = TrainConfig::from_json({{"eta_ood", 0.0}, {"seed", 9}});
  EXPECT_EQ(partial.eta_ood, 0.0);
  EXPECT_EQ(partial.seed, 9u);
  EXPECT_EQ(partial.ensemble_size, 3u);
  EXPECT_EQ(partial.posterior_samples, 10u);
  EXPECT_EQ(partial.ood_actions, 10u);
  EXPECT_EQ(partial.beta, 0.2);
  EXPECT_EQ(partial.gamma, 0.99);
  EXPECT_EQ(partial.rho, 0.995);
  EXPECT_EQ(partial.batch_size, 256u);
  EXPECT_EQ(partial.steps, 50'000u);
}

TEST(TrainConfig, RejectsBadValues) {
  using J = nlohmann::json;
  const J bad[] = {
      {{"gamma", 0.0}},          {{"gamma", 1.5}},           {{"rho", -0.1}},
      {{"eta_q", 0.0}},          {{"eta_ood", -1.0}},        {{"ensemble_size", 0}},
      {{"posterior_samples", 0}}, {{"ood_actions", 0}},       {{"pooling", "mean"}},
      {{"env", "hopper"}},       {{"env", "linear-chain"}},  {{"batch_size", 0}},
      {{"eval_interval", 0}},    {{"critic_hidden", J::array()}}, {{"unknown_knob", 1}},
      {{"gamma", "high"}},
  };
  for (const auto& j : bad) EXPECT_THROW(TrainConfig::from_json(j), ConfigError) << j.dump();
  EXPECT_THROW(TrainConfig::from_json(J::array()), ConfigError);
  // One sample per member still pools M·n ≥ 2 jointly, but not per member.
  EXPECT_NO_THROW(TrainConfig::from_json({{"posterior_samples", 1}}));
  EXPECT_THROW(TrainConfig::from_json({{"posterior_samples", 1}, {"pooling", "per-member"}}),
               ConfigError);
  // K is irrelevant without the repulsive term.
  EXPECT_NO_THROW(TrainConfig::from_json({{"ood_actions", 0}, {"eta_ood", 0.0}}));
}

TEST(TrainConfig, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "drvf_train_config.json";
  std::ofstream(path) << R"({"steps": 12, "seed": 5})";
  const auto c = TrainConfig::load(path);
  EXPECT_EQ(c.steps, 12u);
  std::ofstream(path) << "{not json";
  EXPECT_THROW(TrainConfig::load(path), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(TrainConfig::load(path), ConfigError);
}

TEST(Train, ZeroStepsKeepsInitialNetworksAndOneRecord) {
  auto a = train(tiny_config(0), small_dataset());
  auto b = train(tiny_config(0), small_dataset());
  ASSERT_EQ(a.metrics.size(), 1u);
  EXPECT_EQ(a.metrics[0].step, 0u);
  EXPECT_EQ(flatten(a.policy.parameters()), flatten(b.policy.parameters()));
  auto c = train(tiny_config(5), small_dataset());
  EXPECT_NE(flatten(a.policy.parameters()), flatten(c.policy.parameters()));
  EXPECT_NE(flatten(a.critic.all_parameters()), flatten(c.critic.all_parameters()));
}

TEST(Train, MetricsRowCountIsFloorStepsOverIntervalPlusOne) {
  for (std::size_t steps : {0u, 4u, 5u, 7u, 12u}) {
    auto c = tiny_config(steps);
    c.eval_interval = 3;
    const auto r = train(c, small_dataset());
    ASSERT_EQ(r.metrics.size(), steps / 3 + 1) << steps;
    for (std::size_t i = 0; i < r.metrics.size(); ++i) EXPECT_EQ(r.metrics[i].step, 3 * i);
  }
}

TEST(Train, IdenticalRunsGiveIdenticalMetricsAndWeights) {
  auto a = train(tiny_config(), small_dataset());
  auto b = train(tiny_config(), small_dataset());
  EXPECT_EQ(csv(a.metrics), csv(b.metrics));
  EXPECT_EQ(flatten(a.policy.parameters()), flatten(b.policy.parameters()));
  EXPECT_EQ(flatten(a.critic.all_parameters()), flatten(b.critic.all_parameters()));
  auto other = tiny_config();
  other.seed = 5;
  EXPECT_NE(csv(train(other, small_dataset()).metrics), csv(a.metrics));
}

TEST(Train, HooksSeeEveryRecordInOrder) {
  std::vector<std::size_t> seen, timed;
  TrainHooks hooks;
  hooks.on_record = [&](const MetricsRecord& r) { seen.push_back(r.step); };
  hooks.on_timing = [&](std::size_t step, double s) {
    EXPECT_GE(s, 0.0);
    timed.push_back(step);
  };
  const auto r = train(tiny_config(), small_dataset(), hooks);
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 5, 10, 15, 20}));
  EXPECT_EQ(timed, seen);
  for (const auto& m : r.metrics) {
    EXPECT_TRUE(std::isfinite(m.bellman));
    EXPECT_GE(m.kl, 0.0);
    EXPECT_GE(m.ood_std, 0.0);
    EXPECT_GE(m.in_dist_std, 0.0);
    EXPECT_GE(m.eval_return_std, 0.0);
  }
}

TEST(Train, RejectsMismatchedDataset) {
  const auto chain = data::generate_dataset(envs::kLinearChain, "random", 2, 1);
  EXPECT_THROW(train(tiny_config(), chain), ConfigError);
  auto ds = small_dataset();
  ds.meta.env = "other";
  EXPECT_THROW(train(tiny_config(), ds), ConfigError);
  data::OfflineDataset empty;
  empty.meta = small_dataset().meta;
  empty.states = Matrix(0, 2);
  empty.actions = Matrix(0, 1);
  empty.next_states = Matrix(0, 2);
  EXPECT_THROW(train(tiny_config(), empty), ConfigError);
}

TEST(Train, NonFiniteLossAbortsWithSnapshot) {
  auto ds = small_dataset();
  for (double& r : ds.rewards) r = 1e300;
  const auto dir = std::filesystem::temp_directory_path() / "drvf_snapshot_test";
  std::filesystem::remove_all(dir);
  TrainHooks hooks;
  hooks.snapshot_dir = dir;
  EXPECT_THROW(train(tiny_config(), ds, hooks), NumericError);
  ASSERT_TRUE(std::filesystem::exists(dir / "failure.json"));
  std::ifstream in(dir / "failure.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_LE(j.at("step").get<std::size_t>(), 20u);
  EXPECT_TRUE(j.contains("config"));
  EXPECT_FALSE(j.at("error").get<std::string>().empty());
  std::filesystem::remove_all(dir);
}

TEST(Train, RepulsiveTermRaisesOodStd) {
  auto with = tiny_config(200);
  with.eval_interval = 50;
  with.eta_ood = 10.0;
  auto without = with;
  without.eta_ood = 0.0;
  const auto a = train(with, small_dataset());
  const auto b = train(without, small_dataset());
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 1; i < a.metrics.size(); ++i) {
    EXPECT_GE(a.metrics[i].ood_std, b.metrics[i].ood_std) << "step " << a.metrics[i].step;
  }
}

TEST(MetricsCsv, HeaderAndExactRoundTrip) {
  MetricsRecord r{10, 0.1, 2.5, 1.0 / 3.0, 0.25, -7.5, 1e-17};
  std::ostringstream s;
  write_metrics_csv(s, {r});
  std::istringstream in(s.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, kMetricsHeader);
  std::vector<double> vals;
  std::stringstream rs(row);
  for (std::string cell; std::getline(rs, cell, ',');) vals.push_back(std::stod(cell));
  ASSERT_EQ(vals.size(), 7u);
  EXPECT_EQ(vals[0], 10.0);
  EXPECT_EQ(vals[3], 1.0 / 3.0);
  EXPECT_EQ(vals[6], 1e-17);
}

TEST(EvaluatePolicy, ExpertControllerMatchesDirectSimulation) {
  envs::PointMass env;
  const auto stats = evaluate_policy(
      env, [](std::span<const double> s) { return envs::point_mass_expert(s); }, 5, 21);
  for (std::size_t e = 0; e < 5; ++e) {
    Rng rng = Rng::keyed(21, {e});
    double x = rng.uniform(-1.0, 1.0), v = 0.0, ret = 0.0;
    for (int t = 0; t < 50; ++t) {
      const double f = std::clamp(-3.0 * x - 2.5 * v, -1.0, 1.0);
      v += 0.1 * f;
      x += 0.1 * v;
      ret += -x * x - 0.01 * f * f;
    }
    EXPECT_NEAR(stats.returns[e], ret, 1e-9);
  }
}

TEST(EvaluatePolicy, ZeroRewardAndSingleEpisode) {
  NullEnv env;
  const auto z = evaluate_policy(env, [](std::span<const double>) { return Vector{0.0}; }, 4, 1);
  EXPECT_EQ(z.mean, 0.0);
  EXPECT_EQ(z.std, 0.0);
  envs::PointMass pm;
  const auto one = evaluate_policy(pm, [](std::span<const double>) { return Vector{0.3}; }, 1, 2);
  EXPECT_EQ(one.std, 0.0);
  EXPECT_THROW(evaluate_policy(pm, [](std::span<const double>) { return Vector{0.0}; }, 0, 2),
               UsageError);
}

TEST(EvaluatePolicy, PolicyOverloadUsesDeterministicAction) {
  Rng rng(3);
  actor::PolicyConfig pc;
  pc.state_dim = 2;
  pc.action_dim = 1;
  pc.hidden = {4};
  actor::TanhGaussianPolicy p(pc, rng);
  envs::PointMass env;
  const auto a = evaluate_policy(env, p, 3, 8);
  const auto b = evaluate_policy(
      env, [&](std::span<const double> s) { return actor::deterministic_action(p, s); }, 3, 8);
  EXPECT_EQ(a.returns, b.returns);
}

TEST(UncertaintyReport, CollapsedCriticGivesNullRatio) {
  Rng rng(5);
  critic::CriticConfig cc;
  cc.state_dim = 2;
  cc.action_dim = 1;
  cc.hidden = {6};
  cc.ensemble_size = 2;
  critic::EnsembleCritic c(cc, rng);
  copy_values(c.member(1).parameters(), c.member(0).parameters());
  for (std::size_t j = 0; j < 2; ++j) {
    for (double& r : c.member(j).head.raw_scale) r = -800.0;  // σ_w underflows to 0
  }
  const auto probes = data::ood_probe_sets(small_dataset(), {});
  const auto rep = uncertainty_report(c, probes, 4, 1);
  EXPECT_EQ(rep.in_dist_std, 0.0);
  EXPECT_EQ(rep.ood_std, 0.0);
  EXPECT_FALSE(rep.ratio.has_value());
  EXPECT_TRUE(rep.to_json().at("ratio").is_null());
}

TEST(UncertaintyReport, SwappingProbeSetsInvertsRatio) {
  Rng rng(6);
  critic::CriticConfig cc;
  cc.state_dim = 2;
  cc.action_dim = 1;
  cc.hidden = {6};
  cc.init_sigma = 0.4;
  critic::EnsembleCritic c(cc, rng);
  auto probes = data::ood_probe_sets(small_dataset(), {});
  const auto fwd = uncertainty_report(c, probes, 5, 2);
  std::swap(probes.in_states, probes.ood_states);
  std::swap(probes.in_actions, probes.ood_actions);
  const auto rev = uncertainty_report(c, probes, 5, 2);
  ASSERT_TRUE(fwd.ratio && rev.ratio);
  EXPECT_NEAR(*fwd.ratio * *rev.ratio, 1.0, 1e-12);
  EXPECT_EQ(fwd.pairs, 1000u);
  EXPECT_EQ(fwd.samples, 15u);
}
