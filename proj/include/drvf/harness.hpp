#pragma once

// Training loop, evaluation and uncertainty reporting.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drvf/actor.hpp"
#include "drvf/critic.hpp"
#include "drvf/dataset.hpp"
#include "drvf/envs.hpp"

namespace drvf::harness {

struct TrainConfig {
  std::size_t ensemble_size = 3;      // M
  std::size_t posterior_samples = 10;  // n
  std::size_t ood_actions = 10;        // K
  std::size_t next_actions = 1;        // next-action draws per target
  double eta_q = 5.0;
  double eta_ood = 3.0;
  double kl_scale = 1e-3;
  double beta = 0.2;
  double gamma = 0.99;
  double rho = 0.995;
  double lambda = 1.0;  // ridge coefficient of the linear-MDP suite
  double critic_lr = 3e-4;
  double actor_lr = 3e-4;
  double weight_decay = 0.0;  // critic only
  bool layer_norm = false;
  double init_sigma = 0.05;
  std::vector<std::size_t> critic_hidden = {64, 64};
  std::vector<std::size_t> actor_hidden = {64, 64};
  std::size_t batch_size = 256;
  std::size_t steps = 50'000;
  std::size_t eval_interval = 1000;
  std::size_t eval_episodes = 10;
  std::uint64_t seed = 0;
  std::string env = envs::kPointMass;
  std::string dataset;
  critic::RepulsivePooling pooling = critic::RepulsivePooling::kJoint;

  // Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are a ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);
};

struct MetricsRecord {
  std::size_t step = 0;
  double bellman = 0.0;      // mean over members, fixed probe batch
  double kl = 0.0;           // mean over members
  double ood_std = 0.0;      // M·n std at policy actions on the probe states
  double in_dist_std = 0.0;  // M·n std at dataset pairs of the probe batch
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
};

// CSV with the header below; values printed with 17 significant digits.
inline constexpr const char* kMetricsHeader =
    "step,bellman,kl,ood_std,in_dist_std,eval_return_mean,eval_return_std";
std::string metrics_csv_row(const MetricsRecord& r);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records);

struct TrainResult {
  actor::TanhGaussianPolicy policy;
  critic::EnsembleCritic critic;
  std::vector<MetricsRecord> metrics;
};

struct TrainHooks {
  // Called after every metrics record, in step order.
  std::function<void(const MetricsRecord&)> on_record;
  // Called after every record with the elapsed wall-clock seconds.
  std::function<void(std::size_t step, double seconds)> on_timing;
  // Written as failure.json when a loss turns non-finite.
  std::optional<std::filesystem::path> snapshot_dir;
};

// Full DRVF training on a continuous-action dataset. Deterministic given the config.
TrainResult train(const TrainConfig& config, const data::OfflineDataset& dataset,
                  const TrainHooks& hooks = {});

struct ReturnStats {
  double mean = 0.0;
  double std = 0.0;  // population std over episodes
  std::vector<double> returns;
};

using ActionFn = std::function<Vector(std::span<const double> state)>;

// Undiscounted returns; episode e uses the stream keyed by (seed, e).
ReturnStats evaluate_policy(const envs::Env& env, const ActionFn& act, std::size_t episodes,
                            std::uint64_t seed);
// Deterministic mode: scale·tanh(μ) + offset.
ReturnStats evaluate_policy(const envs::Env& env, const actor::TanhGaussianPolicy& policy,
                            std::size_t episodes, std::uint64_t seed);

struct UncertaintyReport {
  double in_dist_std = 0.0;
  double ood_std = 0.0;
  std::optional<double> ratio;  // absent when the in-distribution std is 0
  std::size_t pairs = 0;
  std::size_t samples = 0;  // M·n per pair

  nlohmann::json to_json() const;
};

// Per-pair std over all M·n online-critic samples, averaged per set.
UncertaintyReport uncertainty_report(const critic::EnsembleCritic& critic,
                                     const data::ProbeSets& probes, std::size_t n,
                                     std::uint64_t seed);

// Probe construction used by the CLI and the acceptance suite.
data::ProbeOptions default_probe_options(const std::string& env_id, std::uint64_t seed);

}  // namespace drvf::harness
