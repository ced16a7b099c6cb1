#pragma once

// Tanh-squashed Gaussian policy.
//
// The trunk maps s to [μ(s), raw log-std(s)]. A sample is
//   u = μ + exp(ls)·ε,  a = scale ∘ tanh(u) + offset
// with ls = clamp(raw, log_std_min, log_std_max).

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "drvf/matrix.hpp"
#include "drvf/mlp.hpp"
#include "drvf/params.hpp"
#include "drvf/rng.hpp"

namespace drvf::critic {
class EnsembleCritic;
}

namespace drvf::actor {

struct PolicyConfig {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<std::size_t> hidden = {64, 64};
  Vector action_low;   // defaults to −1 per dimension
  Vector action_high;  // defaults to +1 per dimension
  double log_std_min = -5.0;
  double log_std_max = 2.0;

  nlohmann::json to_json() const;
  static PolicyConfig from_json(const nlohmann::json& j);
};

// Trunk outputs for a batch, after the clamp.
struct PolicyHead {
  Matrix mean;
  Matrix log_std;
  Matrix raw_log_std;
};

class TanhGaussianPolicy {
 public:
  TanhGaussianPolicy() = default;
  TanhGaussianPolicy(PolicyConfig config, Rng& rng);

  const PolicyConfig& config() const noexcept { return config_; }
  std::size_t state_dim() const { return config_.state_dim; }
  std::size_t action_dim() const { return config_.action_dim; }
  const Vector& scale() const noexcept { return scale_; }
  const Vector& offset() const noexcept { return offset_; }

  const Mlp& trunk() const noexcept { return trunk_; }
  Mlp& mutable_trunk() { return trunk_; }

  PolicyHead head(const Matrix& states) const;
  PolicyHead head(const Matrix& states, MlpCache& cache) const;

  ParamList parameters();
  void save(const std::filesystem::path& path);
  static TanhGaussianPolicy load(const std::filesystem::path& path);

 private:
  PolicyConfig config_;
  Mlp trunk_;
  Vector scale_, offset_;
};

struct ActionSample {
  Matrix actions;
  Vector log_probs;
  Matrix pre_tanh;  // u
  Matrix noise;     // ε
};

ActionSample sample_actions(const TanhGaussianPolicy& policy, const Matrix& states, Rng& rng);
// Replays a recorded ε (rows × action_dim).
ActionSample sample_actions(const TanhGaussianPolicy& policy, const Matrix& states,
                            const Matrix& noise);

struct SingleAction {
  Vector action;
  double log_prob = 0.0;
};
SingleAction sample_action(const TanhGaussianPolicy& policy, std::span<const double> state,
                           Rng& rng);

// scale ∘ tanh(μ) + offset; no density.
Matrix deterministic_actions(const TanhGaussianPolicy& policy, const Matrix& states);
Vector deterministic_action(const TanhGaussianPolicy& policy, std::span<const double> state);

// log π(a|s) for actions strictly inside the box.
Vector log_prob(const TanhGaussianPolicy& policy, const Matrix& states, const Matrix& actions);

// K samples per state, row b·K + k. Detached: nothing here feeds a policy gradient.
Matrix ood_actions(const TanhGaussianPolicy& policy, const Matrix& states, std::size_t k,
                   Rng& rng);

struct ActorLoss {
  double loss = 0.0;
  double mean_q_min = 0.0;
  double mean_log_prob = 0.0;
  MlpGrads grads;
  // Draws used, kept for replay.
  Matrix action_noise;
  std::vector<Matrix> critic_noise;
};

// −mean_s [min over M·n online-critic samples of Q(s, a) − β log π(a|s)], a reparameterized.
ActorLoss actor_loss(const TanhGaussianPolicy& policy, const critic::EnsembleCritic& critic,
                     const Matrix& states, double beta, std::size_t n, Rng& rng);
ActorLoss actor_loss(const TanhGaussianPolicy& policy, const critic::EnsembleCritic& critic,
                     const Matrix& states, double beta, const Matrix& action_noise,
                     const std::vector<Matrix>& critic_noise);

}  // namespace drvf::actor
