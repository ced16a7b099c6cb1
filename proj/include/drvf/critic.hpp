#pragma once

// Ensemble of critics with a diagonal-Gaussian variational last layer.
//
// Member j maps (s, a) through a feature network to ψ_j(s, a) ∈ R^d; the
// posterior weight w ∈ R^{d+1} acts on φ = [ψ; 1] so the bias is Bayesian too.
// A weight sample is w = μ + softplus(ρ) ∘ z with z ~ N(0, I); one draw of
// n weights is shared across every (s, a) of a batch.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "drvf/matrix.hpp"
#include "drvf/mlp.hpp"
#include "drvf/params.hpp"
#include "drvf/rng.hpp"

namespace drvf::actor {
class TanhGaussianPolicy;
}

namespace drvf::critic {

struct GaussianLastLayer {
  Vector mean;       // μ_w, length d + 1 (last entry multiplies the constant 1)
  Vector raw_scale;  // σ_w = softplus(raw_scale)

  GaussianLastLayer() = default;
  GaussianLastLayer(std::size_t feature_dim, double init_sigma);

  std::size_t size() const { return mean.size(); }
  Vector sigma() const;
  ParamList parameters();
};

// n × (d+1) weight draws together with the standard-normal noise that made them.
struct WeightSamples {
  Matrix noise;
  Matrix weights;
};

WeightSamples sample_weights(const GaussianLastLayer& layer, std::size_t n, Rng& rng);
// Rebuilds weights from recorded noise.
Matrix weights_from_noise(const GaussianLastLayer& layer, const Matrix& noise);

// KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (σ² + μ² − 1 − log σ²).
double kl_to_prior(const GaussianLastLayer& layer);

struct CriticMember {
  Mlp features;
  GaussianLastLayer head;

  ParamList parameters();
};

struct CriticConfig {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  // Feature-network hidden widths; the last entry is the feature dimension d.
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t ensemble_size = 3;
  // Posterior samples per member used when the checkpoint is queried.
  std::size_t samples = 10;
  double init_sigma = 0.05;
  bool layer_norm = false;

  nlohmann::json to_json() const;
  static CriticConfig from_json(const nlohmann::json& j);
};

class EnsembleCritic {
 public:
  EnsembleCritic() = default;
  EnsembleCritic(const CriticConfig& config, Rng& rng);

  const CriticConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return online_.size(); }
  std::size_t feature_dim() const { return config_.hidden.back(); }
  std::size_t input_dim() const { return config_.state_dim + config_.action_dim; }

  CriticMember& member(std::size_t j) { return online_.at(j); }
  const CriticMember& member(std::size_t j) const { return online_.at(j); }
  CriticMember& target(std::size_t j) { return target_.at(j); }
  const CriticMember& target(std::size_t j) const { return target_.at(j); }
  const CriticMember& pick(std::size_t j, bool use_target) const {
    return use_target ? target(j) : member(j);
  }

  // target ← ρ·target + (1 − ρ)·online for every member.
  void soft_update_targets(double rho);
  void sync_targets();

  // Section "member<j>/online/..." and "member<j>/target/..." per member.
  ParamList all_parameters();
  void save(const std::filesystem::path& path);
  static EnsembleCritic load(const std::filesystem::path& path);

 private:
  CriticConfig config_;
  std::vector<CriticMember> online_;
  std::vector<CriticMember> target_;
};

// [states | actions] row-wise.
Matrix concat_inputs(const Matrix& states, const Matrix& actions);

// Sampled Q-values laid out as values[(b·M + j)·n + k].
struct QSampleBatch {
  std::size_t batch = 0;
  std::size_t members = 0;
  std::size_t samples = 0;
  std::vector<double> values;
  std::vector<Matrix> noise;  // per member, n × (d+1), for replay

  double at(std::size_t b, std::size_t j, std::size_t k) const {
    return values[(b * members + j) * samples + k];
  }
  // All M·n samples of row b.
  std::span<const double> row(std::size_t b) const {
    return {values.data() + b * members * samples, members * samples};
  }
  // The n samples of member j at row b.
  std::span<const double> member_row(std::size_t b, std::size_t j) const {
    return {values.data() + (b * members + j) * samples, samples};
  }
};

// Fresh per-member noise, n × (d+1) each.
std::vector<Matrix> draw_noise(const EnsembleCritic& critic, std::size_t n, Rng& rng);

QSampleBatch q_samples(const EnsembleCritic& critic, const Matrix& states, const Matrix& actions,
                       std::size_t n, Rng& rng, bool use_target);
QSampleBatch q_samples(const EnsembleCritic& critic, const Matrix& states, const Matrix& actions,
                       const std::vector<Matrix>& noise, bool use_target);

// Population standard deviation of a sample set (needs at least two values).
double repulsive_term(std::span<const double> samples);

// Φ⁻¹((N − π/8) / (N − π/4 + 1)): expected shortfall of the minimum of N
// Gaussian draws in units of their standard deviation.
double lcb_alpha(std::size_t n);

struct TransitionBatch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector dones;
  std::size_t size() const { return rewards.size(); }
};

// r + γ(1 − done)·mean over next actions of
// [min_{j,k} Q⁻_{j,k}(s', a') − β log π(a'|s')], target networks only.
// next_actions holds `per_state` consecutive rows per transition.
Vector pessimistic_target(const EnsembleCritic& critic, const TransitionBatch& batch,
                          const Matrix& next_actions, const Vector& next_log_probs,
                          double beta, double gamma, const std::vector<Matrix>& noise);
Vector pessimistic_target(const EnsembleCritic& critic, const TransitionBatch& batch,
                          const actor::TanhGaussianPolicy& policy, double beta, double gamma,
                          std::size_t n, Rng& rng, std::size_t next_actions_per_state = 1);

enum class RepulsivePooling { kJoint, kPerMember };

struct CriticLossOptions {
  double eta_q = 5.0;
  double eta_ood = 3.0;
  double kl_scale = 1e-3;
  RepulsivePooling pooling = RepulsivePooling::kJoint;
};

struct CriticLossInputs {
  const Matrix& states;
  const Matrix& actions;
  const Vector& targets;
  const Matrix& ood_states;   // may be empty when eta_ood = 0
  const Matrix& ood_actions;
};

struct MemberGrads {
  MlpGrads features;
  Vector head_mean;
  Vector head_raw_scale;

  ParamList parameters();
};

struct MemberLoss {
  double loss = 0.0;
  double bellman = 0.0;  // mean over batch and samples of (Q − y)²
  double kl = 0.0;       // unscaled KL to the prior
  double ood_std = 0.0;  // mean repulsive term over the OOD batch
  std::optional<MemberGrads> grads;
};

// Losses of every member from shared forward passes. `data_noise[j]` and
// `ood_noise[j]` are the recorded weight draws of member j.
std::vector<MemberLoss> critic_losses(const EnsembleCritic& critic, const CriticLossInputs& in,
                                      const CriticLossOptions& options,
                                      const std::vector<Matrix>& data_noise,
                                      const std::vector<Matrix>& ood_noise,
                                      bool with_grads = true);

// Loss and gradient of a single member.
MemberLoss critic_loss(const EnsembleCritic& critic, std::size_t member,
                       const CriticLossInputs& in, const CriticLossOptions& options,
                       const std::vector<Matrix>& data_noise,
                       const std::vector<Matrix>& ood_noise);

}  // namespace drvf::critic
