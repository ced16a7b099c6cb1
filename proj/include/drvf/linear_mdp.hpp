#pragma once

// Finite linear MDPs and the least-squares value iteration machinery used to
// check the LCB penalty against exact ground truth.
//
// Transition kernel P(s'|s,a) = ⟨ψ(s,a), φ(s')⟩ and reward r(s,a) = ψ(s,a)ᵀυ.
// Finite-horizon problems index steps t = 0 … T−1 (horizon T > 0); horizon 0
// denotes the infinite-horizon discounted problem.

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "drvf/matrix.hpp"
#include "drvf/rng.hpp"

namespace drvf::linear_mdp {

struct LinearMdpSpec {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t dim = 0;
  Matrix features;       // (S·A) × d, row s·A + a holds ψ(s,a)
  Matrix next_measure;   // S × d, row s' holds φ(s')
  Vector reward_weights; // d
  std::size_t horizon = 0;
  double gamma = 1.0;

  std::span<const double> feature(std::size_t s, std::size_t a) const {
    return features.row(s * num_actions + a);
  }
  double reward(std::size_t s, std::size_t a) const;
  double transition(std::size_t s, std::size_t a, std::size_t next) const;

  // Throws ConfigError unless shapes agree, transitions are a valid kernel,
  // ‖ψ‖ ≤ 1 and rewards lie in [0, 1].
  void validate(double tol = 1e-9) const;

  nlohmann::json to_json() const;
  static LinearMdpSpec from_json(const nlohmann::json& j);
};

// Random linear MDP over `dim` latent states: ψ(s,a) is a point of the
// probability simplex and φ(·) holds one next-state distribution per latent
// state, so every kernel row is a mixture of distributions.
LinearMdpSpec random_linear_mdp(std::size_t num_states, std::size_t num_actions,
                                std::size_t dim, std::size_t horizon, double gamma, Rng& rng);

// Rows are states, columns action probabilities.
using TabularPolicy = Matrix;

TabularPolicy uniform_policy(std::size_t num_states, std::size_t num_actions);

// Q and V tables per step. Finite-horizon results hold T entries; discounted
// results hold a single stationary entry.
struct ValueTables {
  std::vector<Matrix> q;  // S × A
  std::vector<Vector> v;  // S
};

// Values of `policy` (one table per step, or a single stationary table).
ValueTables exact_values(const LinearMdpSpec& mdp, std::span<const TabularPolicy> policy);
ValueTables exact_values(const LinearMdpSpec& mdp, const TabularPolicy& policy);

// Optimal values and a greedy optimal policy per step (lowest action index on ties).
struct OptimalSolution {
  ValueTables values;
  std::vector<TabularPolicy> policy;
};
OptimalSolution optimal_values(const LinearMdpSpec& mdp);

// Rows {(ψ_i, y_i)} for one regression step.
struct FeatureDataset {
  Matrix features;  // m × d
  Vector targets;   // m
  std::size_t dim() const { return features.cols(); }
  std::size_t size() const { return targets.size(); }
};

// Gaussian posterior N(mean, precision⁻¹) of ridge regression.
struct RidgePosterior {
  Vector mean;
  Matrix precision;
  double lambda = 1.0;
  Matrix precision_cholesky;  // lower factor of `precision`
};

// μ = Λ⁻¹ Σ ψ_i y_i with Λ = Σ ψ_i ψ_iᵀ + λI.
RidgePosterior lsvi_solve(const FeatureDataset& data, double lambda, std::size_t dim);
RidgePosterior lsvi_solve(const FeatureDataset& data, double lambda);

// sqrt(ψᵀ Λ⁻¹ ψ).
double lcb_penalty(std::span<const double> psi, const Matrix& precision);
double lcb_penalty(std::span<const double> psi, const RidgePosterior& posterior);

struct StdComparison {
  double analytic = 0.0;
  double sampled = 0.0;
};

// Draws w ~ N(μ, Λ⁻¹) and compares the sample std of ψᵀw with the LCB penalty.
StdComparison posterior_std_check(const RidgePosterior& posterior, std::span<const double> psi,
                                  std::size_t n_samples, std::uint64_t seed);

struct Transition {
  std::size_t state;
  std::size_t action;
  double reward;
  std::size_t next_state;
};

// episodes[t][k] is the step-t transition of episode k.
using StepwiseEpisodes = std::vector<std::vector<Transition>>;

// m episodes of length T from a uniform initial state under `behavior`.
StepwiseEpisodes sample_episodes(const LinearMdpSpec& mdp, const TabularPolicy& behavior,
                                 std::size_t episodes, Rng& rng);

// Regression rows of step t with targets r + γ·next_value(s').
FeatureDataset step_dataset(const LinearMdpSpec& mdp, const std::vector<Transition>& step,
                            std::span<const double> next_value);

struct XiCoverageOptions {
  std::size_t episodes = 100;
  double lambda = 1.0;
  std::vector<double> tau_grid;
  std::size_t trials = 200;
  std::uint64_t seed = 0;
};

struct XiCoverage {
  std::vector<double> tau;
  // Fraction of (s, a, t, trial) tuples with |T̂V − TV| ≤ τ·Γ.
  std::vector<double> tuple_coverage;
  // Fraction of trials in which the bound holds for every (s, a, t).
  std::vector<double> trial_coverage;
};

// Regenerates the dataset `trials` times under a uniform behavior policy and
// tests the empirical Bellman backup of V* against the exact one.
XiCoverage xi_quantifier_check(const LinearMdpSpec& mdp, const XiCoverageOptions& options);

// Pessimistic LSVI: Q_t = clip(ψᵀμ_t − τ·Γ_t, 0, T − t), greedy policy per step.
struct PessimisticSolution {
  std::vector<TabularPolicy> policy;
  std::vector<Matrix> q;
  std::vector<Matrix> penalty;  // Γ_t^lcb(s, a), unscaled
};
PessimisticSolution pessimistic_lsvi(const LinearMdpSpec& mdp, const StepwiseEpisodes& data,
                                     double lambda, double tau);

struct SuboptimalityGap {
  double gap = 0.0;    // V*(s₁) − V^π(s₁)
  double bound = 0.0;  // Σ_t E_{π*}[Γ_t(s_t, a_t) | s₁]
};

SuboptimalityGap suboptimality_gap(const LinearMdpSpec& mdp,
                                   std::span<const TabularPolicy> learned_policy,
                                   std::span<const Matrix> penalty, std::size_t initial_state);

}  // namespace drvf::linear_mdp
