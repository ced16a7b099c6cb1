#pragma once

// Toy environments and their hand-written behavior policies.
//
//   "point-mass-1d"  state (x, v), force f ∈ [−1, 1], dt = 0.1:
//                    v' = v + dt·f, x' = x + dt·v', r = −x'² − 0.01·f²,
//                    x₀ ~ U[−1, 1], v₀ = 0, horizon 50.
//   "linear-chain"   six-state slippery chain backed by a LinearMdpSpec with
//                    one-hot features; the state is one-hot encoded and the
//                    action is stored as its index.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "drvf/linear_mdp.hpp"
#include "drvf/matrix.hpp"
#include "drvf/rng.hpp"

namespace drvf::envs {

inline constexpr const char* kPointMass = "point-mass-1d";
inline constexpr const char* kLinearChain = "linear-chain";

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool terminal = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual std::string id() const = 0;
  virtual std::size_t state_dim() const = 0;
  // Width of the stored action; 1 for discrete envs.
  virtual std::size_t action_dim() const = 0;
  // Number of discrete actions, 0 for continuous envs.
  virtual std::size_t discrete_actions() const { return 0; }
  virtual std::size_t horizon() const = 0;
  virtual Vector reset(Rng& rng) const = 0;
  virtual StepResult step(std::span<const double> state, std::span<const double> action,
                          Rng& rng) const = 0;
};

class PointMass final : public Env {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kActionCost = 0.01;

  std::string id() const override { return kPointMass; }
  std::size_t state_dim() const override { return 2; }
  std::size_t action_dim() const override { return 1; }
  std::size_t horizon() const override { return 50; }
  Vector reset(Rng& rng) const override;
  StepResult step(std::span<const double> state, std::span<const double> action,
                  Rng& rng) const override;
};

class LinearChain final : public Env {
 public:
  LinearChain();
  std::string id() const override { return kLinearChain; }
  std::size_t state_dim() const override { return spec_.num_states; }
  std::size_t action_dim() const override { return 1; }
  std::size_t discrete_actions() const override { return spec_.num_actions; }
  std::size_t horizon() const override { return spec_.horizon; }
  Vector reset(Rng& rng) const override;
  StepResult step(std::span<const double> state, std::span<const double> action,
                  Rng& rng) const override;

  const linear_mdp::LinearMdpSpec& spec() const noexcept { return spec_; }
  Vector encode(std::size_t s) const;
  std::size_t decode(std::span<const double> state) const;

 private:
  linear_mdp::LinearMdpSpec spec_;
};

// Six states, actions {left, right}, slip 0.1, reward 1 in the last state, horizon 10.
linear_mdp::LinearMdpSpec linear_chain_spec();

// Throws ConfigError on an unknown id.
std::unique_ptr<Env> make_env(const std::string& id);

// Maps a state to an action; stochastic policies draw from `rng`.
using BehaviorPolicy = std::function<Vector(std::span<const double> state, Rng& rng)>;

// "random", "mediocre" or "expert". The "mixed" regime is chosen per episode
// by the dataset generator. Throws ConfigError on an unknown id.
BehaviorPolicy make_behavior(const Env& env, const std::string& id);

// Deterministic controllers of the point mass.
Vector point_mass_expert(std::span<const double> state);
Vector point_mass_mediocre(std::span<const double> state);

}  // namespace drvf::envs
