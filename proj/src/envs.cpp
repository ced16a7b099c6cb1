#include "drvf/envs.hpp"

#include <algorithm>
#include <cmath>

#include "drvf/errors.hpp"

namespace drvf::envs {
namespace {

constexpr double kEpsilon = 0.3;

double clip_unit(double v) { return std::clamp(v, -1.0, 1.0); }

// Index sampled from a probability row.
std::size_t draw(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace

Vector PointMass::reset(Rng& rng) const { return {rng.uniform(-1.0, 1.0), 0.0}; }

StepResult PointMass::step(std::span<const double> state, std::span<const double> action,
                           Rng&) const {
  require_shape(state.size() == 2 && action.size() == 1, "point-mass: bad state or action width");
  const double f = clip_unit(action[0]);
  const double v = state[1] + kDt * f;
  const double x = state[0] + kDt * v;
  return {{x, v}, -x * x - kActionCost * f * f, false};
}

linear_mdp::LinearMdpSpec linear_chain_spec() {
  constexpr std::size_t S = 6, A = 2;
  constexpr double slip = 0.1;
  linear_mdp::LinearMdpSpec m;
  m.num_states = S;
  m.num_actions = A;
  m.dim = S * A;
  m.horizon = 10;
  m.gamma = 1.0;
  m.features = Matrix::identity(S * A);
  m.next_measure = Matrix(S, S * A);
  m.reward_weights.assign(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t left = s == 0 ? 0 : s - 1;
    const std::size_t right = s + 1 == S ? s : s + 1;
    // Column s·A + a of φ is the next-state distribution of (s, a).
    m.next_measure(left, s * A + 0) += 1.0 - slip;
    m.next_measure(right, s * A + 0) += slip;
    m.next_measure(right, s * A + 1) += 1.0 - slip;
    m.next_measure(left, s * A + 1) += slip;
  }
  m.reward_weights[(S - 1) * A + 0] = 1.0;
  m.reward_weights[(S - 1) * A + 1] = 1.0;
  m.validate();
  return m;
}

LinearChain::LinearChain() : spec_(linear_chain_spec()) {}

Vector LinearChain::encode(std::size_t s) const {
  Vector v(spec_.num_states, 0.0);
  v.at(s) = 1.0;
  return v;
}

std::size_t LinearChain::decode(std::span<const double> state) const {
  require_shape(state.size() == spec_.num_states, "linear-chain: bad state width");
  const auto it = std::max_element(state.begin(), state.end());
  if (*it != 1.0) throw ShapeError("linear-chain: state is not one-hot");
  return static_cast<std::size_t>(it - state.begin());
}

Vector LinearChain::reset(Rng&) const { return encode(0); }

StepResult LinearChain::step(std::span<const double> state, std::span<const double> action,
                             Rng& rng) const {
  require_shape(action.size() == 1, "linear-chain: bad action width");
  const std::size_t s = decode(state);
  const double a_raw = action[0];
  if (!(a_raw >= 0.0) || a_raw >= static_cast<double>(spec_.num_actions) ||
      a_raw != std::floor(a_raw)) {
    throw ShapeError("linear-chain: action must be an index");
  }
  const auto a = static_cast<std::size_t>(a_raw);
  Vector probs(spec_.num_states);
  for (std::size_t n = 0; n < spec_.num_states; ++n) probs[n] = spec_.transition(s, a, n);
  return {encode(draw(probs, rng)), spec_.reward(s, a), false};
}

std::unique_ptr<Env> make_env(const std::string& id) {
  if (id == kPointMass) return std::make_unique<PointMass>();
  if (id == kLinearChain) return std::make_unique<LinearChain>();
  throw ConfigError("unknown env id '" + id + "'");
}

Vector point_mass_expert(std::span<const double> state) {
  return {clip_unit(-3.0 * state[0] - 2.5 * state[1])};
}

Vector point_mass_mediocre(std::span<const double> state) {
  return {clip_unit(-0.3 * state[0] - 0.3 * state[1])};
}

BehaviorPolicy make_behavior(const Env& env, const std::string& id) {
  if (env.discrete_actions() > 0) {
    const auto n = static_cast<double>(env.discrete_actions());
    const auto* chain = dynamic_cast<const LinearChain*>(&env);
    auto random = [n](std::span<const double>, Rng& rng) {
      return Vector{std::floor(rng.uniform() * n)};
    };
    // Heads right only up to the middle of the chain.
    auto controller = [chain](std::span<const double> s) {
      const std::size_t i = chain->decode(s);
      return Vector{i < chain->spec().num_states / 2 ? 1.0 : 0.0};
    };
    if (id == "random") return random;
    if (id == "mediocre") {
      return [random, controller](std::span<const double> s, Rng& rng) {
        return rng.uniform() < kEpsilon ? random(s, rng) : controller(s);
      };
    }
    if (id == "expert") return [](std::span<const double>, Rng&) { return Vector{1.0}; };
    throw ConfigError("unknown behavior policy '" + id + "'");
  }
  if (id == "random") {
    return [](std::span<const double>, Rng& rng) { return Vector{rng.uniform(-1.0, 1.0)}; };
  }
  if (id == "mediocre") {
    return [](std::span<const double> s, Rng& rng) {
      return rng.uniform() < kEpsilon ? Vector{rng.uniform(-1.0, 1.0)} : point_mass_mediocre(s);
    };
  }
  if (id == "expert") {
    return [](std::span<const double> s, Rng&) { return point_mass_expert(s); };
  }
  throw ConfigError("unknown behavior policy '" + id + "'");
}

}  // namespace drvf::envs
