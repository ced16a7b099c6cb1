#include "drvf/actor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "drvf/critic.hpp"
#include "drvf/errors.hpp"
#include "drvf/params_io.hpp"
#include "drvf/stats.hpp"

namespace drvf::actor {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// log(1 − tanh²u) without cancellation for large |u|.
double log_one_minus_tanh_sq(double u) {
  return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
}

}  // namespace

nlohmann::json PolicyConfig::to_json() const {
  return {{"state_dim", state_dim},     {"action_dim", action_dim},
          {"hidden", hidden},           {"action_low", action_low},
          {"action_high", action_high}, {"log_std_min", log_std_min},
          {"log_std_max", log_std_max}};
}

PolicyConfig PolicyConfig::from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.state_dim = j.at("state_dim").get<std::size_t>();
  c.action_dim = j.at("action_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.action_low = j.value("action_low", Vector{});
  c.action_high = j.value("action_high", Vector{});
  c.log_std_min = j.value("log_std_min", -5.0);
  c.log_std_max = j.value("log_std_max", 2.0);
  return c;
}

TanhGaussianPolicy::TanhGaussianPolicy(PolicyConfig config, Rng& rng) : config_(std::move(config)) {
  const std::size_t da = config_.action_dim;
  if (config_.state_dim == 0 || da == 0) throw ConfigError("policy: state and action dims must be positive");
  if (config_.action_low.empty()) config_.action_low.assign(da, -1.0);
  if (config_.action_high.empty()) config_.action_high.assign(da, 1.0);
  if (config_.action_low.size() != da || config_.action_high.size() != da) {
    throw ConfigError("policy: action bounds must match the action dimension");
  }
  if (!(config_.log_std_min < config_.log_std_max)) throw ConfigError("policy: empty log-std range");
  for (std::size_t i = 0; i < da; ++i) {
    if (!(config_.action_low[i] < config_.action_high[i])) throw ConfigError("policy: empty action box");
    scale_.push_back(0.5 * (config_.action_high[i] - config_.action_low[i]));
    offset_.push_back(0.5 * (config_.action_high[i] + config_.action_low[i]));
  }
  std::vector<std::size_t> widths{config_.state_dim};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(2 * da);
  trunk_ = Mlp(widths, {Activation::kRelu, Activation::kIdentity, false});
  trunk_.init(rng);
}

PolicyHead TanhGaussianPolicy::head(const Matrix& states) const {
  MlpCache cache;
  return head(states, cache);
}

PolicyHead TanhGaussianPolicy::head(const Matrix& states, MlpCache& cache) const {
  require_shape(states.cols() == state_dim(), "policy: state width mismatch");
  const Matrix out = trunk_.forward(states, cache);
  const std::size_t da = action_dim();
  PolicyHead h{Matrix(states.rows(), da), Matrix(states.rows(), da), Matrix(states.rows(), da)};
  for (std::size_t b = 0; b < states.rows(); ++b) {
    for (std::size_t i = 0; i < da; ++i) {
      h.mean(b, i) = out(b, i);
      h.raw_log_std(b, i) = out(b, da + i);
      h.log_std(b, i) = std::clamp(out(b, da + i), config_.log_std_min, config_.log_std_max);
    }
  }
  return h;
}

ParamList TanhGaussianPolicy::parameters() { return with_prefix(trunk_.parameters(), "trunk"); }

void TanhGaussianPolicy::save(const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["kind"] = "tanh-gaussian-policy";
  meta["config"] = config_.to_json();
  save_params(path, parameters(), meta);
}

TanhGaussianPolicy TanhGaussianPolicy::load(const std::filesystem::path& path) {
  const ParamFile file = load_params(path);
  if (file.meta.value("kind", "") != "tanh-gaussian-policy") {
    throw FormatError("checkpoint is not a tanh-Gaussian policy", 16);
  }
  Rng scratch(0);
  TanhGaussianPolicy p(PolicyConfig::from_json(file.meta.at("config")), scratch);
  file.assign_to(p.parameters());
  return p;
}

ActionSample sample_actions(const TanhGaussianPolicy& policy, const Matrix& states, Rng& rng) {
  Matrix noise(states.rows(), policy.action_dim());
  for (double& e : noise.flat()) e = rng.normal();
  return sample_actions(policy, states, noise);
}

ActionSample sample_actions(const TanhGaussianPolicy& policy, const Matrix& states,
                            const Matrix& noise) {
  require_shape(noise.rows() == states.rows() && noise.cols() == policy.action_dim(),
                "sample_actions: noise shape mismatch");
  const PolicyHead h = policy.head(states);
  const std::size_t da = policy.action_dim();
  ActionSample out{Matrix(states.rows(), da), Vector(states.rows(), 0.0), Matrix(states.rows(), da),
                   noise};
  for (std::size_t b = 0; b < states.rows(); ++b) {
    double lp = 0.0;
    for (std::size_t i = 0; i < da; ++i) {
      const double e = noise(b, i);
      const double u = h.mean(b, i) + std::exp(h.log_std(b, i)) * e;
      out.pre_tanh(b, i) = u;
      out.actions(b, i) = policy.scale()[i] * std::tanh(u) + policy.offset()[i];
      lp += -0.5 * e * e - h.log_std(b, i) - kHalfLog2Pi - std::log(policy.scale()[i]) -
            log_one_minus_tanh_sq(u);
    }
    out.log_probs[b] = lp;
  }
  return out;
}

SingleAction sample_action(const TanhGaussianPolicy& policy, std::span<const double> state,
                           Rng& rng) {
  Matrix s(1, state.size());
  std::copy(state.begin(), state.end(), s.data());
  const ActionSample a = sample_actions(policy, s, rng);
  return {Vector(a.actions.data(), a.actions.data() + a.actions.cols()), a.log_probs[0]};
}

Matrix deterministic_actions(const TanhGaussianPolicy& policy, const Matrix& states) {
  const PolicyHead h = policy.head(states);
  Matrix a(states.rows(), policy.action_dim());
  for (std::size_t b = 0; b < a.rows(); ++b) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      a(b, i) = policy.scale()[i] * std::tanh(h.mean(b, i)) + policy.offset()[i];
    }
  }
  return a;
}

Vector deterministic_action(const TanhGaussianPolicy& policy, std::span<const double> state) {
  Matrix s(1, state.size());
  std::copy(state.begin(), state.end(), s.data());
  const Matrix a = deterministic_actions(policy, s);
  return Vector(a.data(), a.data() + a.cols());
}

Vector log_prob(const TanhGaussianPolicy& policy, const Matrix& states, const Matrix& actions) {
  require_shape(actions.rows() == states.rows() && actions.cols() == policy.action_dim(),
                "log_prob: action shape mismatch");
  const PolicyHead h = policy.head(states);
  Vector out(states.rows(), 0.0);
  for (std::size_t b = 0; b < states.rows(); ++b) {
    for (std::size_t i = 0; i < actions.cols(); ++i) {
      const double y = (actions(b, i) - policy.offset()[i]) / policy.scale()[i];
      if (!(std::abs(y) < 1.0)) throw NumericError("log_prob: action outside the open box");
      const double u = std::atanh(y);
      const double ls = h.log_std(b, i);
      const double e = (u - h.mean(b, i)) * std::exp(-ls);
      out[b] += -0.5 * e * e - ls - kHalfLog2Pi - std::log(policy.scale()[i]) -
                log_one_minus_tanh_sq(u);
    }
  }
  return out;
}

Matrix ood_actions(const TanhGaussianPolicy& policy, const Matrix& states, std::size_t k,
                   Rng& rng) {
  if (k == 0) throw UsageError("ood_actions: K must be at least 1");
  Matrix rep(states.rows() * k, states.cols());
  for (std::size_t b = 0; b < states.rows(); ++b) {
    for (std::size_t r = 0; r < k; ++r) {
      std::copy(states.row(b).begin(), states.row(b).end(), rep.row(b * k + r).begin());
    }
  }
  return sample_actions(policy, rep, rng).actions;
}

ActorLoss actor_loss(const TanhGaussianPolicy& policy, const critic::EnsembleCritic& critic,
                     const Matrix& states, double beta, std::size_t n, Rng& rng) {
  Matrix noise(states.rows(), policy.action_dim());
  for (double& e : noise.flat()) e = rng.normal();
  return actor_loss(policy, critic, states, beta, noise, critic::draw_noise(critic, n, rng));
}

ActorLoss actor_loss(const TanhGaussianPolicy& policy, const critic::EnsembleCritic& critic,
                     const Matrix& states, double beta, const Matrix& action_noise,
                     const std::vector<Matrix>& critic_noise) {
  if (!(beta >= 0.0)) throw ConfigError("actor_loss: beta must be non-negative");
  const std::size_t batch = states.rows();
  const std::size_t da = policy.action_dim();
  const std::size_t ds = policy.state_dim();
  require_shape(batch > 0, "actor_loss: empty batch");
  require_shape(action_noise.rows() == batch && action_noise.cols() == da,
                "actor_loss: action noise shape mismatch");
  require_shape(critic_noise.size() == critic.size(), "actor_loss: need critic noise per member");
  require_shape(critic.config().state_dim == ds && critic.config().action_dim == da,
                "actor_loss: critic and policy dims differ");

  MlpCache trunk_cache;
  const PolicyHead h = policy.head(states, trunk_cache);
  Matrix u(batch, da), t(batch, da), actions(batch, da);
  Vector logp(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < da; ++i) {
      const double e = action_noise(b, i);
      u(b, i) = h.mean(b, i) + std::exp(h.log_std(b, i)) * e;
      t(b, i) = std::tanh(u(b, i));
      actions(b, i) = policy.scale()[i] * t(b, i) + policy.offset()[i];
      logp[b] += -0.5 * e * e - h.log_std(b, i) - kHalfLog2Pi - std::log(policy.scale()[i]) -
                 log_one_minus_tanh_sq(u(b, i));
    }
  }

  // Critic pass with caches so the winning sample can be differentiated in a.
  const Matrix x = critic::concat_inputs(states, actions);
  const std::size_t m_count = critic.size();
  const std::size_t n = critic_noise.front().rows();
  std::vector<MlpCache> caches(m_count);
  std::vector<Matrix> feats(m_count), weights(m_count);
  for (std::size_t j = 0; j < m_count; ++j) {
    const critic::CriticMember& mem = critic.member(j);
    feats[j] = mem.features.forward(x, caches[j]);
    weights[j] = critic::weights_from_noise(mem.head, critic_noise[j]);
    require_shape(weights[j].rows() == n, "actor_loss: critic noise draws differ in size");
  }
  const std::size_t d = critic.feature_dim();
  std::vector<std::size_t> win_member(batch), win_sample(batch);
  Vector q_min(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m_count; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        double q = weights[j](k, d);
        for (std::size_t i = 0; i < d; ++i) q += feats[j](b, i) * weights[j](k, i);
        if (q < best) {
          best = q;
          win_member[b] = j;
          win_sample[b] = k;
        }
      }
    }
    q_min[b] = best;
  }

  ActorLoss out;
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    out.loss -= (q_min[b] - beta * logp[b]) * inv_b;
    out.mean_q_min += q_min[b] * inv_b;
    out.mean_log_prob += logp[b] * inv_b;
  }
  if (!std::isfinite(out.loss)) throw NumericError("actor_loss: non-finite loss");

  // dL/da through the critic, member by member.
  Matrix grad_a(batch, da);
  for (std::size_t j = 0; j < m_count; ++j) {
    Matrix dpsi(batch, d);
    bool any = false;
    for (std::size_t b = 0; b < batch; ++b) {
      if (win_member[b] != j) continue;
      any = true;
      for (std::size_t i = 0; i < d; ++i) dpsi(b, i) = -inv_b * weights[j](win_sample[b], i);
    }
    if (!any) continue;
    const Matrix dx = critic.member(j).features.input_gradient(caches[j], dpsi);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < da; ++i) grad_a(b, i) += dx(b, ds + i);
    }
  }

  Matrix dout(batch, 2 * da);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < da; ++i) {
      const double tt = t(b, i);
      // ∂(−log(1 − t²))/∂u = 2t, and the loss carries +β/B·log π.
      const double du = grad_a(b, i) * policy.scale()[i] * (1.0 - tt * tt) + beta * inv_b * 2.0 * tt;
      dout(b, i) = du;
      const double raw = h.raw_log_std(b, i);
      const bool inside = raw > policy.config().log_std_min && raw < policy.config().log_std_max;
      if (inside) {
        dout(b, da + i) = du * std::exp(h.log_std(b, i)) * action_noise(b, i) - beta * inv_b;
      }
    }
  }
  out.grads = policy.trunk().make_grads();
  policy.trunk().backward(trunk_cache, dout, out.grads, false);
  out.action_noise = action_noise;
  out.critic_noise = critic_noise;
  return out;
}

}  // namespace drvf::actor
