#include "drvf/critic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "drvf/actor.hpp"
#include "drvf/errors.hpp"
#include "drvf/kernels.hpp"
#include "drvf/params_io.hpp"
#include "drvf/stats.hpp"

namespace drvf::critic {
namespace {

// Columns 0..d−1 of the n × (d+1) weights, transposed to d × n, plus the bias column.
void split_weights(const Matrix& w, Matrix& wt, Vector& bias) {
  const std::size_t n = w.rows();
  const std::size_t d = w.cols() - 1;
  wt = Matrix(d, n);
  bias.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < d; ++i) wt(i, k) = w(k, i);
    bias[k] = w(k, d);
  }
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(count, m.cols());
  std::copy(m.data() + begin * m.cols(), m.data() + (begin + count) * m.cols(), out.data());
  return out;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericError(std::string("critic loss: non-finite ") + term);
}

}  // namespace

GaussianLastLayer::GaussianLastLayer(std::size_t feature_dim, double init_sigma)
    : mean(feature_dim + 1, 0.0), raw_scale(feature_dim + 1, inverse_softplus(init_sigma)) {}

Vector GaussianLastLayer::sigma() const {
  Vector s(raw_scale.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = softplus(raw_scale[i]);
  return s;
}

ParamList GaussianLastLayer::parameters() {
  return {{"mean", {mean.size()}, mean}, {"raw_scale", {raw_scale.size()}, raw_scale}};
}

WeightSamples sample_weights(const GaussianLastLayer& layer, std::size_t n, Rng& rng) {
  if (n == 0) throw UsageError("sample_weights: n must be positive");
  WeightSamples out;
  out.noise = Matrix(n, layer.size());
  for (double& z : out.noise.flat()) z = rng.normal();
  out.weights = weights_from_noise(layer, out.noise);
  return out;
}

Matrix weights_from_noise(const GaussianLastLayer& layer, const Matrix& noise) {
  require_shape(noise.cols() == layer.size(), "weights_from_noise: noise width mismatch");
  const Vector sigma = layer.sigma();
  Matrix w(noise.rows(), noise.cols());
  for (std::size_t k = 0; k < noise.rows(); ++k) {
    for (std::size_t i = 0; i < noise.cols(); ++i) w(k, i) = layer.mean[i] + sigma[i] * noise(k, i);
  }
  return w;
}

double kl_to_prior(const GaussianLastLayer& layer) {
  double kl = 0.0;
  for (std::size_t i = 0; i < layer.size(); ++i) {
    const double s = softplus(layer.raw_scale[i]);
    const double mu = layer.mean[i];
    kl += s * s + mu * mu - 1.0 - 2.0 * std::log(s);
  }
  return 0.5 * kl;
}

ParamList CriticMember::parameters() {
  ParamList out = with_prefix(features.parameters(), "features");
  append(out, with_prefix(head.parameters(), "head"));
  return out;
}

nlohmann::json CriticConfig::to_json() const {
  return {{"state_dim", state_dim},   {"action_dim", action_dim},
          {"hidden", hidden},         {"ensemble_size", ensemble_size},
          {"samples", samples},       {"init_sigma", init_sigma},
          {"layer_norm", layer_norm}, {"feature_dim", hidden.empty() ? 0 : hidden.back()}};
}

CriticConfig CriticConfig::from_json(const nlohmann::json& j) {
  CriticConfig c;
  c.state_dim = j.at("state_dim").get<std::size_t>();
  c.action_dim = j.at("action_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.ensemble_size = j.at("ensemble_size").get<std::size_t>();
  c.samples = j.value("samples", std::size_t{10});
  c.init_sigma = j.value("init_sigma", 0.05);
  c.layer_norm = j.value("layer_norm", false);
  return c;
}

EnsembleCritic::EnsembleCritic(const CriticConfig& config, Rng& rng) : config_(config) {
  if (config.ensemble_size == 0) throw ConfigError("EnsembleCritic: ensemble size must be positive");
  if (config.hidden.empty()) throw ConfigError("EnsembleCritic: need at least one feature layer");
  if (!(config.init_sigma > 0.0)) throw ConfigError("EnsembleCritic: init_sigma must be positive");
  std::vector<std::size_t> widths{input_dim()};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  const MlpOptions opts{Activation::kRelu, Activation::kRelu, config.layer_norm};
  const std::size_t d = feature_dim();
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t j = 0; j < config.ensemble_size; ++j) {
    CriticMember m{Mlp(widths, opts), GaussianLastLayer(d, config.init_sigma)};
    m.features.init(rng);
    for (double& mu : m.head.mean) mu = rng.uniform(-bound, bound);
    online_.push_back(std::move(m));
  }
  target_ = online_;
}

void EnsembleCritic::soft_update_targets(double rho) {
  for (std::size_t j = 0; j < size(); ++j) {
    soft_update(target_[j].parameters(), online_[j].parameters(), rho);
  }
}

void EnsembleCritic::sync_targets() {
  for (std::size_t j = 0; j < size(); ++j) copy_values(target_[j].parameters(), online_[j].parameters());
}

ParamList EnsembleCritic::all_parameters() {
  ParamList out;
  for (std::size_t j = 0; j < size(); ++j) {
    const std::string p = "member" + std::to_string(j);
    append(out, with_prefix(online_[j].parameters(), p + "/online"));
    append(out, with_prefix(target_[j].parameters(), p + "/target"));
  }
  return out;
}

void EnsembleCritic::save(const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["kind"] = "ensemble-critic";
  meta["config"] = config_.to_json();
  save_params(path, all_parameters(), meta);
}

EnsembleCritic EnsembleCritic::load(const std::filesystem::path& path) {
  const ParamFile file = load_params(path);
  if (file.meta.value("kind", "") != "ensemble-critic") {
    throw FormatError("checkpoint is not an ensemble critic", 16);
  }
  Rng scratch(0);
  EnsembleCritic c(CriticConfig::from_json(file.meta.at("config")), scratch);
  file.assign_to(c.all_parameters());
  return c;
}

Matrix concat_inputs(const Matrix& states, const Matrix& actions) {
  require_shape(states.rows() == actions.rows(), "concat_inputs: row count mismatch");
  Matrix x(states.rows(), states.cols() + actions.cols());
  for (std::size_t b = 0; b < states.rows(); ++b) {
    std::copy(states.row(b).begin(), states.row(b).end(), x.row(b).begin());
    std::copy(actions.row(b).begin(), actions.row(b).end(), x.row(b).begin() + states.cols());
  }
  return x;
}

std::vector<Matrix> draw_noise(const EnsembleCritic& critic, std::size_t n, Rng& rng) {
  std::vector<Matrix> out;
  for (std::size_t j = 0; j < critic.size(); ++j) {
    out.push_back(sample_weights(critic.member(j).head, n, rng).noise);
  }
  return out;
}

QSampleBatch q_samples(const EnsembleCritic& critic, const Matrix& states, const Matrix& actions,
                       std::size_t n, Rng& rng, bool use_target) {
  return q_samples(critic, states, actions, draw_noise(critic, n, rng), use_target);
}

QSampleBatch q_samples(const EnsembleCritic& critic, const Matrix& states, const Matrix& actions,
                       const std::vector<Matrix>& noise, bool use_target) {
  require_shape(noise.size() == critic.size(), "q_samples: need one noise draw per member");
  require_shape(states.cols() == critic.config().state_dim &&
                    actions.cols() == critic.config().action_dim,
                "q_samples: state/action width mismatch");
  const Matrix x = concat_inputs(states, actions);
  QSampleBatch out;
  out.batch = x.rows();
  out.members = critic.size();
  out.samples = noise.front().rows();
  out.values.assign(out.batch * out.members * out.samples, 0.0);
  out.noise = noise;
  for (std::size_t j = 0; j < critic.size(); ++j) {
    const CriticMember& m = critic.pick(j, use_target);
    require_shape(noise[j].rows() == out.samples, "q_samples: noise draws differ in size");
    const Matrix feats = m.features.forward(x);
    Matrix wt;
    Vector bias;
    split_weights(weights_from_noise(m.head, noise[j]), wt, bias);
    Matrix q;
    kernels::affine_forward(feats, wt, bias, q);
    for (std::size_t b = 0; b < out.batch; ++b) {
      std::copy(q.row(b).begin(), q.row(b).end(),
                out.values.begin() + static_cast<std::ptrdiff_t>((b * out.members + j) * out.samples));
    }
  }
  return out;
}

double repulsive_term(std::span<const double> samples) {
  if (samples.size() < 2) throw UsageError("repulsive_term: need at least two samples");
  return population_mean_std(samples).std;
}

double lcb_alpha(std::size_t n) {
  if (n == 0) throw UsageError("lcb_alpha: N must be at least 1");
  const double nn = static_cast<double>(n);
  const double pi = std::numbers::pi;
  return normal_quantile((nn - pi / 8.0) / (nn - pi / 4.0 + 1.0));
}

Vector pessimistic_target(const EnsembleCritic& critic, const TransitionBatch& batch,
                          const Matrix& next_actions, const Vector& next_log_probs,
                          double beta, double gamma, const std::vector<Matrix>& noise) {
  if (!(beta >= 0.0)) throw ConfigError("pessimistic_target: beta must be non-negative");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("pessimistic_target: gamma must be in (0, 1]");
  const std::size_t b = batch.size();
  require_shape(b > 0 && next_actions.rows() % b == 0 && next_log_probs.size() == next_actions.rows(),
                "pessimistic_target: next-action rows must be a multiple of the batch");
  const std::size_t per_state = next_actions.rows() / b;
  Matrix next_states(b * per_state, batch.next_states.cols());
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t p = 0; p < per_state; ++p) {
      std::copy(batch.next_states.row(i).begin(), batch.next_states.row(i).end(),
                next_states.row(i * per_state + p).begin());
    }
  }
  const QSampleBatch q = q_samples(critic, next_states, next_actions, noise, true);
  Vector y(b);
  for (std::size_t i = 0; i < b; ++i) {
    double soft_value = 0.0;
    for (std::size_t p = 0; p < per_state; ++p) {
      const std::size_t row = i * per_state + p;
      const auto samples = q.row(row);
      const double qmin = *std::min_element(samples.begin(), samples.end());
      soft_value += qmin - beta * next_log_probs[row];
    }
    soft_value /= static_cast<double>(per_state);
    y[i] = batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * soft_value;
  }
  return y;
}

Vector pessimistic_target(const EnsembleCritic& critic, const TransitionBatch& batch,
                          const actor::TanhGaussianPolicy& policy, double beta, double gamma,
                          std::size_t n, Rng& rng, std::size_t next_actions_per_state) {
  if (next_actions_per_state == 0) throw ConfigError("pessimistic_target: need at least one next action");
  Matrix expanded(batch.size() * next_actions_per_state, batch.next_states.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t p = 0; p < next_actions_per_state; ++p) {
      std::copy(batch.next_states.row(i).begin(), batch.next_states.row(i).end(),
                expanded.row(i * next_actions_per_state + p).begin());
    }
  }
  const auto next = actor::sample_actions(policy, expanded, rng);
  const auto noise = draw_noise(critic, n, rng);
  return pessimistic_target(critic, batch, next.actions, next.log_probs, beta, gamma, noise);
}

ParamList MemberGrads::parameters() {
  ParamList out = with_prefix(features.parameters(), "features");
  out.push_back({"head/mean", {head_mean.size()}, head_mean});
  out.push_back({"head/raw_scale", {head_raw_scale.size()}, head_raw_scale});
  return out;
}

std::vector<MemberLoss> critic_losses(const EnsembleCritic& critic, const CriticLossInputs& in,
                                      const CriticLossOptions& options,
                                      const std::vector<Matrix>& data_noise,
                                      const std::vector<Matrix>& ood_noise, bool with_grads) {
  const std::size_t m_count = critic.size();
  const std::size_t batch = in.states.rows();
  require_shape(batch > 0 && in.targets.size() == batch, "critic_loss: targets do not match batch");
  require_shape(data_noise.size() == m_count && data_noise.front().rows() > 0,
                "critic_loss: need data noise per member");
  if (!(options.eta_q >= 0.0) || !(options.eta_ood >= 0.0) || !(options.kl_scale >= 0.0)) {
    throw ConfigError("critic_loss: loss weights must be non-negative");
  }
  const bool use_ood = options.eta_ood > 0.0 && in.ood_states.rows() > 0;
  const std::size_t ood_rows = use_ood ? in.ood_states.rows() : 0;
  if (use_ood) require_shape(ood_noise.size() == m_count, "critic_loss: need OOD noise per member");
  const std::size_t n = data_noise.front().rows();
  const std::size_t n_ood = use_ood ? ood_noise.front().rows() : 0;
  require_shape(in.states.cols() == critic.config().state_dim &&
                    in.actions.cols() == critic.config().action_dim,
                "critic_loss: state/action width mismatch");
  if (use_ood) {
    require_shape(in.ood_states.cols() == critic.config().state_dim &&
                      in.ood_actions.cols() == critic.config().action_dim,
                  "critic_loss: OOD state/action width mismatch");
  }
  for (std::size_t j = 0; j < m_count; ++j) {
    const std::size_t width = critic.member(j).head.size();
    require_shape(data_noise[j].rows() == n && data_noise[j].cols() == width,
                  "critic_loss: data noise shape mismatch");
    if (use_ood) {
      require_shape(ood_noise[j].rows() == n_ood && ood_noise[j].cols() == width,
                    "critic_loss: OOD noise shape mismatch");
    }
  }
  if (use_ood) {
    const std::size_t pool = options.pooling == RepulsivePooling::kJoint ? m_count * n_ood : n_ood;
    if (pool < 2) throw UsageError("critic_loss: repulsive term needs at least two samples");
  }

  Matrix x = concat_inputs(in.states, in.actions);
  if (use_ood) {
    const Matrix xo = concat_inputs(in.ood_states, in.ood_actions);
    Matrix both(batch + ood_rows, x.cols());
    std::copy(x.data(), x.data() + x.size(), both.data());
    std::copy(xo.data(), xo.data() + xo.size(), both.data() + x.size());
    x = std::move(both);
  }

  struct Forward {
    MlpCache cache;
    Matrix feats_data, feats_ood;
    Matrix w_data, w_ood;  // n × (d+1)
    Matrix q_data, q_ood;  // rows × n
  };
  std::vector<Forward> fw(m_count);
  const auto members = static_cast<std::ptrdiff_t>(m_count);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jj = 0; jj < members; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    const CriticMember& mem = critic.member(j);
    Forward& f = fw[j];
    const Matrix feats = mem.features.forward(x, f.cache);
    f.feats_data = slice_rows(feats, 0, batch);
    f.w_data = weights_from_noise(mem.head, data_noise[j]);
    Matrix wt;
    Vector bias;
    split_weights(f.w_data, wt, bias);
    kernels::affine_forward(f.feats_data, wt, bias, f.q_data);
    if (use_ood) {
      f.feats_ood = slice_rows(feats, batch, ood_rows);
      f.w_ood = weights_from_noise(mem.head, ood_noise[j]);
      split_weights(f.w_ood, wt, bias);
      kernels::affine_forward(f.feats_ood, wt, bias, f.q_ood);
    }
  }

  // Repulsive statistics per OOD row: mean and std of the pooled samples.
  // Per-member pooling keeps one (mean, std) pair per member.
  const bool joint = options.pooling == RepulsivePooling::kJoint;
  Matrix pool_mean(ood_rows, joint ? 1 : m_count);
  Matrix pool_std(ood_rows, joint ? 1 : m_count);
  std::vector<double> scratch;
  for (std::size_t o = 0; o < ood_rows; ++o) {
    if (joint) {
      scratch.clear();
      for (std::size_t j = 0; j < m_count; ++j) {
        auto r = fw[j].q_ood.row(o);
        scratch.insert(scratch.end(), r.begin(), r.end());
      }
      const auto ms = population_mean_std(scratch);
      pool_mean(o, 0) = ms.mean;
      pool_std(o, 0) = ms.std;
    } else {
      for (std::size_t j = 0; j < m_count; ++j) {
        const auto ms = population_mean_std(fw[j].q_ood.row(o));
        pool_mean(o, j) = ms.mean;
        pool_std(o, j) = ms.std;
      }
    }
  }

  std::vector<MemberLoss> out(m_count);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jj = 0; jj < members; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    const CriticMember& mem = critic.member(j);
    const Forward& f = fw[j];
    MemberLoss& res = out[j];

    double sq = 0.0;
    Matrix g_data(batch, n);
    const double bell_scale = 1.0 / static_cast<double>(batch * n);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t k = 0; k < n; ++k) {
        const double diff = f.q_data(b, k) - in.targets[b];
        sq += diff * diff;
        g_data(b, k) = options.eta_q * 2.0 * diff * bell_scale;
      }
    }
    res.bellman = sq * bell_scale;
    res.kl = kl_to_prior(mem.head);

    Matrix g_ood(ood_rows, n_ood);
    double ood_sum = 0.0;
    const std::size_t col = joint ? 0 : j;
    const double pool_size = static_cast<double>(joint ? m_count * n_ood : n_ood);
    for (std::size_t o = 0; o < ood_rows; ++o) {
      const double sd = pool_std(o, col);
      ood_sum += sd;
      // Below rounding level the direction (Q − mean) is noise, not signal.
      if (sd > 1e-12 * (1.0 + std::abs(pool_mean(o, col)))) {
        const double scale = -options.eta_ood / static_cast<double>(ood_rows) / (pool_size * sd);
        for (std::size_t k = 0; k < n_ood; ++k) {
          g_ood(o, k) = scale * (f.q_ood(o, k) - pool_mean(o, col));
        }
      }
    }
    res.ood_std = ood_rows > 0 ? ood_sum / static_cast<double>(ood_rows) : 0.0;
    res.loss = options.eta_q * (res.bellman + options.kl_scale * res.kl) -
               (use_ood ? options.eta_ood * res.ood_std : 0.0);

    // Exceptions may not leave the parallel region; checked after the loop.
    if (!with_grads || !std::isfinite(res.loss)) continue;

    MemberGrads grads{mem.features.make_grads(), Vector(mem.head.size(), 0.0),
                      Vector(mem.head.size(), 0.0)};
    const std::size_t d = mem.head.size() - 1;
    const Vector sigma = mem.head.sigma();

    // Gradient w.r.t. every weight draw, then chained into μ and ρ.
    auto head_grad = [&](const Matrix& feats, const Matrix& g, const Matrix& noise) {
      Matrix dw(d, g.cols());
      Vector db(g.cols(), 0.0);
      kernels::affine_param_grad(feats, g, dw, db);
      for (std::size_t k = 0; k < g.cols(); ++k) {
        for (std::size_t i = 0; i <= d; ++i) {
          const double gw = i < d ? dw(i, k) : db[k];
          grads.head_mean[i] += gw;
          grads.head_raw_scale[i] += gw * noise(k, i) * sigmoid(mem.head.raw_scale[i]);
        }
      }
    };
    head_grad(f.feats_data, g_data, data_noise[j]);
    if (use_ood) head_grad(f.feats_ood, g_ood, ood_noise[j]);
    const double kl_w = options.eta_q * options.kl_scale;
    for (std::size_t i = 0; i <= d; ++i) {
      grads.head_mean[i] += kl_w * mem.head.mean[i];
      grads.head_raw_scale[i] +=
          kl_w * (sigma[i] - 1.0 / sigma[i]) * sigmoid(mem.head.raw_scale[i]);
    }

    // d(loss)/d(features) = G·W[:, :d].
    Matrix dfeats(batch + ood_rows, d);
    auto feature_grad = [&](const Matrix& g, const Matrix& w, std::size_t row0) {
      Matrix wt;
      Vector bias;
      split_weights(w, wt, bias);
      Matrix df;
      kernels::affine_input_grad(g, wt, df);
      std::copy(df.data(), df.data() + df.size(), dfeats.data() + row0 * d);
    };
    feature_grad(g_data, f.w_data, 0);
    if (use_ood) feature_grad(g_ood, f.w_ood, batch);
    mem.features.backward(f.cache, dfeats, grads.features, false);
    res.grads = std::move(grads);
  }
  for (const MemberLoss& res : out) {
    check_finite(res.bellman, "Bellman term");
    check_finite(res.kl, "KL term");
    check_finite(res.ood_std, "repulsive term");
  }
  return out;
}

MemberLoss critic_loss(const EnsembleCritic& critic, std::size_t member,
                       const CriticLossInputs& in, const CriticLossOptions& options,
                       const std::vector<Matrix>& data_noise,
                       const std::vector<Matrix>& ood_noise) {
  require_shape(member < critic.size(), "critic_loss: member index out of range");
  auto all = critic_losses(critic, in, options, data_noise, ood_noise, true);
  return std::move(all[member]);
}

}  // namespace drvf::critic
