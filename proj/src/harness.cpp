#include "drvf/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "drvf/errors.hpp"
#include "drvf/params.hpp"
#include "drvf/stats.hpp"

namespace drvf::harness {
namespace {

// Stream keys; each purpose gets its own family so adding draws elsewhere
// never shifts these.
enum : std::uint64_t {
  kInitCritic = 1,
  kInitPolicy = 2,
  kStep = 3,
  kProbe = 4,
  kEval = 5,
  kDiag = 6,
};

const char* pooling_name(critic::RepulsivePooling p) {
  return p == critic::RepulsivePooling::kJoint ? "joint" : "per-member";
}

critic::RepulsivePooling parse_pooling(const std::string& s) {
  if (s == "joint") return critic::RepulsivePooling::kJoint;
  if (s == "per-member") return critic::RepulsivePooling::kPerMember;
  throw ConfigError("pooling must be 'joint' or 'per-member', got '" + s + "'");
}

void check(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ConfigError("train config: " + field + " " + rule);
}

void gather_rows(const Matrix& src, const std::vector<std::size_t>& idx, Matrix& dst) {
  dst = Matrix(idx.size(), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto r = src.row(idx[i]);
    std::copy(r.begin(), r.end(), dst.row(i).begin());
  }
}

critic::TransitionBatch gather(const data::OfflineDataset& ds, const std::vector<std::size_t>& idx) {
  critic::TransitionBatch b;
  gather_rows(ds.states, idx, b.states);
  gather_rows(ds.actions, idx, b.actions);
  gather_rows(ds.next_states, idx, b.next_states);
  b.rewards.resize(idx.size());
  b.dones.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    b.rewards[i] = ds.rewards[idx[i]];
    b.dones[i] = ds.dones[idx[i]];
  }
  return b;
}

std::vector<std::size_t> draw_indices(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = rng.index(n);
  return idx;
}

Matrix repeat_rows(const Matrix& m, std::size_t k) {
  Matrix out(m.rows() * k, m.cols());
  for (std::size_t b = 0; b < m.rows(); ++b) {
    for (std::size_t j = 0; j < k; ++j) {
      std::copy(m.row(b).begin(), m.row(b).end(), out.row(b * k + j).begin());
    }
  }
  return out;
}

double mean_row_std(const critic::QSampleBatch& q) {
  double acc = 0.0;
  for (std::size_t b = 0; b < q.batch; ++b) acc += critic::repulsive_term(q.row(b));
  return q.batch == 0 ? 0.0 : acc / static_cast<double>(q.batch);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  check(ensemble_size >= 1, "ensemble_size", "must be at least 1");
  check(posterior_samples >= 1, "posterior_samples", "must be at least 1");
  check(next_actions >= 1, "next_actions", "must be at least 1");
  check(eta_q > 0.0, "eta_q", "must be positive");
  check(eta_ood >= 0.0, "eta_ood", "must be non-negative");
  if (eta_ood > 0.0) {
    check(ood_actions >= 1, "ood_actions", "must be at least 1 when eta_ood > 0");
    const std::size_t pool = pooling == critic::RepulsivePooling::kJoint
                                 ? ensemble_size * posterior_samples
                                 : posterior_samples;
    check(pool >= 2, "posterior_samples",
          "leaves fewer than two samples for the repulsive std");
  }
  check(kl_scale >= 0.0, "kl_scale", "must be non-negative");
  check(beta >= 0.0, "beta", "must be non-negative");
  check(gamma > 0.0 && gamma <= 1.0, "gamma", "must lie in (0, 1]");
  check(rho >= 0.0 && rho <= 1.0, "rho", "must lie in [0, 1]");
  check(lambda > 0.0, "lambda", "must be positive");
  check(critic_lr > 0.0, "critic_lr", "must be positive");
  check(actor_lr > 0.0, "actor_lr", "must be positive");
  check(weight_decay >= 0.0, "weight_decay", "must be non-negative");
  check(init_sigma > 0.0, "init_sigma", "must be positive");
  check(!critic_hidden.empty(), "critic_hidden", "must name at least one layer");
  check(!actor_hidden.empty(), "actor_hidden", "must name at least one layer");
  for (auto w : critic_hidden) check(w > 0, "critic_hidden", "widths must be positive");
  for (auto w : actor_hidden) check(w > 0, "actor_hidden", "widths must be positive");
  check(batch_size >= 1, "batch_size", "must be at least 1");
  check(eval_interval >= 1, "eval_interval", "must be at least 1");
  check(eval_episodes >= 1, "eval_episodes", "must be at least 1");
  const auto e = envs::make_env(env);
  check(e->discrete_actions() == 0, "env", "must have continuous actions");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"ensemble_size", ensemble_size},
          {"posterior_samples", posterior_samples},
          {"ood_actions", ood_actions},
          {"next_actions", next_actions},
          {"eta_q", eta_q},
          {"eta_ood", eta_ood},
          {"kl_scale", kl_scale},
          {"beta", beta},
          {"gamma", gamma},
          {"rho", rho},
          {"lambda", lambda},
          {"critic_lr", critic_lr},
          {"actor_lr", actor_lr},
          {"weight_decay", weight_decay},
          {"layer_norm", layer_norm},
          {"init_sigma", init_sigma},
          {"critic_hidden", critic_hidden},
          {"actor_hidden", actor_hidden},
          {"batch_size", batch_size},
          {"steps", steps},
          {"eval_interval", eval_interval},
          {"eval_episodes", eval_episodes},
          {"seed", seed},
          {"env", env},
          {"dataset", dataset},
          {"pooling", pooling_name(pooling)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  nlohmann::json merged = TrainConfig{}.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!merged.contains(key)) throw ConfigError("train config: unknown key '" + key + "'");
    merged[key] = value;
  }
  TrainConfig c;
  try {
    c.ensemble_size = merged.at("ensemble_size").get<std::size_t>();
    c.posterior_samples = merged.at("posterior_samples").get<std::size_t>();
    c.ood_actions = merged.at("ood_actions").get<std::size_t>();
    c.next_actions = merged.at("next_actions").get<std::size_t>();
    c.eta_q = merged.at("eta_q").get<double>();
    c.eta_ood = merged.at("eta_ood").get<double>();
    c.kl_scale = merged.at("kl_scale").get<double>();
    c.beta = merged.at("beta").get<double>();
    c.gamma = merged.at("gamma").get<double>();
    c.rho = merged.at("rho").get<double>();
    c.lambda = merged.at("lambda").get<double>();
    c.critic_lr = merged.at("critic_lr").get<double>();
    c.actor_lr = merged.at("actor_lr").get<double>();
    c.weight_decay = merged.at("weight_decay").get<double>();
    c.layer_norm = merged.at("layer_norm").get<bool>();
    c.init_sigma = merged.at("init_sigma").get<double>();
    c.critic_hidden = merged.at("critic_hidden").get<std::vector<std::size_t>>();
    c.actor_hidden = merged.at("actor_hidden").get<std::vector<std::size_t>>();
    c.batch_size = merged.at("batch_size").get<std::size_t>();
    c.steps = merged.at("steps").get<std::size_t>();
    c.eval_interval = merged.at("eval_interval").get<std::size_t>();
    c.eval_episodes = merged.at("eval_episodes").get<std::size_t>();
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.env = merged.at("env").get<std::string>();
    c.dataset = merged.at("dataset").get<std::string>();
    c.pooling = parse_pooling(merged.at("pooling").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string metrics_csv_row(const MetricsRecord& r) {
  std::ostringstream s;
  s << r.step << ',' << fmt(r.bellman) << ',' << fmt(r.kl) << ',' << fmt(r.ood_std) << ','
    << fmt(r.in_dist_std) << ',' << fmt(r.eval_return_mean) << ',' << fmt(r.eval_return_std);
  return s.str();
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
  out << kMetricsHeader << '\n';
  for (const auto& r : records) out << metrics_csv_row(r) << '\n';
}

namespace {

struct Trainer {
  const TrainConfig& cfg;
  const data::OfflineDataset& ds;
  std::unique_ptr<envs::Env> env;
  actor::TanhGaussianPolicy policy;
  critic::EnsembleCritic critic;
  std::vector<AdamState> critic_opt;
  AdamState actor_opt;
  critic::CriticLossOptions loss_opts;
  critic::TransitionBatch probe;
  std::vector<critic::MemberLoss> last_losses;

  Trainer(const TrainConfig& c, const data::OfflineDataset& d) : cfg(c), ds(d) {
    env = envs::make_env(cfg.env);
    critic::CriticConfig cc;
    cc.state_dim = env->state_dim();
    cc.action_dim = env->action_dim();
    cc.hidden = cfg.critic_hidden;
    cc.ensemble_size = cfg.ensemble_size;
    cc.samples = cfg.posterior_samples;
    cc.init_sigma = cfg.init_sigma;
    cc.layer_norm = cfg.layer_norm;
    Rng crng = Rng::keyed(cfg.seed, {kInitCritic});
    critic = critic::EnsembleCritic(cc, crng);

    actor::PolicyConfig pc;
    pc.state_dim = env->state_dim();
    pc.action_dim = env->action_dim();
    pc.hidden = cfg.actor_hidden;
    Rng prng = Rng::keyed(cfg.seed, {kInitPolicy});
    policy = actor::TanhGaussianPolicy(pc, prng);

    AdamOptions co;
    co.lr = cfg.critic_lr;
    co.weight_decay = cfg.weight_decay;
    for (std::size_t j = 0; j < critic.size(); ++j) {
      critic_opt.emplace_back(critic.member(j).parameters(), co);
    }
    AdamOptions ao;
    ao.lr = cfg.actor_lr;
    actor_opt = AdamState(policy.parameters(), ao);

    loss_opts.eta_q = cfg.eta_q;
    loss_opts.eta_ood = cfg.eta_ood;
    loss_opts.kl_scale = cfg.kl_scale;
    loss_opts.pooling = cfg.pooling;

    Rng rng = Rng::keyed(cfg.seed, {kProbe});
    probe = gather(ds, draw_indices(ds.size(), std::min(cfg.batch_size, ds.size()), rng));
  }

  void step(std::size_t t) {
    Rng rng = Rng::keyed(cfg.seed, {kStep, t});
    const auto batch = gather(ds, draw_indices(ds.size(), cfg.batch_size, rng));

    Matrix ood_s, ood_a;
    if (cfg.eta_ood > 0.0) {
      ood_s = repeat_rows(batch.states, cfg.ood_actions);
      ood_a = actor::ood_actions(policy, batch.states, cfg.ood_actions, rng);
    }
    const Vector y = critic::pessimistic_target(critic, batch, policy, cfg.beta, cfg.gamma,
                                                cfg.posterior_samples, rng, cfg.next_actions);
    const auto data_noise = critic::draw_noise(critic, cfg.posterior_samples, rng);
    const auto ood_noise = cfg.eta_ood > 0.0
                               ? critic::draw_noise(critic, cfg.posterior_samples, rng)
                               : std::vector<Matrix>{};
    auto losses = critic::critic_losses(
        critic, {batch.states, batch.actions, y, ood_s, ood_a}, loss_opts, data_noise, ood_noise);
    for (std::size_t j = 0; j < critic.size(); ++j) {
      adam_step(critic.member(j).parameters(), losses[j].grads->parameters(), critic_opt[j]);
    }
    last_losses = std::move(losses);

    auto al = actor::actor_loss(policy, critic, batch.states, cfg.beta, cfg.posterior_samples, rng);
    if (!std::isfinite(al.loss)) throw NumericError("actor loss is not finite");
    adam_step(policy.parameters(), with_prefix(al.grads.parameters(), "trunk"), actor_opt);

    critic.soft_update_targets(cfg.rho);
  }

  MetricsRecord record(std::size_t t) const {
    MetricsRecord r;
    r.step = t;
    Rng rng = Rng::keyed(cfg.seed, {kDiag, t});
    const Vector y = critic::pessimistic_target(critic, probe, policy, cfg.beta, cfg.gamma,
                                                cfg.posterior_samples, rng, cfg.next_actions);
    const auto noise = critic::draw_noise(critic, cfg.posterior_samples, rng);
    critic::CriticLossOptions opts = loss_opts;
    opts.eta_ood = 0.0;
    const Matrix none;
    const auto losses = critic::critic_losses(critic, {probe.states, probe.actions, y, none, none},
                                              opts, noise, {}, false);
    for (const auto& l : losses) {
      r.bellman += l.bellman;
      r.kl += l.kl;
    }
    r.bellman /= static_cast<double>(losses.size());
    r.kl /= static_cast<double>(losses.size());

    const std::size_t n = cfg.posterior_samples;
    if (critic.size() * n >= 2) {
      r.in_dist_std = mean_row_std(critic::q_samples(critic, probe.states, probe.actions, noise, false));
      const std::size_t k = std::max<std::size_t>(cfg.ood_actions, 1);
      const Matrix os = repeat_rows(probe.states, k);
      const Matrix oa = actor::ood_actions(policy, probe.states, k, rng);
      r.ood_std = mean_row_std(critic::q_samples(critic, os, oa, noise, false));
    }
    const auto ev = evaluate_policy(*env, policy, cfg.eval_episodes, Rng::keyed(cfg.seed, {kEval}).next_u64());
    r.eval_return_mean = ev.mean;
    r.eval_return_std = ev.std;
    return r;
  }
};

void write_snapshot(const std::filesystem::path& dir, const TrainConfig& cfg, std::size_t step,
                    const std::string& what, const std::vector<critic::MemberLoss>& losses,
                    const std::vector<MetricsRecord>& metrics) {
  nlohmann::json j;
  j["step"] = step;
  j["error"] = what;
  j["config"] = cfg.to_json();
  auto& ls = j["last_member_losses"] = nlohmann::json::array();
  for (const auto& l : losses) {
    ls.push_back({{"loss", fmt(l.loss)}, {"bellman", fmt(l.bellman)}, {"kl", fmt(l.kl)},
                  {"ood_std", fmt(l.ood_std)}});
  }
  if (!metrics.empty()) j["last_metrics"] = metrics_csv_row(metrics.back());
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "failure.json") << j.dump(2) << '\n';
}

}  // namespace

TrainResult train(const TrainConfig& config, const data::OfflineDataset& dataset,
                  const TrainHooks& hooks) {
  config.validate();
  dataset.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  if (dataset.meta.env != config.env) {
    throw ConfigError("train: dataset was generated on '" + dataset.meta.env +
                      "' but the config names '" + config.env + "'");
  }
  Trainer tr(config, dataset);
  if (dataset.meta.state_dim != tr.env->state_dim() ||
      dataset.meta.action_dim != tr.env->action_dim()) {
    throw ConfigError("train: dataset dimensions do not match env '" + config.env + "'");
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<MetricsRecord> metrics;
  auto emit = [&](std::size_t t) {
    metrics.push_back(tr.record(t));
    if (hooks.on_record) hooks.on_record(metrics.back());
    if (hooks.on_timing) {
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      hooks.on_timing(t, dt.count());
    }
  };

  auto guarded = [&](std::size_t t, auto&& fn) {
    try {
      fn();
    } catch (const NumericError& e) {
      if (hooks.snapshot_dir) {
        write_snapshot(*hooks.snapshot_dir, config, t, e.what(), tr.last_losses, metrics);
      }
      throw NumericError("training diverged at step " + std::to_string(t) + ": " + e.what());
    }
  };

  guarded(0, [&] { emit(0); });
  for (std::size_t t = 1; t <= config.steps; ++t) {
    guarded(t, [&] {
      tr.step(t);
      if (t % config.eval_interval == 0) emit(t);
    });
  }
  return {std::move(tr.policy), std::move(tr.critic), std::move(metrics)};
}

ReturnStats evaluate_policy(const envs::Env& env, const ActionFn& act, std::size_t episodes,
                            std::uint64_t seed) {
  if (episodes == 0) throw UsageError("evaluate_policy: need at least one episode");
  ReturnStats out;
  out.returns.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng rng = Rng::keyed(seed, {e});
    Vector s = env.reset(rng);
    double ret = 0.0;
    for (std::size_t t = 0; t < env.horizon(); ++t) {
      auto res = env.step(s, act(s), rng);
      ret += res.reward;
      s = std::move(res.next_state);
      if (res.terminal) break;
    }
    out.returns.push_back(ret);
  }
  double m = 0.0;
  for (double r : out.returns) m += r;
  m /= static_cast<double>(episodes);
  double v = 0.0;
  for (double r : out.returns) v += (r - m) * (r - m);
  out.mean = m;
  out.std = std::sqrt(v / static_cast<double>(episodes));
  return out;
}

ReturnStats evaluate_policy(const envs::Env& env, const actor::TanhGaussianPolicy& policy,
                            std::size_t episodes, std::uint64_t seed) {
  return evaluate_policy(
      env, [&](std::span<const double> s) { return actor::deterministic_action(policy, s); },
      episodes, seed);
}

nlohmann::json UncertaintyReport::to_json() const {
  nlohmann::json j = {{"in_dist_std", in_dist_std},
                      {"ood_std", ood_std},
                      {"pairs", pairs},
                      {"samples", samples}};
  j["ratio"] = ratio ? nlohmann::json(*ratio) : nlohmann::json(nullptr);
  return j;
}

UncertaintyReport uncertainty_report(const critic::EnsembleCritic& critic,
                                     const data::ProbeSets& probes, std::size_t n,
                                     std::uint64_t seed) {
  if (critic.size() * n < 2) throw UsageError("uncertainty_report: need at least two samples");
  require_shape(probes.in_states.rows() == probes.ood_states.rows(),
                "uncertainty_report: probe sets differ in size");
  Rng rng(seed);
  // Both sets see the same weight draws.
  const auto noise = critic::draw_noise(critic, n, rng);
  UncertaintyReport r;
  r.pairs = probes.in_states.rows();
  r.samples = critic.size() * n;
  r.in_dist_std = mean_row_std(critic::q_samples(critic, probes.in_states, probes.in_actions, noise, false));
  r.ood_std = mean_row_std(critic::q_samples(critic, probes.ood_states, probes.ood_actions, noise, false));
  if (r.in_dist_std > 0.0) r.ratio = r.ood_std / r.in_dist_std;
  return r;
}

data::ProbeOptions default_probe_options(const std::string& env_id, std::uint64_t seed) {
  data::ProbeOptions o;
  o.seed = seed;
  if (env_id == envs::kPointMass) o.expert = envs::point_mass_expert;
  return o;
}

}  // namespace drvf::harness
