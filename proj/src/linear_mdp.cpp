#include "drvf/linear_mdp.hpp"

#include <algorithm>
#include <cmath>

#include "drvf/errors.hpp"

namespace drvf::linear_mdp {
namespace {

// Dense (S·A) × S transition table.
Matrix transition_table(const LinearMdpSpec& mdp) {
  Matrix p(mdp.num_states * mdp.num_actions, mdp.num_states);
  for (std::size_t sa = 0; sa < p.rows(); ++sa) {
    for (std::size_t s2 = 0; s2 < mdp.num_states; ++s2) {
      p(sa, s2) = dot(mdp.features.row(sa), mdp.next_measure.row(s2));
    }
  }
  return p;
}

Matrix reward_table(const LinearMdpSpec& mdp) {
  Matrix r(mdp.num_states, mdp.num_actions);
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    for (std::size_t a = 0; a < mdp.num_actions; ++a) r(s, a) = mdp.reward(s, a);
  }
  return r;
}

// Q(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) V(s').
Matrix backup(const LinearMdpSpec& mdp, const Matrix& rewards, const Matrix& p,
              std::span<const double> v) {
  Matrix q(mdp.num_states, mdp.num_actions);
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      q(s, a) = rewards(s, a) + mdp.gamma * dot(p.row(s * mdp.num_actions + a), v);
    }
  }
  return q;
}

Vector policy_average(const Matrix& q, const TabularPolicy& pi) {
  Vector v(q.rows(), 0.0);
  for (std::size_t s = 0; s < q.rows(); ++s) v[s] = dot(q.row(s), pi.row(s));
  return v;
}

TabularPolicy greedy(const Matrix& q, Vector* values = nullptr) {
  TabularPolicy pi(q.rows(), q.cols());
  if (values) values->assign(q.rows(), 0.0);
  for (std::size_t s = 0; s < q.rows(); ++s) {
    auto row = q.row(s);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    pi(s, best) = 1.0;
    if (values) (*values)[s] = row[best];
  }
  return pi;
}

double sup_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

constexpr double kDiscountedTol = 1e-12;
constexpr std::size_t kMaxIterations = 10'000'000;

void require_discount(const LinearMdpSpec& mdp) {
  if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0)) {
    throw ConfigError("infinite-horizon evaluation needs gamma in (0, 1)");
  }
}

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Round-off: fall back to the last index with positive mass.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

}  // namespace

double LinearMdpSpec::reward(std::size_t s, std::size_t a) const {
  return dot(feature(s, a), reward_weights);
}

double LinearMdpSpec::transition(std::size_t s, std::size_t a, std::size_t next) const {
  return dot(feature(s, a), next_measure.row(next));
}

void LinearMdpSpec::validate(double tol) const {
  if (num_states == 0 || num_actions == 0 || dim == 0) {
    throw ConfigError("LinearMdpSpec: sizes must be positive");
  }
  if (features.rows() != num_states * num_actions || features.cols() != dim ||
      next_measure.rows() != num_states || next_measure.cols() != dim ||
      reward_weights.size() != dim) {
    throw ConfigError("LinearMdpSpec: table shapes disagree with sizes");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("LinearMdpSpec: gamma must be in (0, 1]");
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      if (norm2(feature(s, a)) > 1.0 + tol) {
        throw ConfigError("LinearMdpSpec: ‖ψ(s,a)‖ exceeds 1");
      }
      const double r = reward(s, a);
      if (r < -tol || r > 1.0 + tol) throw ConfigError("LinearMdpSpec: reward outside [0, 1]");
      double total = 0.0;
      for (std::size_t s2 = 0; s2 < num_states; ++s2) {
        const double p = transition(s, a, s2);
        if (p < -tol) throw ConfigError("LinearMdpSpec: negative transition probability");
        total += p;
      }
      if (std::abs(total - 1.0) > tol) {
        throw ConfigError("LinearMdpSpec: transition row does not sum to 1");
      }
    }
  }
}

nlohmann::json LinearMdpSpec::to_json() const {
  auto rows = [](const Matrix& m) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    }
    return out;
  };
  return {{"num_states", num_states}, {"num_actions", num_actions}, {"dim", dim},
          {"horizon", horizon},       {"gamma", gamma},             {"features", rows(features)},
          {"next_measure", rows(next_measure)}, {"reward_weights", reward_weights}};
}

LinearMdpSpec LinearMdpSpec::from_json(const nlohmann::json& j) {
  LinearMdpSpec m;
  try {
    m.num_states = j.at("num_states").get<std::size_t>();
    m.num_actions = j.at("num_actions").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.horizon = j.at("horizon").get<std::size_t>();
    m.gamma = j.at("gamma").get<double>();
    m.reward_weights = j.at("reward_weights").get<Vector>();
    auto read = [&](const nlohmann::json& rows, std::size_t nrows) {
      Matrix out(nrows, m.dim);
      if (rows.size() != nrows) throw ConfigError("LinearMdpSpec: wrong row count");
      for (std::size_t r = 0; r < nrows; ++r) {
        const auto v = rows[r].get<Vector>();
        if (v.size() != m.dim) throw ConfigError("LinearMdpSpec: wrong row length");
        std::copy(v.begin(), v.end(), out.row(r).begin());
      }
      return out;
    };
    m.features = read(j.at("features"), m.num_states * m.num_actions);
    m.next_measure = read(j.at("next_measure"), m.num_states);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("LinearMdpSpec JSON: ") + e.what());
  }
  m.validate();
  return m;
}

LinearMdpSpec random_linear_mdp(std::size_t num_states, std::size_t num_actions,
                                std::size_t dim, std::size_t horizon, double gamma, Rng& rng) {
  auto simplex_point = [&](std::span<double> out) {
    double total = 0.0;
    for (double& x : out) {
      x = -std::log(1.0 - rng.uniform());
      total += x;
    }
    for (double& x : out) x /= total;
  };
  LinearMdpSpec m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.dim = dim;
  m.horizon = horizon;
  m.gamma = gamma;
  m.features = Matrix(num_states * num_actions, dim);
  for (std::size_t sa = 0; sa < m.features.rows(); ++sa) simplex_point(m.features.row(sa));
  // Column k of next_measure is the next-state distribution of latent state k.
  m.next_measure = Matrix(num_states, dim);
  Vector column(num_states);
  for (std::size_t k = 0; k < dim; ++k) {
    simplex_point(column);
    for (std::size_t s = 0; s < num_states; ++s) m.next_measure(s, k) = column[s];
  }
  m.reward_weights.resize(dim);
  for (double& u : m.reward_weights) u = rng.uniform();
  m.validate();
  return m;
}

TabularPolicy uniform_policy(std::size_t num_states, std::size_t num_actions) {
  return TabularPolicy(num_states, num_actions, 1.0 / static_cast<double>(num_actions));
}

ValueTables exact_values(const LinearMdpSpec& mdp, std::span<const TabularPolicy> policy) {
  require_shape(!policy.empty(), "exact_values: empty policy");
  for (const auto& pi : policy) {
    require_shape(pi.rows() == mdp.num_states && pi.cols() == mdp.num_actions,
                  "exact_values: policy shape mismatch");
  }
  const Matrix p = transition_table(mdp);
  const Matrix r = reward_table(mdp);
  ValueTables out;
  if (mdp.horizon > 0) {
    require_shape(policy.size() == 1 || policy.size() == mdp.horizon,
                  "exact_values: need one policy table or one per step");
    out.q.resize(mdp.horizon);
    out.v.resize(mdp.horizon);
    Vector next(mdp.num_states, 0.0);
    for (std::size_t t = mdp.horizon; t-- > 0;) {
      const auto& pi = policy.size() == 1 ? policy[0] : policy[t];
      out.q[t] = backup(mdp, r, p, next);
      out.v[t] = policy_average(out.q[t], pi);
      next = out.v[t];
    }
    return out;
  }
  require_discount(mdp);
  require_shape(policy.size() == 1, "exact_values: discounted evaluation needs a stationary policy");
  Vector v(mdp.num_states, 0.0);
  Matrix q;
  for (std::size_t it = 0; it < kMaxIterations; ++it) {
    q = backup(mdp, r, p, v);
    Vector nv = policy_average(q, policy[0]);
    const double diff = sup_diff(nv, v);
    v = std::move(nv);
    if (diff < kDiscountedTol) break;
  }
  out.q.push_back(backup(mdp, r, p, v));
  out.v.push_back(v);
  return out;
}

ValueTables exact_values(const LinearMdpSpec& mdp, const TabularPolicy& policy) {
  return exact_values(mdp, std::span<const TabularPolicy>(&policy, 1));
}

OptimalSolution optimal_values(const LinearMdpSpec& mdp) {
  const Matrix p = transition_table(mdp);
  const Matrix r = reward_table(mdp);
  OptimalSolution out;
  if (mdp.horizon > 0) {
    out.values.q.resize(mdp.horizon);
    out.values.v.resize(mdp.horizon);
    out.policy.resize(mdp.horizon);
    Vector next(mdp.num_states, 0.0);
    for (std::size_t t = mdp.horizon; t-- > 0;) {
      out.values.q[t] = backup(mdp, r, p, next);
      out.policy[t] = greedy(out.values.q[t], &out.values.v[t]);
      next = out.values.v[t];
    }
    return out;
  }
  require_discount(mdp);
  Vector v(mdp.num_states, 0.0);
  for (std::size_t it = 0; it < kMaxIterations; ++it) {
    Vector nv;
    greedy(backup(mdp, r, p, v), &nv);
    const double diff = sup_diff(nv, v);
    v = std::move(nv);
    if (diff < kDiscountedTol) break;
  }
  out.values.q.push_back(backup(mdp, r, p, v));
  Vector vv;
  out.policy.push_back(greedy(out.values.q[0], &vv));
  out.values.v.push_back(vv);
  return out;
}

RidgePosterior lsvi_solve(const FeatureDataset& data, double lambda, std::size_t dim) {
  if (!(lambda > 0.0)) throw ConfigError("lsvi_solve: lambda must be positive");
  require_shape(data.features.rows() == data.targets.size(), "lsvi_solve: row count mismatch");
  require_shape(data.size() == 0 || data.features.cols() == dim, "lsvi_solve: feature width mismatch");
  RidgePosterior post;
  post.lambda = lambda;
  post.precision = Matrix::identity(dim);
  for (double& x : post.precision.flat()) x *= lambda;
  Vector rhs(dim, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto psi = data.features.row(i);
    const double y = data.targets[i];
    if (!std::isfinite(y)) throw NumericError("lsvi_solve: non-finite target in row " + std::to_string(i));
    for (std::size_t a = 0; a < dim; ++a) {
      if (!std::isfinite(psi[a])) {
        throw NumericError("lsvi_solve: non-finite feature in row " + std::to_string(i));
      }
      rhs[a] += psi[a] * y;
      for (std::size_t b = 0; b < dim; ++b) post.precision(a, b) += psi[a] * psi[b];
    }
  }
  post.precision_cholesky = cholesky(post.precision);
  post.mean = cholesky_solve(post.precision_cholesky, rhs);
  return post;
}

RidgePosterior lsvi_solve(const FeatureDataset& data, double lambda) {
  return lsvi_solve(data, lambda, data.dim());
}

double lcb_penalty(std::span<const double> psi, const Matrix& precision) {
  require_shape(psi.size() == precision.rows(), "lcb_penalty: dimension mismatch");
  return norm2(forward_substitute(cholesky(precision), psi));
}

double lcb_penalty(std::span<const double> psi, const RidgePosterior& posterior) {
  require_shape(psi.size() == posterior.mean.size(), "lcb_penalty: dimension mismatch");
  // ψᵀΛ⁻¹ψ = ‖L⁻¹ψ‖² for Λ = LLᵀ.
  return norm2(forward_substitute(posterior.precision_cholesky, psi));
}

StdComparison posterior_std_check(const RidgePosterior& posterior, std::span<const double> psi,
                                  std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw UsageError("posterior_std_check: need at least 2 samples");
  const std::size_t d = posterior.mean.size();
  require_shape(psi.size() == d, "posterior_std_check: dimension mismatch");
  const Matrix& l = posterior.precision_cholesky;
  Rng rng(seed);
  Vector z(d), w(d);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (double& x : z) x = rng.normal();
    // w = μ + L⁻ᵀz has covariance L⁻ᵀL⁻¹ = Λ⁻¹; solved in place.
    for (std::size_t r = d; r-- > 0;) {
      double acc = z[r];
      for (std::size_t k = r + 1; k < d; ++k) acc -= l(k, r) * w[k];
      w[r] = acc / l(r, r);
    }
    double q = 0.0;
    for (std::size_t k = 0; k < d; ++k) q += psi[k] * (posterior.mean[k] + w[k]);
    const double delta = q - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (q - mean);
  }
  return {lcb_penalty(psi, posterior), std::sqrt(m2 / static_cast<double>(n_samples - 1))};
}

StepwiseEpisodes sample_episodes(const LinearMdpSpec& mdp, const TabularPolicy& behavior,
                                 std::size_t episodes, Rng& rng) {
  if (mdp.horizon == 0) throw ConfigError("sample_episodes: needs a finite horizon");
  require_shape(behavior.rows() == mdp.num_states && behavior.cols() == mdp.num_actions,
                "sample_episodes: behavior policy shape mismatch");
  const Matrix p = transition_table(mdp);
  StepwiseEpisodes out(mdp.horizon, std::vector<Transition>(episodes));
  for (std::size_t k = 0; k < episodes; ++k) {
    std::size_t s = rng.index(mdp.num_states);
    for (std::size_t t = 0; t < mdp.horizon; ++t) {
      const std::size_t a = sample_index(behavior.row(s), rng);
      const std::size_t s2 = sample_index(p.row(s * mdp.num_actions + a), rng);
      out[t][k] = {s, a, mdp.reward(s, a), s2};
      s = s2;
    }
  }
  return out;
}

FeatureDataset step_dataset(const LinearMdpSpec& mdp, const std::vector<Transition>& step,
                            std::span<const double> next_value) {
  require_shape(next_value.size() == mdp.num_states, "step_dataset: value length mismatch");
  FeatureDataset d{Matrix(step.size(), mdp.dim), Vector(step.size())};
  for (std::size_t i = 0; i < step.size(); ++i) {
    const auto& tr = step[i];
    const auto psi = mdp.feature(tr.state, tr.action);
    std::copy(psi.begin(), psi.end(), d.features.row(i).begin());
    d.targets[i] = tr.reward + mdp.gamma * next_value[tr.next_state];
  }
  return d;
}

XiCoverage xi_quantifier_check(const LinearMdpSpec& mdp, const XiCoverageOptions& options) {
  if (mdp.horizon == 0) throw ConfigError("xi_quantifier_check: needs a finite horizon");
  if (options.trials == 0) throw ConfigError("xi_quantifier_check: trials must be positive");
  const OptimalSolution opt = optimal_values(mdp);
  const TabularPolicy behavior = uniform_policy(mdp.num_states, mdp.num_actions);
  const std::size_t n_tau = options.tau_grid.size();
  const std::size_t per_trial = mdp.horizon * mdp.num_states * mdp.num_actions;

  // Per-trial results, reduced afterwards in trial order.
  std::vector<std::vector<std::size_t>> hits(options.trials, std::vector<std::size_t>(n_tau, 0));
  const auto n_trials = static_cast<std::ptrdiff_t>(options.trials);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t trial = 0; trial < n_trials; ++trial) {
    Rng rng = Rng::keyed(options.seed, {static_cast<std::uint64_t>(trial)});
    const auto data = sample_episodes(mdp, behavior, options.episodes, rng);
    auto& h = hits[static_cast<std::size_t>(trial)];
    for (std::size_t t = 0; t < mdp.horizon; ++t) {
      const Vector zero_v(mdp.num_states, 0.0);
      const auto& next_v = t + 1 < mdp.horizon ? opt.values.v[t + 1] : zero_v;
      const auto post = lsvi_solve(step_dataset(mdp, data[t], next_v), options.lambda, mdp.dim);
      for (std::size_t s = 0; s < mdp.num_states; ++s) {
        for (std::size_t a = 0; a < mdp.num_actions; ++a) {
          const auto psi = mdp.feature(s, a);
          const double err = std::abs(dot(psi, post.mean) - opt.values.q[t](s, a));
          const double gamma_lcb = lcb_penalty(psi, post);
          for (std::size_t k = 0; k < n_tau; ++k) {
            if (err <= options.tau_grid[k] * gamma_lcb) ++h[k];
          }
        }
      }
    }
  }

  XiCoverage out;
  out.tau = options.tau_grid;
  out.tuple_coverage.assign(n_tau, 0.0);
  out.trial_coverage.assign(n_tau, 0.0);
  for (const auto& h : hits) {
    for (std::size_t k = 0; k < n_tau; ++k) {
      out.tuple_coverage[k] += static_cast<double>(h[k]);
      if (h[k] == per_trial) out.trial_coverage[k] += 1.0;
    }
  }
  for (std::size_t k = 0; k < n_tau; ++k) {
    out.tuple_coverage[k] /= static_cast<double>(per_trial * options.trials);
    out.trial_coverage[k] /= static_cast<double>(options.trials);
  }
  return out;
}

PessimisticSolution pessimistic_lsvi(const LinearMdpSpec& mdp, const StepwiseEpisodes& data,
                                     double lambda, double tau) {
  if (mdp.horizon == 0) throw ConfigError("pessimistic_lsvi: needs a finite horizon");
  require_shape(data.size() == mdp.horizon, "pessimistic_lsvi: data must hold one batch per step");
  PessimisticSolution out;
  out.policy.resize(mdp.horizon);
  out.q.resize(mdp.horizon);
  out.penalty.resize(mdp.horizon);
  Vector next(mdp.num_states, 0.0);
  for (std::size_t t = mdp.horizon; t-- > 0;) {
    const auto post = lsvi_solve(step_dataset(mdp, data[t], next), lambda, mdp.dim);
    const double cap = static_cast<double>(mdp.horizon - t);
    Matrix q(mdp.num_states, mdp.num_actions);
    Matrix pen(mdp.num_states, mdp.num_actions);
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
      for (std::size_t a = 0; a < mdp.num_actions; ++a) {
        const auto psi = mdp.feature(s, a);
        pen(s, a) = lcb_penalty(psi, post);
        q(s, a) = std::clamp(dot(psi, post.mean) - tau * pen(s, a), 0.0, cap);
      }
    }
    out.policy[t] = greedy(q, &next);
    out.q[t] = std::move(q);
    out.penalty[t] = std::move(pen);
  }
  return out;
}

SuboptimalityGap suboptimality_gap(const LinearMdpSpec& mdp,
                                   std::span<const TabularPolicy> learned_policy,
                                   std::span<const Matrix> penalty, std::size_t initial_state) {
  if (mdp.horizon == 0) throw ConfigError("suboptimality_gap: needs a finite horizon");
  require_shape(penalty.size() == mdp.horizon, "suboptimality_gap: need one penalty table per step");
  require_shape(initial_state < mdp.num_states, "suboptimality_gap: initial state out of range");
  const OptimalSolution opt = optimal_values(mdp);
  const ValueTables learned = exact_values(mdp, learned_policy);

  SuboptimalityGap out;
  out.gap = opt.values.v[0][initial_state] - learned.v[0][initial_state];
  const Matrix p = transition_table(mdp);
  Vector occupancy(mdp.num_states, 0.0);
  occupancy[initial_state] = 1.0;
  for (std::size_t t = 0; t < mdp.horizon; ++t) {
    require_shape(penalty[t].rows() == mdp.num_states && penalty[t].cols() == mdp.num_actions,
                  "suboptimality_gap: penalty shape mismatch");
    Vector next(mdp.num_states, 0.0);
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
      if (occupancy[s] == 0.0) continue;
      for (std::size_t a = 0; a < mdp.num_actions; ++a) {
        const double w = occupancy[s] * opt.policy[t](s, a);
        if (w == 0.0) continue;
        out.bound += w * penalty[t](s, a);
        for (std::size_t s2 = 0; s2 < mdp.num_states; ++s2) {
          next[s2] += w * p(s * mdp.num_actions + a, s2);
        }
      }
    }
    occupancy = std::move(next);
  }
  return out;
}

}  // namespace drvf::linear_mdp
