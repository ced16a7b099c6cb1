#include "drvf/checks.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "drvf/actor.hpp"
#include "drvf/critic.hpp"
#include "drvf/stats.hpp"

namespace drvf::checks {
namespace {

using oracles::Tolerance;

std::string format(const char* fmt, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

// A single statistic held against a limit: pass ⇔ value ≤ limit.
OracleReport bound_report(std::string name, double value, double limit, std::string detail) {
  OracleReport r{std::move(name), {value}, {0.0}, limit, Tolerance::kAbsolute,
                 std::isfinite(value) && value <= limit, std::move(detail)};
  return r;
}

Matrix uniform_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(-1.0, 1.0);
  return m;
}

std::vector<double> flatten(const ParamList& list) {
  std::vector<double> out;
  for (const auto& t : list) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

}  // namespace

std::vector<OracleReport> posterior_std_identity(const PosteriorOptions& o) {
  Rng rng(o.seed);
  std::vector<double> sampled, analytic, mean, oracle_mean;
  for (std::size_t i = 0; i < o.instances; ++i) {
    const std::size_t d = 1 + rng.index(o.max_dim);
    const std::size_t m = 1 + rng.index(o.max_rows);
    linear_mdp::FeatureDataset data{Matrix(m, d), Vector(m)};
    for (double& v : data.features.flat()) v = rng.uniform(-1.0, 1.0) / std::sqrt(double(d));
    for (double& y : data.targets) y = rng.normal() * 3.0;
    const auto post = linear_mdp::lsvi_solve(data, o.lambda);
    Vector psi(d);
    for (double& v : psi) v = rng.normal();
    const auto cmp = linear_mdp::posterior_std_check(post, psi, o.draws, rng.next_u64());
    sampled.push_back(cmp.sampled);
    analytic.push_back(cmp.analytic);
    const Vector ref = oracles::normal_equation_oracle(data.features, data.targets, o.lambda);
    mean.insert(mean.end(), post.mean.begin(), post.mean.end());
    oracle_mean.insert(oracle_mean.end(), ref.begin(), ref.end());
  }
  return {oracles::compare("posterior std = sqrt(psi' inv(Lambda) psi)", sampled, analytic, 0.01,
                           Tolerance::kRelative),
          oracles::compare("lsvi mean = normal equations", mean, oracle_mean, 1e-10,
                           Tolerance::kAbsolute)};
}

std::vector<OracleReport> variance_identities(const VarianceOptions& o) {
  Rng rng(o.seed);
  std::vector<double> var, pairwise, kernel;
  for (std::size_t i = 0; i < o.sets; ++i) {
    const std::size_t n = o.min_n + rng.index(o.max_n - o.min_n + 1);
    Vector q(n);
    const double scale = rng.uniform(0.1, 10.0);
    for (double& v : q) v = rng.normal() * scale;
    const double bandwidth = rng.uniform(0.1, 3.0);
    double pair = 0.0, log_k = 0.0;
    for (double a : q) {
      for (double b : q) {
        pair += 0.5 * (a - b) * (a - b);
        log_k += -bandwidth * (a - b) * (a - b);  // log of exp(−γ(a − b)²)
      }
    }
    const double nn = double(n) * double(n);
    const double sd = critic::repulsive_term(q);
    var.push_back(sd * sd);
    pairwise.push_back(pair / nn);
    kernel.push_back(-log_k / (2.0 * nn * bandwidth));
  }
  return {oracles::compare("variance = pairwise half-squared differences", var, pairwise, 1e-10,
                           Tolerance::kAbsolute),
          oracles::compare("variance = RBF log-kernel sum", var, kernel, 1e-10,
                           Tolerance::kAbsolute)};
}

std::vector<OracleReport> min_gaussian_shortfall(const MinGaussianOptions& o) {
  std::vector<OracleReport> out;
  for (std::size_t k = 0; k < o.n.size(); ++k) {
    const std::size_t n = o.n[k];
    const auto mc = oracles::min_gaussian_mc(o.mu, o.sigma, n, o.trials, o.seed + k);
    const double approx = o.mu - critic::lcb_alpha(n) * o.sigma;
    out.push_back(bound_report("E[min of " + std::to_string(n) + " gaussians] vs lcb_alpha",
                               std::abs(mc.mean - approx), 0.05 * o.sigma,
                               format("MC %.5f, closed form %.5f", mc.mean, approx)));
    if (n == 2) {
      const double exact = o.mu - o.sigma / std::sqrt(std::numbers::pi);
      out.push_back(bound_report("E[min of 2 gaussians] exact, within 3 SE",
                                 std::abs(mc.mean - exact), 3.0 * mc.std_error,
                                 format("MC %.5f, exact %.5f", mc.mean, exact)));
    }
  }
  return out;
}

OracleReport kl_closed_form(const KlOptions& o) {
  Rng rng(o.seed);
  std::vector<double> closed, quad;
  for (std::size_t i = 0; i < o.pairs; ++i) {
    const double mu = rng.uniform(-3.0, 3.0);
    const double sigma = std::exp(rng.uniform(std::log(0.05), std::log(5.0)));
    critic::GaussianLastLayer layer;
    layer.mean = {mu};
    layer.raw_scale = {inverse_softplus(sigma)};
    closed.push_back(critic::kl_to_prior(layer));
    quad.push_back(oracles::kl_quadrature(mu, layer.sigma()[0]));
  }
  return oracles::compare("gaussian KL closed form vs quadrature", closed, quad, 1e-6,
                          Tolerance::kAbsolute);
}

std::vector<OracleReport> gradient_fidelity(const GradientOptions& o) {
  std::vector<OracleReport> out;
  struct Variant {
    const char* name;
    bool layer_norm;
    critic::RepulsivePooling pooling;
    double eta_ood;
  };
  const Variant variants[] = {
      {"critic_loss gradient (joint pooling)", false, critic::RepulsivePooling::kJoint, 3.0},
      {"critic_loss gradient (per-member pooling)", false, critic::RepulsivePooling::kPerMember, 3.0},
      {"critic_loss gradient (layer norm)", true, critic::RepulsivePooling::kJoint, 3.0},
      {"critic_loss gradient (no OOD term)", false, critic::RepulsivePooling::kJoint, 0.0},
  };
  std::uint64_t seed = o.seed;
  for (const auto& v : variants) {
    Rng rng(seed++);
    critic::CriticConfig cc;
    cc.state_dim = 2;
    cc.action_dim = 1;
    cc.hidden = {8, 6};
    cc.ensemble_size = 2;
    cc.init_sigma = 0.3;
    cc.layer_norm = v.layer_norm;
    critic::EnsembleCritic c(cc, rng);
    const Matrix s = uniform_matrix(6, 2, rng), a = uniform_matrix(6, 1, rng);
    const Matrix os = uniform_matrix(4, 2, rng), oa = uniform_matrix(4, 1, rng);
    Vector y(6);
    for (double& t : y) t = rng.normal();
    const auto dn = critic::draw_noise(c, 3, rng);
    const auto on = critic::draw_noise(c, 3, rng);
    critic::CriticLossOptions opts;
    opts.pooling = v.pooling;
    opts.eta_ood = v.eta_ood;
    opts.kl_scale = 0.05;
    const critic::CriticLossInputs in{s, a, y, os, oa};
    const auto losses = critic::critic_losses(c, in, opts, dn, on, true);
    double worst = 0.0;
    std::size_t params = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      auto grads = *losses[j].grads;
      const auto analytic = flatten(grads.parameters());
      auto loss = [&] { return critic::critic_losses(c, in, opts, dn, on, false)[j].loss; };
      const auto numeric = oracles::finite_difference(loss, c.member(j).parameters(), o.step);
      worst = std::max(worst, oracles::max_relative_error(analytic, numeric));
      params += analytic.size();
    }
    out.push_back(bound_report(v.name, worst, o.tolerance,
                               format("%.0f parameters, max relative error %.3g", double(params), worst)));
  }

  Rng rng(seed);
  actor::PolicyConfig pc;
  pc.state_dim = 3;
  pc.action_dim = 2;
  pc.hidden = {8, 8};
  actor::TanhGaussianPolicy p(pc, rng);
  critic::CriticConfig cc;
  cc.state_dim = 3;
  cc.action_dim = 2;
  cc.hidden = {8, 6};
  cc.ensemble_size = 2;
  cc.init_sigma = 0.3;
  critic::EnsembleCritic c(cc, rng);
  const Matrix s = uniform_matrix(5, 3, rng);
  Matrix eps(5, 2);
  for (double& e : eps.flat()) e = rng.normal();
  const auto cn = critic::draw_noise(c, 3, rng);
  auto analytic_loss = actor::actor_loss(p, c, s, 0.2, eps, cn);
  const auto analytic = flatten(analytic_loss.grads.parameters());
  auto loss = [&] { return actor::actor_loss(p, c, s, 0.2, eps, cn).loss; };
  const auto numeric = oracles::finite_difference(loss, p.parameters(), o.step);
  const double worst = oracles::max_relative_error(analytic, numeric);
  out.push_back(bound_report("actor_loss gradient", worst, o.tolerance,
                             format("%.0f parameters, max relative error %.3g",
                                    double(analytic.size()), worst)));
  return out;
}

linear_mdp::LinearMdpSpec reference_mdp(std::uint64_t seed) {
  Rng rng(seed);
  return linear_mdp::random_linear_mdp(6, 3, 6, 5, 1.0, rng);
}

CoverageResult xi_coverage(const CoverageOptions& o) {
  const auto mdp = reference_mdp(o.mdp_seed);
  linear_mdp::XiCoverageOptions xo;
  xo.episodes = o.episodes;
  xo.lambda = o.lambda;
  xo.tau_grid = o.tau_grid;
  xo.trials = o.trials;
  xo.seed = o.seed;
  CoverageResult r;
  r.table = linear_mdp::xi_quantifier_check(mdp, xo);
  r.monotone = true;
  for (std::size_t k = 1; k < r.table.tau.size(); ++k) {
    if (r.table.tuple_coverage[k] < r.table.tuple_coverage[k - 1]) r.monotone = false;
  }
  for (std::size_t k = 0; k < r.table.tau.size() && !r.tau_star; ++k) {
    if (r.table.tuple_coverage[k] >= o.required) r.tau_star = r.table.tau[k];
  }
  std::string detail = "coverage by tau:";
  for (std::size_t k = 0; k < r.table.tau.size(); ++k) {
    detail += format(" %g:%.4f", r.table.tau[k], r.table.tuple_coverage[k]);
  }
  detail += r.monotone ? ", monotone" : ", NOT monotone";
  const double best = r.table.tuple_coverage.empty()
                          ? 0.0
                          : *std::max_element(r.table.tuple_coverage.begin(),
                                              r.table.tuple_coverage.end());
  r.report = OracleReport{"xi-quantifier coverage", {best}, {o.required}, 0.0,
                          Tolerance::kAbsolute, r.monotone && r.tau_star.has_value(), detail};
  return r;
}

SuboptimalityResult suboptimality_bound(const SuboptimalityOptions& o) {
  const auto mdp = reference_mdp(o.mdp_seed);
  const auto behavior = linear_mdp::uniform_policy(mdp.num_states, mdp.num_actions);
  SuboptimalityResult r;
  r.trials = o.trials;
  for (std::size_t t = 0; t < o.trials; ++t) {
    Rng rng = Rng::keyed(o.seed, {t});
    const auto data = linear_mdp::sample_episodes(mdp, behavior, o.episodes, rng);
    const auto sol = linear_mdp::pessimistic_lsvi(mdp, data, o.lambda, o.tau);
    std::vector<Matrix> scaled = sol.penalty;
    for (auto& m : scaled) {
      for (double& v : m.flat()) v *= o.tau;
    }
    bool all = true;
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
      const auto g = linear_mdp::suboptimality_gap(mdp, sol.policy, scaled, s);
      if (!(g.gap <= g.bound)) all = false;
      r.mean_gap += g.gap;
      r.mean_bound += g.bound;
    }
    if (all) ++r.held;
  }
  const double pairs = double(o.trials * mdp.num_states);
  r.mean_gap /= pairs;
  r.mean_bound /= pairs;
  const double frac = double(r.held) / double(o.trials);
  r.report = OracleReport{"suboptimality gap within bound", {frac}, {o.required}, 0.0,
                          Tolerance::kAbsolute, frac >= o.required,
                          format("held in %.0f of %.0f trials", double(r.held), double(r.trials)) +
                              format(", mean gap %.4f, mean bound %.4f", r.mean_gap, r.mean_bound)};
  return r;
}

std::vector<OracleReport> verify_suite(bool quick) {
  std::vector<OracleReport> out;
  auto add = [&](std::vector<OracleReport> v) {
    for (auto& r : v) out.push_back(std::move(r));
  };
  PosteriorOptions po;
  if (quick) {
    po.instances = 20;
    po.draws = 200'000;
  }
  add(posterior_std_identity(po));
  add(variance_identities());
  MinGaussianOptions mo;
  if (quick) mo.trials = 200'000;
  add(min_gaussian_shortfall(mo));
  out.push_back(kl_closed_form());
  add(gradient_fidelity());
  const auto cov = xi_coverage();
  out.push_back(cov.report);
  SuboptimalityOptions so;
  if (cov.tau_star) so.tau = *cov.tau_star;
  out.push_back(suboptimality_bound(so).report);
  return out;
}

}  // namespace drvf::checks
