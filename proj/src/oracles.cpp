#include "drvf/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "drvf/errors.hpp"
#include "drvf/rng.hpp"

namespace drvf::oracles {

nlohmann::json OracleReport::to_json() const {
  return {{"name", name},
          {"computed", computed},
          {"reference", reference},
          {"tolerance", tolerance},
          {"mode", mode == Tolerance::kAbsolute ? "absolute" : "relative"},
          {"pass", pass},
          {"detail", detail}};
}

OracleReport compare(std::string name, std::vector<double> computed,
                     std::vector<double> reference, double tol, Tolerance mode) {
  OracleReport r{std::move(name), std::move(computed), std::move(reference), tol, mode, true, {}};
  if (r.computed.size() != r.reference.size()) {
    r.pass = false;
    r.detail = "length mismatch";
    return r;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < r.computed.size(); ++i) {
    double err = std::abs(r.computed[i] - r.reference[i]);
    if (mode == Tolerance::kRelative) err /= std::max(std::abs(r.reference[i]), 1e-300);
    if (!(err <= tol)) r.pass = false;
    if (!(err <= worst)) worst = err;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "worst deviation %.3g", worst);
  r.detail = buf;
  return r;
}

Matrix gauss_jordan_inverse(Matrix a) {
  const std::size_t n = a.rows();
  require_shape(a.cols() == n, "gauss_jordan_inverse: not square");
  Matrix inv = Matrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (a(pivot, col) == 0.0) throw NumericError("gauss_jordan_inverse: singular matrix");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) {
        std::swap(a(pivot, c), a(col, c));
        std::swap(inv(pivot, c), inv(col, c));
      }
    }
    const double d = a(col, col);
    for (std::size_t c = 0; c < n; ++c) {
      a(col, c) /= d;
      inv(col, c) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        a(r, c) -= f * a(col, c);
        inv(r, c) -= f * inv(col, c);
      }
    }
  }
  return inv;
}

Vector gaussian_solve(Matrix a, Vector b) {
  const std::size_t n = a.rows();
  require_shape(a.cols() == n && b.size() == n, "gaussian_solve: shape mismatch");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (a(pivot, col) == 0.0) throw NumericError("gaussian_solve: singular matrix");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(pivot, c), a(col, c));
      std::swap(b[pivot], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  Vector x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t c = r + 1; c < n; ++c) s -= a(r, c) * x[c];
    x[r] = s / a(r, r);
  }
  return x;
}

Vector normal_equation_oracle(const Matrix& features, const Vector& targets, double lambda) {
  const std::size_t d = features.cols();
  Matrix gram(d, d);
  for (std::size_t i = 0; i < d; ++i) gram(i, i) = lambda;
  Vector rhs(d, 0.0);
  for (std::size_t k = 0; k < features.rows(); ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      rhs[i] += features(k, i) * targets[k];
      for (std::size_t j = 0; j < d; ++j) gram(i, j) += features(k, i) * features(k, j);
    }
  }
  const Matrix inv = gauss_jordan_inverse(gram);
  Vector mu(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) mu[i] += inv(i, j) * rhs[j];
  }
  return mu;
}

McEstimate min_gaussian_mc(double mu, double sigma, std::size_t n, std::size_t trials,
                           std::uint64_t seed) {
  if (n == 0 || trials < 2) throw UsageError("min_gaussian_mc: need n ≥ 1 and trials ≥ 2");
  Rng rng(seed);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) m = std::min(m, mu + sigma * rng.normal());
    const double delta = m - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (m - mean);
  }
  const double var = m2 / static_cast<double>(trials - 1);
  return {mean, std::sqrt(var / static_cast<double>(trials))};
}

double kl_quadrature(double mu, double sigma, std::size_t points) {
  if (!(sigma > 0.0)) throw UsageError("kl_quadrature: sigma must be positive");
  const double lo = mu - 12.0 * sigma;
  const double hi = mu + 12.0 * sigma;
  const double h = (hi - lo) / static_cast<double>(points - 1);
  const double log_norm_q = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  const double log_norm_p = -0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo + h * static_cast<double>(i);
    const double zq = (x - mu) / sigma;
    const double log_q = log_norm_q - 0.5 * zq * zq;
    const double log_p = log_norm_p - 0.5 * x * x;
    const double f = std::exp(log_q) * (log_q - log_p);
    total += (i == 0 || i + 1 == points) ? 0.5 * f : f;
  }
  return total * h;
}

std::vector<double> finite_difference(const std::function<double()>& loss,
                                      const ParamList& params, double step) {
  std::vector<double> grad;
  grad.reserve(total_size(params));
  for (const auto& p : params) {
    for (double& x : p.values) {
      const double saved = x;
      x = saved + step;
      const double up = loss();
      x = saved - step;
      const double down = loss();
      x = saved;
      grad.push_back((up - down) / (2.0 * step));
    }
  }
  return grad;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                          double floor) {
  require_shape(a.size() == b.size(), "max_relative_error: length mismatch");
  double scale = floor;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst / scale;
}

namespace {

struct DenseModel {
  std::size_t s, a;
  std::vector<double> p;  // p[(s·A + a)·S + s']
  std::vector<double> r;  // r[s·A + a]
};

DenseModel dense_model(const linear_mdp::LinearMdpSpec& mdp) {
  DenseModel m{mdp.num_states, mdp.num_actions, {}, {}};
  m.p.assign(m.s * m.a * m.s, 0.0);
  m.r.assign(m.s * m.a, 0.0);
  for (std::size_t sa = 0; sa < m.s * m.a; ++sa) {
    for (std::size_t k = 0; k < mdp.dim; ++k) {
      const double psi = mdp.features(sa, k);
      m.r[sa] += psi * mdp.reward_weights[k];
      for (std::size_t s2 = 0; s2 < m.s; ++s2) m.p[sa * m.s + s2] += psi * mdp.next_measure(s2, k);
    }
  }
  return m;
}

Matrix q_from_v(const DenseModel& m, double gamma, const Vector& v) {
  Matrix q(m.s, m.a);
  for (std::size_t s = 0; s < m.s; ++s) {
    for (std::size_t a = 0; a < m.a; ++a) {
      const std::size_t sa = s * m.a + a;
      double e = 0.0;
      for (std::size_t s2 = 0; s2 < m.s; ++s2) e += m.p[sa * m.s + s2] * v[s2];
      q(s, a) = m.r[sa] + gamma * e;
    }
  }
  return q;
}

Vector solve_policy(const DenseModel& m, double gamma, const Matrix& pi) {
  Matrix lhs = Matrix::identity(m.s);
  Vector rhs(m.s, 0.0);
  for (std::size_t s = 0; s < m.s; ++s) {
    for (std::size_t a = 0; a < m.a; ++a) {
      const std::size_t sa = s * m.a + a;
      rhs[s] += pi(s, a) * m.r[sa];
      for (std::size_t s2 = 0; s2 < m.s; ++s2) lhs(s, s2) -= gamma * pi(s, a) * m.p[sa * m.s + s2];
    }
  }
  return gaussian_solve(lhs, rhs);
}

}  // namespace

TabularSolution tabular_value_oracle(const linear_mdp::LinearMdpSpec& mdp) {
  const DenseModel m = dense_model(mdp);
  TabularSolution out;
  auto argmax_rows = [&](const Matrix& q) {
    std::vector<std::size_t> best(m.s, 0);
    for (std::size_t s = 0; s < m.s; ++s) {
      for (std::size_t a = 1; a < m.a; ++a) {
        if (q(s, a) > q(s, best[s])) best[s] = a;
      }
    }
    return best;
  };
  if (mdp.horizon > 0) {
    out.q.resize(mdp.horizon);
    out.v.resize(mdp.horizon);
    out.greedy_action.resize(mdp.horizon);
    Vector next(m.s, 0.0);
    for (std::size_t t = mdp.horizon; t-- > 0;) {
      out.q[t] = q_from_v(m, mdp.gamma, next);
      out.greedy_action[t] = argmax_rows(out.q[t]);
      Vector v(m.s);
      for (std::size_t s = 0; s < m.s; ++s) v[s] = out.q[t](s, out.greedy_action[t][s]);
      out.v[t] = v;
      next = v;
    }
    return out;
  }
  // Policy iteration from the all-zeros action choice.
  std::vector<std::size_t> policy(m.s, 0);
  Vector v;
  for (std::size_t iter = 0; iter < 10'000; ++iter) {
    Matrix pi(m.s, m.a);
    for (std::size_t s = 0; s < m.s; ++s) pi(s, policy[s]) = 1.0;
    v = solve_policy(m, mdp.gamma, pi);
    const Matrix q = q_from_v(m, mdp.gamma, v);
    bool stable = true;
    for (std::size_t s = 0; s < m.s; ++s) {
      std::size_t best = policy[s];
      for (std::size_t a = 0; a < m.a; ++a) {
        if (q(s, a) > q(s, best) + 1e-13) best = a;
      }
      if (best != policy[s]) {
        policy[s] = best;
        stable = false;
      }
    }
    if (stable) break;
  }
  out.v.push_back(v);
  out.q.push_back(q_from_v(m, mdp.gamma, v));
  out.greedy_action.push_back(policy);
  return out;
}

Vector policy_value_linear_solve(const linear_mdp::LinearMdpSpec& mdp, const Matrix& policy) {
  return solve_policy(dense_model(mdp), mdp.gamma, policy);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile_bisection(double p) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("normal_quantile_bisection: p must be in (0, 1)");
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace drvf::oracles
