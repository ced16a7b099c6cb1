#pragma once

// Reference computations that share no code path with the modules they check.
// Only plain data types (Matrix, LinearMdpSpec, ParamList) are borrowed.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drvf/linear_mdp.hpp"
#include "drvf/matrix.hpp"
#include "drvf/params.hpp"

namespace drvf::oracles {

enum class Tolerance { kAbsolute, kRelative };

struct OracleReport {
  std::string name;
  std::vector<double> computed;
  std::vector<double> reference;
  double tolerance = 0.0;
  Tolerance mode = Tolerance::kAbsolute;
  bool pass = false;
  std::string detail;

  nlohmann::json to_json() const;
};

// pass ⇔ every |computed − reference| ≤ tol (scaled by max(|reference|, tiny)
// in relative mode).
OracleReport compare(std::string name, std::vector<double> computed,
                     std::vector<double> reference, double tol, Tolerance mode);

// Inverse by Gauss–Jordan elimination with partial pivoting.
Matrix gauss_jordan_inverse(Matrix a);
// Solves A x = b by Gaussian elimination with partial pivoting.
Vector gaussian_solve(Matrix a, Vector b);

// Ridge mean from the explicitly inverted normal matrix.
Vector normal_equation_oracle(const Matrix& features, const Vector& targets, double lambda);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Empirical E[min of N i.i.d. N(mu, sigma²)] over `trials` repetitions.
McEstimate min_gaussian_mc(double mu, double sigma, std::size_t n, std::size_t trials,
                           std::uint64_t seed);

// KL(N(mu, sigma²) ‖ N(0, 1)) by the trapezoidal rule over mu ± 12σ.
double kl_quadrature(double mu, double sigma, std::size_t points = 100'000);

// Central differences of `loss` with respect to every entry of `params`.
// Parameters are restored after each probe.
std::vector<double> finite_difference(const std::function<double()>& loss,
                                      const ParamList& params, double step = 1e-5);

// Largest relative deviation max_i |a_i − b_i| / max(|a|_∞, |b|_∞, floor).
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-8);

// Exact optimal values by dynamic programming (finite horizon) or policy
// iteration with dense linear solves (discounted).
struct TabularSolution {
  std::vector<Matrix> q;
  std::vector<Vector> v;
  std::vector<std::vector<std::size_t>> greedy_action;
};
TabularSolution tabular_value_oracle(const linear_mdp::LinearMdpSpec& mdp);

// Values of a stationary policy in a discounted MDP via (I − γP_π)⁻¹ r_π.
Vector policy_value_linear_solve(const linear_mdp::LinearMdpSpec& mdp, const Matrix& policy);

// Standard normal CDF and its inverse by bisection on erfc.
double normal_cdf(double x);
double normal_quantile_bisection(double p);

}  // namespace drvf::oracles
