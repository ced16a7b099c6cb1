#pragma once

// Numerical self-checks shared by `drvf verify` and the acceptance suite.
// Each returns OracleReports; the option defaults are the full-size settings.

#include <cstdint>
#include <optional>
#include <vector>

#include "drvf/linear_mdp.hpp"
#include "drvf/oracles.hpp"

namespace drvf::checks {

using oracles::OracleReport;

struct PosteriorOptions {
  std::size_t instances = 100;
  std::size_t max_dim = 8;
  std::size_t max_rows = 200;
  double lambda = 1.0;
  std::size_t draws = 1'000'000;
  std::uint64_t seed = 101;
};

// Two reports: sampled posterior std vs sqrt(ψᵀΛ⁻¹ψ) (relative 1%), and the
// LSVI mean vs the explicit normal equations (absolute 1e-10).
std::vector<OracleReport> posterior_std_identity(const PosteriorOptions& o = {});

struct VarianceOptions {
  std::size_t sets = 1000;
  std::size_t min_n = 2;
  std::size_t max_n = 64;
  std::uint64_t seed = 102;
};

// Population variance against the pairwise and RBF log-kernel forms (1e-10).
std::vector<OracleReport> variance_identities(const VarianceOptions& o = {});

struct MinGaussianOptions {
  std::vector<std::size_t> n = {2, 5, 10};
  std::size_t trials = 1'000'000;
  double mu = 0.3;
  double sigma = 1.7;
  std::uint64_t seed = 103;
};

// One report per N (|MC − (μ − α_N σ)| ≤ 0.05σ) plus the exact N = 2 value
// within three standard errors.
std::vector<OracleReport> min_gaussian_shortfall(const MinGaussianOptions& o = {});

struct KlOptions {
  std::size_t pairs = 100;
  std::uint64_t seed = 104;
};

OracleReport kl_closed_form(const KlOptions& o = {});

struct GradientOptions {
  double step = 1e-5;
  double tolerance = 1e-3;
  std::uint64_t seed = 105;
};

// Critic loss (joint, per-member, layer norm, no OOD term) and actor loss
// against central differences with all noise frozen.
std::vector<OracleReport> gradient_fidelity(const GradientOptions& o = {});

// The fixed random MDP of the coverage and suboptimality checks:
// 6 states, 3 actions, d = 6, horizon 5.
linear_mdp::LinearMdpSpec reference_mdp(std::uint64_t seed = 2024);

struct CoverageOptions {
  std::uint64_t mdp_seed = 2024;
  std::size_t trials = 200;
  std::size_t episodes = 100;
  double lambda = 1.0;
  std::vector<double> tau_grid = {0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 8.0};
  double required = 0.95;
  std::uint64_t seed = 106;
};

struct CoverageResult {
  linear_mdp::XiCoverage table;
  bool monotone = false;
  std::optional<double> tau_star;  // smallest τ reaching the required coverage
  OracleReport report;
};

CoverageResult xi_coverage(const CoverageOptions& o = {});

struct SuboptimalityOptions {
  std::uint64_t mdp_seed = 2024;
  std::size_t trials = 100;
  std::size_t episodes = 100;
  double lambda = 1.0;
  double tau = 1.5;
  double required = 0.95;
  std::uint64_t seed = 107;
};

struct SuboptimalityResult {
  std::size_t held = 0;  // trials where the bound holds from every start state
  std::size_t trials = 0;
  double mean_gap = 0.0;
  double mean_bound = 0.0;
  OracleReport report;
};

// Pessimistic LSVI with penalty τ·Γ; the bound uses the same τ·Γ.
SuboptimalityResult suboptimality_bound(const SuboptimalityOptions& o = {});

// Everything above, in order. `quick` cuts the posterior and min-of-Gaussians
// Monte-Carlo sizes by about 5x; the other checks are cheap at full size.
std::vector<OracleReport> verify_suite(bool quick = false);

}  // namespace drvf::checks
