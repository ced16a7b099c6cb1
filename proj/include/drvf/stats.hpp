#pragma once

#include <span>

namespace drvf {

double softplus(double x);
double sigmoid(double x);
// Inverse of softplus for y > 0.
double inverse_softplus(double y);

// Standard normal quantile Φ⁻¹(p), p ∈ (0, 1). Rational approximation
// refined by one Halley step on erfc; absolute error below 1e-12 in the bulk.
double normal_quantile(double p);

// Population mean and standard deviation.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd population_mean_std(std::span<const double> x);

}  // namespace drvf
