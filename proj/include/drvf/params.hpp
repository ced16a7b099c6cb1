#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drvf/matrix.hpp"

namespace drvf {

// Named view of one parameter tensor. Views never own storage.
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> values;
};

using ParamList = std::vector<ParamTensor>;

// Prefixes every tensor name with `prefix/`.
ParamList with_prefix(ParamList list, const std::string& prefix);
// Appends `tail` to `head`.
void append(ParamList& head, ParamList tail);
std::size_t total_size(const ParamList& list);
void zero(const ParamList& list);

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // L2 penalty: decay·θ is added to the gradient before the moment update.
  double weight_decay = 0.0;
};

// First/second moment accumulators for one ParamList.
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;

  AdamState() = default;
  AdamState(const ParamList& params, AdamOptions opts);
};

// One bias-corrected Adam update. Throws NumericError naming the tensor on a
// non-finite gradient; parameters are left untouched in that case.
void adam_step(const ParamList& params, const ParamList& grads, AdamState& state);

// target ← rho·target + (1 − rho)·online, elementwise.
void soft_update(const ParamList& target, const ParamList& online, double rho);

// Copies values from `src` into `dst` (shapes must agree).
void copy_values(const ParamList& dst, const ParamList& src);

}  // namespace drvf
