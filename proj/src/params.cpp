#include "drvf/params.hpp"

#include <algorithm>
#include <cmath>

#include "drvf/errors.hpp"

namespace drvf {

ParamList with_prefix(ParamList list, const std::string& prefix) {
  for (auto& p : list) p.name = prefix + "/" + p.name;
  return list;
}

void append(ParamList& head, ParamList tail) {
  head.insert(head.end(), std::make_move_iterator(tail.begin()),
              std::make_move_iterator(tail.end()));
}

std::size_t total_size(const ParamList& list) {
  std::size_t n = 0;
  for (const auto& p : list) n += p.values.size();
  return n;
}

void zero(const ParamList& list) {
  for (const auto& p : list) std::fill(p.values.begin(), p.values.end(), 0.0);
}

namespace {

void check_pair(const ParamList& a, const ParamList& b, const char* op) {
  require_shape(a.size() == b.size(), std::string(op) + ": tensor count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    require_shape(a[i].values.size() == b[i].values.size(),
                  std::string(op) + ": shape mismatch at " + a[i].name);
  }
}

}  // namespace

AdamState::AdamState(const ParamList& params, AdamOptions opts) : options(opts) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const auto& p : params) {
    first_moment.emplace_back(p.values.size(), 0.0);
    second_moment.emplace_back(p.values.size(), 0.0);
  }
}

void adam_step(const ParamList& params, const ParamList& grads, AdamState& state) {
  check_pair(params, grads, "adam_step");
  require_shape(state.first_moment.size() == params.size(),
                "adam_step: optimizer state does not match parameters");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require_shape(state.first_moment[t].size() == params[t].values.size(),
                  "adam_step: moment shape mismatch at " + params[t].name);
    for (double g : grads[t].values) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in " + params[t].name);
      }
    }
  }

  const AdamOptions& o = state.options;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto theta = params[t].values;
    auto g = grads[t].values;
    Vector& m = state.first_moment[t];
    Vector& v = state.second_moment[t];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] + o.weight_decay * theta[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

void soft_update(const ParamList& target, const ParamList& online, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw ConfigError("soft_update: rho must lie in [0, 1], got " + std::to_string(rho));
  }
  check_pair(target, online, "soft_update");
  for (std::size_t t = 0; t < target.size(); ++t) {
    auto dst = target[t].values;
    auto src = online[t].values;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = rho * dst[i] + (1.0 - rho) * src[i];
  }
}

void copy_values(const ParamList& dst, const ParamList& src) {
  check_pair(dst, src, "copy_values");
  for (std::size_t t = 0; t < dst.size(); ++t) {
    std::copy(src[t].values.begin(), src[t].values.end(), dst[t].values.begin());
  }
}

}  // namespace drvf
