#include "drvf/mlp.hpp"

#include <cmath>

#include "drvf/errors.hpp"
#include "drvf/kernels.hpp"

namespace drvf {
namespace {

constexpr double kLayerNormEps = 1e-5;

ParamList layer_params(std::vector<DenseLayer>& layers) {
  ParamList out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layer" + std::to_string(i) + "/";
    out.push_back({p + "weight", {l.weight.rows(), l.weight.cols()}, l.weight.flat()});
    out.push_back({p + "bias", {l.bias.size()}, l.bias});
    if (l.layer_norm) {
      out.push_back({p + "ln_gain", {l.ln_gain.size()}, l.ln_gain});
      out.push_back({p + "ln_shift", {l.ln_shift.size()}, l.ln_shift});
    }
  }
  return out;
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> widths, MlpOptions options)
    : widths_(std::move(widths)), options_(options) {
  if (widths_.size() < 2) throw ConfigError("Mlp: need at least input and output widths");
  for (auto w : widths_) {
    if (w == 0) throw ConfigError("Mlp: layer widths must be positive");
  }
  const std::size_t n = widths_.size() - 1;
  layers_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& l = layers_[i];
    l.weight = Matrix(widths_[i], widths_[i + 1]);
    l.bias.assign(widths_[i + 1], 0.0);
    const bool last = i + 1 == n;
    l.activation = last ? options_.output : options_.hidden;
    l.layer_norm = options_.layer_norm && !last;
    if (l.layer_norm) {
      l.ln_gain.assign(widths_[i + 1], 1.0);
      l.ln_shift.assign(widths_[i + 1], 0.0);
    }
  }
}

void Mlp::init(Rng& rng) {
  ++version_;
  for (auto& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.rows()));
    for (double& w : l.weight.flat()) w = rng.uniform(-bound, bound);
    for (double& b : l.bias) b = rng.uniform(-bound, bound);
    if (l.layer_norm) {
      std::fill(l.ln_gain.begin(), l.ln_gain.end(), 1.0);
      std::fill(l.ln_shift.begin(), l.ln_shift.end(), 0.0);
    }
  }
}

Matrix Mlp::forward(const Matrix& x) const { return run(x, nullptr); }

Matrix Mlp::forward(const Matrix& x, MlpCache& cache) const { return run(x, &cache); }

Vector Mlp::forward(std::span<const double> x) const {
  Matrix in(1, x.size());
  std::copy(x.begin(), x.end(), in.data());
  Matrix out = run(in, nullptr);
  return Vector(out.data(), out.data() + out.size());
}

Matrix Mlp::run(const Matrix& x, MlpCache* cache) const {
  require_shape(x.cols() == input_width(),
                "Mlp::forward: input width " + std::to_string(x.cols()) + " != " +
                    std::to_string(input_width()));
  const std::size_t n = layers_.size();
  if (cache) {
    cache->owner = this;
    cache->version = version_;
    cache->activations.resize(n + 1);
    cache->normalized.resize(n);
    cache->inv_std.resize(n);
    cache->activations[0] = x;
  }
  Matrix h = x;
  for (std::size_t li = 0; li < n; ++li) {
    const auto& l = layers_[li];
    Matrix z;
    kernels::affine_forward(h, l.weight, l.bias, z);
    if (l.layer_norm) {
      const std::size_t w = z.cols();
      Matrix nz(z.rows(), w);
      Vector inv(z.rows());
      for (std::size_t b = 0; b < z.rows(); ++b) {
        auto row = z.row(b);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(w);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(w);
        inv[b] = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t o = 0; o < w; ++o) {
          nz(b, o) = (row[o] - mean) * inv[b];
          z(b, o) = l.ln_gain[o] * nz(b, o) + l.ln_shift[o];
        }
      }
      if (cache) {
        cache->normalized[li] = std::move(nz);
        cache->inv_std[li] = std::move(inv);
      }
    }
    if (l.activation == Activation::kRelu) {
      for (double& v : z.flat()) v = v > 0.0 ? v : 0.0;
    }
    if (cache) cache->activations[li + 1] = z;
    h = std::move(z);
  }
  return h;
}

Matrix Mlp::backward(const MlpCache& cache, const Matrix& output_grad, MlpGrads& grads,
                     bool want_input_grad) const {
  require_shape(grads.layers.size() == layers_.size(), "Mlp::backward: gradient shape mismatch");
  return back(cache, output_grad, &grads, want_input_grad);
}

Matrix Mlp::input_gradient(const MlpCache& cache, const Matrix& output_grad) const {
  return back(cache, output_grad, nullptr, true);
}

Matrix Mlp::back(const MlpCache& cache, const Matrix& output_grad, MlpGrads* grads,
                 bool want_input_grad) const {
  if (cache.owner != this || cache.version != version_ ||
      cache.activations.size() != layers_.size() + 1) {
    throw UsageError("Mlp::backward: cache does not belong to the current network state");
  }
  const std::size_t batch = cache.activations.front().rows();
  require_shape(output_grad.rows() == batch && output_grad.cols() == output_width(),
                "Mlp::backward: output gradient shape mismatch");

  Matrix g = output_grad;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& l = layers_[li];
    if (l.activation == Activation::kRelu) {
      const Matrix& act = cache.activations[li + 1];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(act.data()[i] > 0.0)) g.data()[i] = 0.0;
      }
    }
    if (l.layer_norm) {
      const Matrix& nz = cache.normalized[li];
      const Vector& inv = cache.inv_std[li];
      const std::size_t w = g.cols();
      if (grads) {
        auto& gl = grads->layers[li];
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t o = 0; o < w; ++o) {
            gl.ln_gain[o] += g(b, o) * nz(b, o);
            gl.ln_shift[o] += g(b, o);
          }
        }
      }
      for (std::size_t b = 0; b < batch; ++b) {
        double mean_dn = 0.0;
        double mean_dn_n = 0.0;
        for (std::size_t o = 0; o < w; ++o) {
          const double dn = g(b, o) * l.ln_gain[o];
          mean_dn += dn;
          mean_dn_n += dn * nz(b, o);
        }
        mean_dn /= static_cast<double>(w);
        mean_dn_n /= static_cast<double>(w);
        for (std::size_t o = 0; o < w; ++o) {
          const double dn = g(b, o) * l.ln_gain[o];
          g(b, o) = inv[b] * (dn - mean_dn - nz(b, o) * mean_dn_n);
        }
      }
    }
    if (grads) {
      auto& gl = grads->layers[li];
      kernels::affine_param_grad(cache.activations[li], g, gl.weight, gl.bias);
    }
    if (li == 0 && !want_input_grad) return {};
    Matrix dx;
    kernels::affine_input_grad(g, l.weight, dx);
    g = std::move(dx);
  }
  return g;
}

MlpGrads Mlp::make_grads() const {
  MlpGrads g;
  g.layers = layers_;
  g.zero();
  return g;
}

ParamList Mlp::parameters() { return layer_params(layers_); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    n += l.weight.size() + l.bias.size() + l.ln_gain.size() + l.ln_shift.size();
  }
  return n;
}

ParamList MlpGrads::parameters() { return layer_params(layers); }

void MlpGrads::zero() { drvf::zero(parameters()); }

}  // namespace drvf
