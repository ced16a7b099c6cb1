#pragma once

#include <cstdint>
#include <vector>

#include "drvf/matrix.hpp"
#include "drvf/params.hpp"
#include "drvf/rng.hpp"

namespace drvf {

enum class Activation { kIdentity, kRelu };

struct DenseLayer {
  Matrix weight;  // in × out
  Vector bias;    // out
  Activation activation = Activation::kRelu;
  bool layer_norm = false;
  Vector ln_gain;   // out, present when layer_norm
  Vector ln_shift;  // out, present when layer_norm
};

struct MlpOptions {
  Activation hidden = Activation::kRelu;
  Activation output = Activation::kIdentity;
  // Layer normalization before the activation of every non-final layer.
  bool layer_norm = false;
};

// Activation record of one batched forward pass.
struct MlpCache {
  const void* owner = nullptr;
  std::uint64_t version = 0;
  // activations[i] is the input to layer i; the last entry is the output.
  std::vector<Matrix> activations;
  std::vector<Matrix> normalized;  // layer-norm output before gain/shift
  std::vector<Vector> inv_std;     // per-row 1/sqrt(var + eps)
};

// Gradient storage with the same structure as the network.
struct MlpGrads {
  std::vector<DenseLayer> layers;
  ParamList parameters();
  void zero();
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> widths, MlpOptions options = {});

  // Uniform(−1/√fan_in, 1/√fan_in) weights and biases; unit gain, zero shift.
  void init(Rng& rng);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t output_width() const { return widths_.back(); }
  const MlpOptions& options() const noexcept { return options_; }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  // Mutable access invalidates outstanding caches.
  std::vector<DenseLayer>& mutable_layers() {
    ++version_;
    return layers_;
  }

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, MlpCache& cache) const;
  Vector forward(std::span<const double> x) const;

  // Accumulates parameter gradients into `grads` and returns d(loss)/d(input).
  // With `want_input_grad` false the returned matrix is empty.
  Matrix backward(const MlpCache& cache, const Matrix& output_grad, MlpGrads& grads,
                  bool want_input_grad = true) const;
  // Input gradient only; parameter gradients are not formed.
  Matrix input_gradient(const MlpCache& cache, const Matrix& output_grad) const;

  MlpGrads make_grads() const;
  ParamList parameters();
  std::size_t parameter_count() const;

 private:
  Matrix run(const Matrix& x, MlpCache* cache) const;
  Matrix back(const MlpCache& cache, const Matrix& output_grad, MlpGrads* grads,
             bool want_input_grad) const;

  std::vector<std::size_t> widths_;
  MlpOptions options_;
  std::vector<DenseLayer> layers_;
  std::uint64_t version_ = 0;
};

}  // namespace drvf
