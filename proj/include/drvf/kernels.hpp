#pragma once

// Batched dense-layer kernels. Every kernel exists twice: a plain serial
// reference used by the tests, and an OpenMP version used by the networks.
// The parallel versions split work over output rows only, so each output
// element is reduced in a fixed order and results do not depend on the
// thread count.

#include "drvf/matrix.hpp"

namespace drvf::kernels {

// z = x·w + bias, with x (batch × in), w (in × out), z (batch × out).
void affine_forward(const Matrix& x, const Matrix& w, std::span<const double> bias,
                    Matrix& z);
// dx = dz·wᵀ, with dz (batch × out), w (in × out), dx (batch × in).
void affine_input_grad(const Matrix& dz, const Matrix& w, Matrix& dx);
// dw += xᵀ·dz and dbias += column sums of dz.
void affine_param_grad(const Matrix& x, const Matrix& dz, Matrix& dw,
                       std::span<double> dbias);

namespace serial {
void affine_forward(const Matrix& x, const Matrix& w, std::span<const double> bias,
                    Matrix& z);
void affine_input_grad(const Matrix& dz, const Matrix& w, Matrix& dx);
void affine_param_grad(const Matrix& x, const Matrix& dz, Matrix& dw,
                       std::span<double> dbias);
}  // namespace serial

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace drvf::kernels
