#include "drvf/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace drvf::kernels {
namespace {

void check_forward(const Matrix& x, const Matrix& w, std::span<const double> bias,
                   Matrix& z) {
  require_shape(x.cols() == w.rows(), "affine_forward: input width mismatch");
  require_shape(bias.size() == w.cols(), "affine_forward: bias length mismatch");
  if (z.rows() != x.rows() || z.cols() != w.cols()) z.resize(x.rows(), w.cols());
}

void check_input_grad(const Matrix& dz, const Matrix& w, Matrix& dx) {
  require_shape(dz.cols() == w.cols(), "affine_input_grad: output width mismatch");
  if (dx.rows() != dz.rows() || dx.cols() != w.rows()) dx.resize(dz.rows(), w.rows());
}

void check_param_grad(const Matrix& x, const Matrix& dz, const Matrix& dw,
                      std::span<double> dbias) {
  require_shape(x.rows() == dz.rows(), "affine_param_grad: batch mismatch");
  require_shape(dw.rows() == x.cols() && dw.cols() == dz.cols(),
                "affine_param_grad: weight gradient shape mismatch");
  require_shape(dbias.size() == dz.cols(), "affine_param_grad: bias length mismatch");
}

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void affine_forward(const Matrix& x, const Matrix& w, std::span<const double> bias,
                    Matrix& z) {
  check_forward(x, w, bias, z);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    for (std::size_t o = 0; o < w.cols(); ++o) {
      double s = bias[o];
      for (std::size_t i = 0; i < w.rows(); ++i) s += x(b, i) * w(i, o);
      z(b, o) = s;
    }
  }
}

void affine_input_grad(const Matrix& dz, const Matrix& w, Matrix& dx) {
  check_input_grad(dz, w, dx);
  for (std::size_t b = 0; b < dz.rows(); ++b) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < w.cols(); ++o) s += dz(b, o) * w(i, o);
      dx(b, i) = s;
    }
  }
}

void affine_param_grad(const Matrix& x, const Matrix& dz, Matrix& dw,
                       std::span<double> dbias) {
  check_param_grad(x, dz, dw, dbias);
  for (std::size_t i = 0; i < x.cols(); ++i) {
    for (std::size_t o = 0; o < dz.cols(); ++o) {
      double s = 0.0;
      for (std::size_t b = 0; b < x.rows(); ++b) s += x(b, i) * dz(b, o);
      dw(i, o) += s;
    }
  }
  for (std::size_t o = 0; o < dz.cols(); ++o) {
    double s = 0.0;
    for (std::size_t b = 0; b < dz.rows(); ++b) s += dz(b, o);
    dbias[o] += s;
  }
}

}  // namespace serial

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;

// A is addressed as a[r·rs + p·ps], so a transposed operand needs no copy.
struct Strided {
  const double* a;
  std::size_t rs, ps;
  double operator()(std::size_t r, std::size_t p) const { return a[r * rs + p * ps]; }
};

// C[r0:r0+R, c0:c0+C] += A[r0:r0+R, :]·B[:, c0:c0+C] with compile-time tile
// extents so the accumulators stay in registers.
template <std::size_t R, std::size_t C>
inline void tile(Strided a, const double* b, double* c, std::size_t k, std::size_t n,
                 std::size_t r0, std::size_t c0) {
  double acc[R][C];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t j = 0; j < C; ++j) acc[r][j] = c[(r0 + r) * n + c0 + j];
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n + c0;
    for (std::size_t r = 0; r < R; ++r) {
      const double av = a(r0 + r, p);
#pragma omp simd
      for (std::size_t j = 0; j < C; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t j = 0; j < C; ++j) c[(r0 + r) * n + c0 + j] = acc[r][j];
  }
}

// Edge tiles with runtime extents.
inline void tile_edge(Strided a, const double* b, double* c, std::size_t k,
                      std::size_t n, std::size_t r0, std::size_t rows, std::size_t c0,
                      std::size_t cols) {
  for (std::size_t r = r0; r < r0 + rows; ++r) {
    double* crow = c + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(r, p);
      const double* brow = b + p * n;
      for (std::size_t j = c0; j < c0 + cols; ++j) crow[j] += av * brow[j];
    }
  }
}

template <std::size_t C>
inline std::size_t narrow_tile(Strided a, const double* b, double* c, std::size_t k,
                               std::size_t n, std::size_t r0, std::size_t c0) {
  if (n - c0 < C) return c0;
  tile<kTileRows, C>(a, b, c, k, n, r0, c0);
  return c0 + C;
}

// C (m × n) += A (m × k) · B (k × n), B and C row-major. Row blocks are
// distributed over threads; every element is reduced over p in order.
void gemm_accumulate(Strided a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
  const std::size_t row_blocks = (m + kTileRows - 1) / kTileRows;
  const std::size_t wide = n - n % kTileCols;
  [[maybe_unused]] const bool par = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::size_t rb = 0; rb < row_blocks; ++rb) {
    const std::size_t r0 = rb * kTileRows;
    const std::size_t rows = std::min(kTileRows, m - r0);
    if (rows < kTileRows) {
      tile_edge(a, b, c, k, n, r0, rows, 0, n);
      continue;
    }
    for (std::size_t c0 = 0; c0 < wide; c0 += kTileCols) {
      tile<kTileRows, kTileCols>(a, b, c, k, n, r0, c0);
    }
    // Remainder columns in shrinking register tiles.
    std::size_t c0 = narrow_tile<8>(a, b, c, k, n, r0, wide);
    c0 = narrow_tile<4>(a, b, c, k, n, r0, c0);
    c0 = narrow_tile<2>(a, b, c, k, n, r0, c0);
    narrow_tile<1>(a, b, c, k, n, r0, c0);
  }
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  }
  return t;
}

}  // namespace

void affine_forward(const Matrix& x, const Matrix& w, std::span<const double> bias,
                    Matrix& z) {
  check_forward(x, w, bias, z);
  for (std::size_t b = 0; b < z.rows(); ++b) std::copy(bias.begin(), bias.end(), z.row(b).begin());
  gemm_accumulate({x.data(), x.cols(), 1}, w.data(), z.data(), x.rows(), w.rows(), w.cols());
}

void affine_input_grad(const Matrix& dz, const Matrix& w, Matrix& dx) {
  check_input_grad(dz, w, dx);
  dx.fill(0.0);
  const Matrix wt = transpose(w);
  gemm_accumulate({dz.data(), dz.cols(), 1}, wt.data(), dx.data(), dz.rows(), wt.rows(),
                  wt.cols());
}

void affine_param_grad(const Matrix& x, const Matrix& dz, Matrix& dw,
                       std::span<double> dbias) {
  check_param_grad(x, dz, dw, dbias);
  // xᵀ read in place: row i of xᵀ is column i of x.
  gemm_accumulate({x.data(), 1, x.cols()}, dz.data(), dw.data(), x.cols(), x.rows(), dz.cols());
  const std::size_t out = dz.cols();
  double* db = dbias.data();
  for (std::size_t b = 0; b < dz.rows(); ++b) {
    const double* dzr = dz.data() + b * out;
#pragma omp simd
    for (std::size_t o = 0; o < out; ++o) db[o] += dzr[o];
  }
}

}  // namespace drvf::kernels
