#include <gtest/gtest.h>

#include "drvf/kernels.hpp"
#include "drvf/rng.hpp"

using namespace drvf;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(-1.0, 1.0);
  return m;
}

struct Dims {
  std::size_t batch, in, out;
};

class KernelAgreement : public ::testing::TestWithParam<Dims> {};

}  // namespace

TEST_P(KernelAgreement, ParallelMatchesSerialReference) {
  const auto [batch, in, out] = GetParam();
  Rng rng(batch * 131 + in * 7 + out);
  const Matrix x = random_matrix(batch, in, rng);
  const Matrix w = random_matrix(in, out, rng);
  const Matrix dz = random_matrix(batch, out, rng);
  Vector bias(out);
  for (double& b : bias) b = rng.normal();

  Matrix z_par, z_ser;
  kernels::affine_forward(x, w, bias, z_par);
  kernels::serial::affine_forward(x, w, bias, z_ser);
  ASSERT_EQ(z_par.rows(), batch);
  ASSERT_EQ(z_par.cols(), out);
  for (std::size_t i = 0; i < z_par.size(); ++i) {
    EXPECT_NEAR(z_par.data()[i], z_ser.data()[i], 1e-12 * (1.0 + std::abs(z_ser.data()[i])));
  }

  Matrix dx_par, dx_ser;
  kernels::affine_input_grad(dz, w, dx_par);
  kernels::serial::affine_input_grad(dz, w, dx_ser);
  for (std::size_t i = 0; i < dx_par.size(); ++i) {
    EXPECT_NEAR(dx_par.data()[i], dx_ser.data()[i], 1e-12 * (1.0 + std::abs(dx_ser.data()[i])));
  }

  // Accumulation on top of existing values.
  Matrix dw_par(in, out, 0.5), dw_ser(in, out, 0.5);
  Vector db_par(out, 1.0), db_ser(out, 1.0);
  kernels::affine_param_grad(x, dz, dw_par, db_par);
  kernels::serial::affine_param_grad(x, dz, dw_ser, db_ser);
  for (std::size_t i = 0; i < dw_par.size(); ++i) {
    EXPECT_NEAR(dw_par.data()[i], dw_ser.data()[i], 1e-11 * (1.0 + std::abs(dw_ser.data()[i])));
  }
  for (std::size_t i = 0; i < out; ++i) EXPECT_NEAR(db_par[i], db_ser[i], 1e-11);
}

INSTANTIATE_TEST_SUITE_P(Shapes, KernelAgreement,
                         ::testing::Values(Dims{1, 1, 1}, Dims{3, 5, 7}, Dims{17, 33, 19},
                                           Dims{64, 64, 64}, Dims{257, 31, 65},
                                           Dims{512, 3, 64}),
                         [](const auto& info) {
                           const Dims& d = info.param;
                           return "b" + std::to_string(d.batch) + "_in" + std::to_string(d.in) +
                                  "_out" + std::to_string(d.out);
                         });

TEST(Kernels, ParallelRunsAreBitIdentical) {
  Rng rng(5);
  const Matrix x = random_matrix(300, 70, rng);
  const Matrix w = random_matrix(70, 50, rng);
  const Vector bias(50, 0.25);
  Matrix a, b;
  kernels::affine_forward(x, w, bias, a);
  kernels::affine_forward(x, w, bias, b);
  EXPECT_EQ(a, b);
}

TEST(Kernels, ShapeMismatchThrows) {
  Matrix x(2, 3), w(4, 2), z;
  Vector bias(2);
  EXPECT_THROW(kernels::affine_forward(x, w, bias, z), ShapeError);
  EXPECT_THROW(kernels::serial::affine_forward(x, w, bias, z), ShapeError);
}
