#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lmc/dense.hpp"
#include "lmc/diagnostics.hpp"
#include "oracles.hpp"

using lmc::DenseMatrix;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const DenseMatrix m{{1.5, -2.0, 3.0}, {0.25, 4.0, -1.0}};
  EXPECT_EQ(lmc::matmul(DenseMatrix::identity(2), m), m);
}

TEST(Matmul, RowTimesColumn) {
  const DenseMatrix a{{1, 2}};
  const DenseMatrix b{{3}, {4}};
  EXPECT_EQ(lmc::matmul(a, b), (DenseMatrix{{11}}));
}

TEST(Matmul, MatchesTripleLoop) {
  const auto a = oracle::random_matrix(5, 7, 1);
  const auto b = oracle::random_matrix(7, 3, 2);
  EXPECT_LE(lmc::max_abs_diff(lmc::matmul(a, b), oracle::naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, TransposedVariantsMatchTripleLoop) {
  const auto a = oracle::random_matrix(6, 4, 3);
  const auto b = oracle::random_matrix(6, 5, 4);
  const auto c = oracle::random_matrix(3, 4, 5);
  EXPECT_LE(lmc::max_abs_diff(lmc::matmul_tn(a, b), oracle::naive_matmul(oracle::naive_transpose(a), b)), 1e-12);
  EXPECT_LE(lmc::max_abs_diff(lmc::matmul_nt(a, c), oracle::naive_matmul(a, oracle::naive_transpose(c))), 1e-12);
  EXPECT_EQ(lmc::transpose(a), oracle::naive_transpose(a));
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(lmc::matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), lmc::ShapeError);
  EXPECT_THROW(lmc::matmul_tn(DenseMatrix(2, 3), DenseMatrix(3, 3)), lmc::ShapeError);
  EXPECT_THROW(lmc::matmul_nt(DenseMatrix(2, 3), DenseMatrix(2, 2)), lmc::ShapeError);
  EXPECT_THROW(lmc::hadamard(DenseMatrix(2, 3), DenseMatrix(3, 2)), lmc::ShapeError);
}

TEST(Matmul, DeterministicAcrossThreadCounts) {
  const auto a = oracle::random_matrix(700, 9, 6);
  const auto b = oracle::random_matrix(9, 5, 7);
  const auto one = lmc::matmul(a, b);
  lmc::set_num_threads(4);
  const auto four = lmc::matmul(a, b);
  lmc::set_num_threads(1);
  EXPECT_EQ(one, four);
  EXPECT_EQ(one, lmc::matmul(a, b));
}

TEST(Relu, ZeroInputGivesZeroMask) {
  auto r = lmc::relu(DenseMatrix(2, 2));
  EXPECT_EQ(r.activation, DenseMatrix(2, 2));
  EXPECT_EQ(r.mask, DenseMatrix(2, 2));
}

TEST(Relu, HandExample) {
  auto r = lmc::relu(DenseMatrix{{-1, 2}});
  EXPECT_EQ(r.activation, (DenseMatrix{{0, 2}}));
  EXPECT_EQ(r.mask, (DenseMatrix{{0, 1}}));
}

TEST(Relu, BackwardMatchesFiniteDifferences) {
  DenseMatrix z{{0.5, -0.5}, {-0.5, 0.5}};
  const DenseMatrix v{{1.3, -0.7}, {2.0, 0.4}};
  const auto mask = lmc::relu(z).mask;
  const auto analytic = lmc::relu_backward(mask, v);
  // d/dz of sum(v . relu(z))
  auto f = [&] {
    const auto h = lmc::relu(z).activation;
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += v.values()[i] * h.values()[i];
    return s;
  };
  const auto fd = lmc::finite_diff(f, z, 1e-6);
  EXPECT_LE(lmc::max_abs_diff(analytic, fd), 1e-8);
}

TEST(SoftmaxXent, UniformLogitsGiveLogK) {
  const std::vector<int> labels{0, 2, 1};
  for (double w : {1.0, 0.3}) {
    auto r = lmc::softmax_xent(DenseMatrix(3, 4, 0.7), labels, w);
    EXPECT_NEAR(r.loss, w * std::log(4.0), 1e-15);
  }
}

TEST(SoftmaxXent, SaturatedRow) {
  const std::vector<int> labels{0};
  auto r = lmc::softmax_xent(DenseMatrix{{10, -10}}, labels, 1.0);
  EXPECT_NEAR(r.loss, std::log1p(std::exp(-20.0)), 1e-20);
  EXPECT_NEAR(r.loss, 2.06e-9, 1e-11);
  auto w = lmc::softmax_xent(DenseMatrix{{10, -10}}, labels, 2.5);
  EXPECT_NEAR(w.loss, 2.5 * std::log1p(std::exp(-20.0)), 1e-20);
}

TEST(SoftmaxXent, GradientMatchesFiniteDifferences) {
  DenseMatrix z = oracle::random_matrix(4, 3, 11);
  const std::vector<int> labels{2, 0, 1, 1};
  const auto analytic = lmc::softmax_xent(z, labels, 0.75).dlogits;
  auto f = [&] { return lmc::softmax_xent(z, labels, 0.75).loss; };
  const auto fd = lmc::finite_diff(f, z, 1e-5);
  EXPECT_LE(lmc::max_elementwise_rel_err(analytic, fd, 1e-12), 1e-6);
}

TEST(SoftmaxXent, InvariantToRowShift) {
  const DenseMatrix z = oracle::random_matrix(5, 4, 12);
  const std::vector<int> labels{0, 1, 2, 3, 0};
  DenseMatrix shifted = z;
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (double& v : shifted.row(i)) v += 3.0 * static_cast<double>(i) - 4.0;
  const double a = lmc::softmax_xent(z, labels, 1.0).loss;
  const double b = lmc::softmax_xent(shifted, labels, 1.0).loss;
  EXPECT_LE(std::abs(a - b), 1e-12);
}

TEST(SoftmaxXent, Errors) {
  const std::vector<int> none;
  EXPECT_THROW(lmc::softmax_xent(DenseMatrix(0, 3), none, 1.0), lmc::ConfigError);
  const std::vector<int> bad{3};
  EXPECT_THROW(lmc::softmax_xent(DenseMatrix(1, 3), bad, 1.0), lmc::ConfigError);
  const std::vector<int> two{0, 1};
  EXPECT_THROW(lmc::softmax_xent(DenseMatrix(1, 3), two, 1.0), lmc::ShapeError);
}

TEST(Norms, HandValues) {
  EXPECT_DOUBLE_EQ(lmc::fro_norm(DenseMatrix::identity(2)), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(lmc::inf_norm_rows(DenseMatrix{{0.6, 0.6}, {0, 0.5}}), 1.2);
  EXPECT_DOUBLE_EQ(lmc::inf_norm_cols(DenseMatrix{{0.6, 0.6}, {0, 0.5}}), 1.1);
  const auto x = oracle::random_matrix(3, 3, 13);
  EXPECT_EQ(lmc::rel_err(x, x), 0.0);
  EXPECT_TRUE(std::isinf(lmc::rel_err(x, DenseMatrix(3, 3))));
  EXPECT_EQ(lmc::rel_err(DenseMatrix(3, 3), DenseMatrix(3, 3)), 0.0);
}

TEST(RowHelpers, GatherScatterRoundTrip) {
  const auto m = oracle::random_matrix(6, 3, 14);
  const std::vector<std::uint32_t> ids{4, 1, 5};
  const auto g = lmc::gather_rows(m, ids);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g(i, j), m(ids[i], j));
  DenseMatrix out(6, 3);
  lmc::scatter_rows(g, ids, out);
  for (auto id : ids)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(out(id, j), m(id, j));
  EXPECT_EQ(out(0, 0), 0.0);
  EXPECT_EQ(lmc::row_block(m, 2, 3), lmc::gather_rows(m, std::vector<int>{2, 3, 4}));
}

TEST(CheckFinite, RejectsNan) {
  DenseMatrix m(1, 2);
  m(0, 1) = std::nan("");
  EXPECT_THROW(lmc::check_finite(m, "m"), lmc::NumericError);
}
