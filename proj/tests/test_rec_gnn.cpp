#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lmc/dataset.hpp"
#include "lmc/diagnostics.hpp"
#include "lmc/rec_gnn.hpp"
#include "lmc/trainer.hpp"
#include "oracles.hpp"

using lmc::DenseMatrix;
using lmc::Edge;

namespace {

lmc::RecParams random_rec(std::size_t dx, std::size_t d, std::size_t K, std::uint64_t seed, double c_scale = 0.3) {
  auto p = lmc::init_rec_params(dx, d, K, 0.95, seed);
  p.c = oracle::random_matrix(1, d, seed + 99, c_scale);
  return p;
}

lmc::Problem scalar_problem() {
  lmc::Labels labels{{0}, lmc::LabeledSet::all(1), 2};
  return lmc::make_problem(lmc::build_graph(std::vector<Edge>{}, 1), DenseMatrix{{1.0}}, labels);
}

lmc::RecParams scalar_params() {
  lmc::RecParams p;
  p.W = DenseMatrix{{0.5}};
  p.P = DenseMatrix{{1.0}};
  p.c = DenseMatrix{{0.0}};
  p.out = DenseMatrix{{0.3, -0.4}};
  return p;
}

double full_loss(const lmc::Problem& p, const DenseMatrix& H, const DenseMatrix& out) {
  std::vector<lmc::NodeId> all(p.n());
  for (lmc::NodeId v = 0; v < all.size(); ++v) all[v] = v;
  return lmc::output_pullback(lmc::matmul(H, out), lmc::labeled_rows(p.labels, all), p.labels.train.count).loss;
}

}  // namespace

TEST(ProjectWellposed, ZeroUnchanged) {
  EXPECT_EQ(lmc::project_wellposed(DenseMatrix(3, 3), 0.9), DenseMatrix(3, 3));
}

TEST(ProjectWellposed, ScalesOnlyOffendingSums) {
  // Columns are the norm-relevant orientation for node-major storage:
  // abs-sums [1.2, 0.5].
  const DenseMatrix w{{0.6, 0.25}, {-0.6, 0.25}};
  const auto out = lmc::project_wellposed(w, 0.9);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.6 * 0.75);
  EXPECT_DOUBLE_EQ(out(1, 0), -0.6 * 0.75);
  EXPECT_EQ(out(0, 1), 0.25);
  EXPECT_EQ(out(1, 1), 0.25);
}

TEST(ProjectWellposed, NormBoundOnRandomMatrices) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto w = oracle::random_matrix(6, 6, seed, 0.8);
    const auto out = lmc::project_wellposed(w, 0.95);
    EXPECT_LE(lmc::inf_norm_cols(out), 0.95 + 1e-15);
    EXPECT_LE(lmc::inf_norm_rows(out), 0.95 + 1e-15);
  }
}

TEST(ProjectWellposed, RejectsBadKappa) {
  EXPECT_THROW(lmc::project_wellposed(DenseMatrix(2, 2), 1.0), lmc::ConfigError);
  EXPECT_THROW(lmc::project_wellposed(DenseMatrix(2, 2), 0.0), lmc::ConfigError);
}

TEST(SolveForward, ZeroInputConvergesImmediately) {
  lmc::Labels labels{{0, 1, 0}, lmc::LabeledSet::all(3), 2};
  auto p = lmc::make_problem(lmc::build_graph(oracle::path_edges(3), 3), DenseMatrix(3, 2), labels);
  auto params = random_rec(2, 4, 2, 1);
  params.c = DenseMatrix(1, 4);
  const auto s = lmc::solve_forward(p, params, {});
  EXPECT_EQ(s.trace.iterations, 1);
  EXPECT_TRUE(s.trace.converged);
  EXPECT_EQ(s.H, DenseMatrix(3, 4));
}

TEST(SolveForward, ScalarFixedPoint) {
  const auto p = scalar_problem();
  const auto s = lmc::solve_forward(p, scalar_params(), {1e-14, 500});
  EXPECT_TRUE(s.trace.converged);
  EXPECT_NEAR(s.H(0, 0), 2.0, 1e-12);
}

TEST(SolveForward, ContractionRateAndMonotoneResidual) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = lmc::random_problem(30, 5, 3, 4.0, seed);
    const auto params = random_rec(5, 6, 3, seed + 7);
    const double rho = lmc::spectral_radius(p.adj, 2000, 1e-12).value;
    const auto s = lmc::solve_forward(p, params, {1e-12, 500});
    ASSERT_TRUE(s.trace.converged);
    const auto& r = s.trace.residuals;
    for (std::size_t k = 0; k + 1 < r.size(); ++k) {
      if (r[k] < 1e-14) break;
      EXPECT_LE(r[k + 1] / r[k], params.kappa * rho + 1e-3) << "seed " << seed << " k " << k;
      if (k >= 1) {
        EXPECT_LE(r[k + 1], r[k]);
      }
    }
    // residual invariant at acceptance
    const auto step = lmc::relu(lmc::add(lmc::matmul(lmc::aggregate(p.full, s.H), params.W),
                                         lmc::input_injection(p.features, params)))
                          .activation;
    EXPECT_LE(lmc::fro_norm(lmc::subtract(s.H, step)), 1e-10 * (1.0 + lmc::fro_norm(s.H)));
  }
}

TEST(SolveForward, UniqueFromDifferentStarts) {
  auto p = lmc::random_problem(25, 4, 3, 3.0, 5);
  const auto params = random_rec(4, 5, 3, 6);
  const double tol = 1e-10;
  const auto a = lmc::solve_forward(p, params, {tol, 1000});
  const DenseMatrix start = oracle::random_matrix(25, 5, 8, 3.0);
  const auto b = lmc::solve_forward(p, params, {tol, 1000}, &start);
  EXPECT_LE(lmc::max_abs_diff(a.H, b.H), 10 * tol * (1.0 + lmc::fro_norm(a.H)));
}

TEST(SolveForward, NonConvergenceReported) {
  auto p = lmc::random_problem(12, 3, 2, 3.0, 3);
  const auto params = random_rec(3, 4, 2, 4);
  const auto s = lmc::solve_forward(p, params, {1e-14, 2});
  EXPECT_FALSE(s.trace.converged);
  EXPECT_EQ(s.trace.iterations, 2);
  EXPECT_THROW(lmc::require_converged(s.trace, "test"), lmc::ConvergenceError);
  EXPECT_THROW(lmc::rec_full_gradients(p, params, {1e-14, 2}), lmc::ConvergenceError);
}

TEST(SolveBackward, ZeroRhsGivesZero) {
  auto p = lmc::random_problem(8, 3, 2, 3.0, 1);
  const auto params = random_rec(3, 4, 2, 2);
  const auto s = lmc::solve_forward(p, params, {});
  const auto a = lmc::solve_backward(p.full, s, DenseMatrix(8, 4), params, {});
  EXPECT_EQ(a.V, DenseMatrix(8, 4));
}

TEST(SolveBackward, ScalarFixedPoint) {
  const auto p = scalar_problem();
  const auto params = scalar_params();
  const auto s = lmc::solve_forward(p, params, {1e-14, 500});
  const double g = 0.37;
  const auto a = lmc::solve_backward(p.full, s, DenseMatrix{{g}}, params, {1e-14, 500});
  EXPECT_NEAR(a.V(0, 0), 2.0 * g, 1e-12);
  // dW = (A H) sigma' V = 2 * 1 * 2g
  const auto grads = lmc::rec_grads(s.M, s.mask, a.V, p.features, s.H, DenseMatrix(1, 2));
  EXPECT_NEAR(grads.blocks[0](0, 0), 4.0 * g, 1e-11);
}

TEST(SolveBackward, MatchesDenseLinearSolve) {
  const std::size_t n = 6, d = 3;
  auto p = lmc::random_problem(n, 3, 2, 2.5, 4);
  const auto params = random_rec(3, d, 2, 5);
  const auto s = lmc::solve_forward(p, params, {1e-14, 2000});
  const DenseMatrix dH = oracle::random_matrix(n, d, 6);
  const auto a = lmc::solve_backward(p.full, s, dH, params, {1e-14, 2000});
  ASSERT_TRUE(a.trace.converged);
  // J acting on vec(V), row-major index i*d+j: (A (mask . V) W^T)_{ij}
  const auto A = oracle::dense_from_graph(p.graph);
  const std::size_t N = n * d;
  DenseMatrix IminusJ(N, N);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t m = 0; m < d; ++m)
          IminusJ(i * d + j, k * d + m) = (i * d + j == k * d + m ? 1.0 : 0.0) - A(i, k) * s.mask(k, m) * params.W(j, m);
  std::vector<double> rhs(dH.values().begin(), dH.values().end());
  const auto x = oracle::solve_linear(IminusJ, rhs);
  for (std::size_t r = 0; r < N; ++r) {
    double lhs = 0.0;
    for (std::size_t c = 0; c < N; ++c) lhs += IminusJ(r, c) * a.V.values()[c];
    EXPECT_NEAR(lhs, rhs[r], 1e-8);
    EXPECT_NEAR(a.V.values()[r], x[r], 1e-8);
  }
}

TEST(RecGrads, ZeroAuxiliaryGivesZeroRecurrenceGrads) {
  auto p = lmc::random_problem(8, 3, 2, 3.0, 1);
  const auto params = random_rec(3, 4, 2, 2);
  const auto s = lmc::solve_forward(p, params, {});
  const auto g = lmc::rec_grads(s.M, s.mask, DenseMatrix(8, 4), p.features, s.H, DenseMatrix(8, 2));
  for (const auto& b : g.blocks) EXPECT_EQ(lmc::max_abs(b), 0.0);
}

TEST(RecGrads, FiniteDifferencesThroughSolver) {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 3 && seed < 100; ++seed) {
    auto p = lmc::random_problem(10, 4, 3, 3.0, seed);
    auto params = random_rec(4, 4, 3, seed + 50);
    const lmc::SolverOptions opts{1e-12, 5000};
    const auto full = lmc::rec_full_gradients(p, params, opts);
    if (lmc::min_abs_preactivation(full.state) < 1e-6) continue;
    ++checked;
    auto refs = params.block_refs();
    for (std::size_t b = 0; b < refs.size(); ++b) {
      auto f = [&] {
        const auto st = lmc::solve_forward(p, params, opts, &full.state.H);
        return full_loss(p, st.H, params.out);
      };
      const auto fd = lmc::finite_diff(f, *refs[b], 1e-5);
      EXPECT_LE(lmc::max_elementwise_rel_err(full.grads.blocks[b], fd, lmc::kGradcheckFloor), 1e-3)
          << "seed " << seed << " block " << b;
    }
  }
  EXPECT_EQ(checked, 3);
}

TEST(RecGdStep, ProjectsAfterUpdate) {
  auto p = lmc::random_problem(12, 3, 2, 3.0, 2);
  auto params = random_rec(3, 4, 2, 3);
  for (int k = 0; k < 5; ++k) {
    lmc::rec_gd_step(p, params, 5.0, {});
    EXPECT_LE(lmc::inf_norm_cols(params.W), params.kappa + 1e-15);
  }
}

TEST(RecGdStep, WellPosedAcrossFiftyInstances) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto p = lmc::random_problem(20, 4, 3, 4.0, seed);
    lmc::RecParams params = random_rec(4, 6, 3, seed + 200);
    params.W = lmc::project_wellposed(oracle::random_matrix(6, 6, seed + 300, 2.0), 0.95);
    const auto s = lmc::solve_forward(p, params, {1e-10, 500});
    ASSERT_TRUE(s.trace.converged) << seed;
    for (std::size_t k = 2; k + 1 < s.trace.residuals.size(); ++k) {
      if (s.trace.residuals[k] < 1e-14) break;
      EXPECT_LE(s.trace.residuals[k + 1] / s.trace.residuals[k], 0.96);
    }
  }
}
