#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ppgnn/spectral.hpp"

using namespace ppgnn;

namespace {

double det3(const Matrix& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

// Roots of det(A - lambda I) on [-1.5, 1.5] by sign-change scan and bisection.
std::vector<double> char_poly_roots(const Matrix& a) {
  auto f = [&](double lam) { return det3(a - lam * Matrix::Identity(3, 3)); };
  std::vector<double> roots;
  const int steps = 3000;
  for (int i = 0; i < steps; ++i) {
    double lo = -1.5 + 3.0 * i / steps;
    double hi = -1.5 + 3.0 * (i + 1) / steps;
    if (f(lo) == 0.0) {
      roots.push_back(lo);
      continue;
    }
    if ((f(lo) < 0) == (f(hi) < 0)) continue;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      ((f(lo) < 0) == (f(mid) < 0) ? lo : hi) = mid;
    }
    roots.push_back(0.5 * (lo + hi));
  }
  return roots;
}

}  // namespace

TEST(DenseEigh, IdentityHasUnitEigenvalues) {
  const EigenSystem es = dense_eigh(Matrix::Identity(3, 3));
  EXPECT_TRUE(es.complete);
  EXPECT_EQ(es.size(), 3);
  for (Index j = 0; j < 3; ++j) EXPECT_EQ(es.eigenvalues[j], 1.0);
  EXPECT_LE(orthogonality_error(es), 1e-15);
}

TEST(DenseEigh, SingleEdgeGivesZeroAndOne) {
  const EigenSystem es = dense_eigh(sym_normalize(build_graph(2, {{0, 1}})).to_dense());
  EXPECT_NEAR(es.eigenvalues[0], 0.0, 1e-15);
  EXPECT_NEAR(es.eigenvalues[1], 1.0, 1e-15);
}

TEST(DenseEigh, PathMatchesCharacteristicPolynomial) {
  const Matrix a = sym_normalize(fixture::path_graph(3)).to_dense();
  const EigenSystem es = dense_eigh(a);
  EXPECT_NEAR(es.eigenvalues[2], 1.0, 1e-10);
  const auto roots = char_poly_roots(a);
  ASSERT_EQ(roots.size(), 3u);
  for (Index j = 0; j < 3; ++j) EXPECT_NEAR(es.eigenvalues[j], roots[static_cast<std::size_t>(j)], 1e-10);
}

TEST(DenseEigh, ReconstructsRandomSymmetricMatrix) {
  Matrix m = Matrix::Random(25, 25);
  m = (m + m.transpose()).eval();
  const EigenSystem es = dense_eigh(m);
  const Matrix rec = es.eigenvectors * es.eigenvalues.asDiagonal() * es.eigenvectors.transpose();
  EXPECT_LE((rec - m).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(orthogonality_error(es), 1e-12);
  EXPECT_LE(max_residual(m, es), 1e-12);
  for (Index j = 1; j < es.size(); ++j) EXPECT_LE(es.eigenvalues[j - 1], es.eigenvalues[j]);
}

TEST(DenseEigh, SignConventionMakesLargestComponentPositive) {
  const EigenSystem es = dense_eigh(sym_normalize(fixture::random_graph(20, 4, 2)).to_dense());
  for (Index j = 0; j < es.size(); ++j) {
    Index arg = 0;
    es.eigenvectors.col(j).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(es.eigenvectors(arg, j), 0.0);
  }
}

TEST(DenseEigh, RejectsAsymmetricAndOversizedInput) {
  Matrix m = Matrix::Identity(3, 3);
  m(0, 1) = 1.0;
  EXPECT_THROW(dense_eigh(m), ValidationError);
  EXPECT_THROW(dense_eigh(Matrix::Identity(5, 5), 4), ValidationError);
}

TEST(DenseEigh, CompleteSystemSplitsAtMedian) {
  const EigenSystem es = dense_eigh(Matrix::Identity(5, 5));
  EXPECT_EQ(es.bottom_count, 2);
  EXPECT_EQ(es.top_count, 3);
}

TEST(SelectBand, HandCases) {
  const EigenSystem es = dense_eigh(sym_normalize(build_graph(2, {{0, 1}})).to_dense());
  EXPECT_EQ(select_band(es, SpectrumEnd::top, 0).size(), 0);
  const EigenSystem low = select_band(es, SpectrumEnd::bottom, 1);
  ASSERT_EQ(low.size(), 1);
  EXPECT_NEAR(low.eigenvalues[0], 0.0, 1e-15);
  EXPECT_THROW(select_band(es, SpectrumEnd::top, 3), ValidationError);
}

TEST(SelectBand, ExtremeSystemOffersOnlyStoredPairs) {
  const NormalizedGraph ng = sym_normalize(fixture::random_graph(60, 5, 4));
  const EigenSystem es = lanczos_extreme(ng, 3, 2, 1e-10, 0, 1);
  EXPECT_EQ(select_band(es, SpectrumEnd::bottom, 3).size(), 3);
  EXPECT_THROW(select_band(es, SpectrumEnd::top, 3), ValidationError);
  const EigenSystem top = select_band(es, SpectrumEnd::top, 2);
  EXPECT_EQ(top.eigenvalues, es.eigenvalues.tail(2));
}

TEST(Lanczos, TopEigenvalueOfConnectedGraphIsOne) {
  const NormalizedGraph ng = sym_normalize(fixture::random_graph(80, 4, 8));
  const EigenSystem es = lanczos_extreme(ng, 0, 1, 1e-10, 0, 3);
  ASSERT_EQ(es.size(), 1);
  EXPECT_NEAR(es.eigenvalues[0], 1.0, 1e-10);
}

TEST(Lanczos, FullBottomMatchesDense) {
  const NormalizedGraph ng = sym_normalize(fixture::random_graph(50, 4, 6));
  const EigenSystem lz = lanczos_extreme(ng, 50, 0, 1e-9, 0, 2);
  const EigenSystem de = dense_eigh(ng.to_dense());
  ASSERT_EQ(lz.size(), 50);
  EXPECT_LE((lz.eigenvalues - de.eigenvalues).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Lanczos, ExtremeBandsMatchDense) {
  const NormalizedGraph ng = sym_normalize(fixture::random_graph(200, 6, 10));
  const EigenSystem lz = lanczos_extreme(ng, 16, 16, 1e-8, 0, 5);
  const EigenSystem de = extreme_bands(dense_eigh(ng.to_dense()), 16, 16);
  ASSERT_EQ(lz.size(), 32);
  EXPECT_LE((lz.eigenvalues - de.eigenvalues).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(max_residual(ng, lz), 1e-8);
  EXPECT_LE(orthogonality_error(lz), 1e-8);
}

TEST(Lanczos, RecoversRepeatedEigenvalues) {
  // Disjoint triangles: eigenvalue 1 once per component and 0 twice per component.
  std::vector<Edge> e;
  for (Index c = 0; c < 4; ++c) {
    e.push_back({3 * c, 3 * c + 1});
    e.push_back({3 * c + 1, 3 * c + 2});
    e.push_back({3 * c, 3 * c + 2});
  }
  const NormalizedGraph ng = sym_normalize(build_graph(12, e));
  const EigenSystem es = lanczos_extreme(ng, 0, 4, 1e-10, 0, 1);
  for (Index j = 0; j < 4; ++j) EXPECT_NEAR(es.eigenvalues[j], 1.0, 1e-10);
  EXPECT_LE(orthogonality_error(es), 1e-9);
}

TEST(Lanczos, IsDeterministicForSeed) {
  const NormalizedGraph ng = sym_normalize(fixture::random_graph(120, 5, 2));
  const EigenSystem a = lanczos_extreme(ng, 4, 4, 1e-9, 0, 9);
  const EigenSystem b = lanczos_extreme(ng, 4, 4, 1e-9, 0, 9);
  EXPECT_EQ(a.eigenvalues, b.eigenvalues);
  EXPECT_EQ(a.eigenvectors, b.eigenvectors);
}

TEST(Lanczos, ContractViolations) {
  const NormalizedGraph ng = sym_normalize(fixture::path_graph(5));
  EXPECT_THROW(lanczos_extreme(ng, 3, 3, 1e-8, 0, 0), ValidationError);
  EXPECT_THROW(lanczos_extreme(ng, 1, 1, 0.0, 0, 0), ValidationError);
  EXPECT_THROW(lanczos_extreme(sym_normalize(fixture::random_graph(300, 6, 1)), 20, 20, 1e-12, 10, 0),
               ConvergenceError);
}
