#include <chrono>
#include <cmath>

#include <gtest/gtest.h>

#include "ppgnn/approx.hpp"

using namespace ppgnn;

TEST(Vandermonde, HandRows) {
  Vector one(1);
  one << 2.0;
  const Matrix v = vandermonde(one, 2);
  EXPECT_EQ(v(0, 0), 1.0);
  EXPECT_EQ(v(0, 1), 2.0);
  EXPECT_EQ(v(0, 2), 4.0);
  EXPECT_EQ(vandermonde(Vector::LinSpaced(5, -1, 1), 0), Matrix::Ones(5, 1));
  Vector two(2);
  two << 0.0, 1.0;
  Matrix expected(2, 2);
  expected << 1, 0, 1, 1;
  EXPECT_EQ(vandermonde(two, 1), expected);
}

TEST(Lstsq, ExactRepresentableTarget) {
  const Vector pts = Vector::LinSpaced(7, -1, 1);
  const Matrix v = vandermonde(pts, 2);
  const Vector truth = Eigen::Vector3d(2, 3, 0);
  const FitResult fit = lstsq(v, v * truth);
  EXPECT_LE(fit.residual_norm, 1e-10);
  EXPECT_LE((fit.gamma - truth).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lstsq, SquareVandermondeInterpolates) {
  const Vector pts = Vector::LinSpaced(8, -0.9, 0.95);
  const Vector target = Vector::Random(8);
  EXPECT_LE(lstsq(vandermonde(pts, 7), target).residual_norm, 1e-9);
}

TEST(Lstsq, LinearFitOfSquareOnSymmetricSpectrum) {
  // Normal equations: sum(lambda) = 0 and sum(lambda^3) = 0 decouple, so
  // gamma_1 = 0 and gamma_0 = mean(lambda^2).
  Vector pts(6);
  pts << -0.9, -0.5, -0.2, 0.2, 0.5, 0.9;
  const Vector target = pts.array().square();
  const FitResult fit = lstsq(vandermonde(pts, 1), target);
  EXPECT_NEAR(fit.gamma[1], 0.0, 1e-14);
  EXPECT_NEAR(fit.gamma[0], target.mean(), 1e-14);
}

TEST(Lstsq, RejectsUnderdeterminedAndMismatchedInput) {
  EXPECT_THROW(lstsq(Matrix::Ones(2, 3), Vector::Ones(2)), ValidationError);
  EXPECT_THROW(lstsq(Matrix::Ones(3, 1), Vector::Ones(2)), ValidationError);
  Vector dup(3);
  dup << 0.5, 0.5, 0.5;
  EXPECT_THROW(lstsq(vandermonde(dup, 2), Vector::Ones(3)), ValidationError);
}

TEST(ErrorDominance, PolynomialTargetIsExactForBoth) {
  ApproxProblem p;
  p.spectrum = Vector::LinSpaced(40, -1, 1);
  p.target = p.spectrum.array().cube() - 0.5 * p.spectrum.array();
  p.degree = 3;
  p.adaptive_degree = 2;
  p.supports = {{0, 10}, {25, 35}};
  const Thm41Result r = thm41_oracle(p);
  EXPECT_LE(r.err_single, 1e-9);
  EXPECT_LE(r.err_multi, 1e-9);
  EXPECT_EQ(r.proof_case, ProofCase::lower_adaptive_degree);
}

TEST(ErrorDominance, StepInsideSupportFavoursPieces) {
  ApproxProblem p;
  p.spectrum = Vector::LinSpaced(60, -1, 1);
  p.target = (p.spectrum.array() > 0.3).cast<double>();
  p.degree = 3;
  p.adaptive_degree = 3;
  p.supports = {{30, 50}};
  const Thm41Result r = thm41_oracle(p);
  EXPECT_LT(r.err_multi, r.err_single);
  EXPECT_EQ(r.proof_case, ProofCase::equal_degree);
  EXPECT_LE(r.decomposition_rel_err, 1e-9);
}

TEST(ErrorDominance, AssumptionViolationsNameTheAssumption) {
  ApproxProblem p;
  p.spectrum = Vector::LinSpaced(30, -1, 1);
  p.target = Vector::Ones(30);
  p.degree = 3;
  p.adaptive_degree = 4;
  p.supports = {{0, 10}};
  auto expect = [&](const std::string& name) {
    try {
      thm41_oracle(p);
      FAIL() << "expected AssumptionViolation " << name;
    } catch (const AssumptionViolation& e) {
      EXPECT_EQ(e.assumption(), name);
    }
  };
  expect("adaptive degree <= global degree");
  p.adaptive_degree = 2;
  p.supports = {{0, 3}};
  expect("support size > K");
  p.supports = {{0, 10}, {5, 15}};
  expect("disjoint supports");
  p.supports = {{0, 10}};
  p.spectrum[1] = p.spectrum[0];
  expect("distinct eigenvalues");
}

TEST(ErrorDominance, FuzzSuiteHasNoViolations) {
  const Thm41SuiteReport rep = run_thm41_suite(200, 7);
  EXPECT_EQ(rep.trials, 200);
  EXPECT_EQ(rep.violations, 0);
  EXPECT_LE(rep.max_gap, 1e-9);
  EXPECT_LE(rep.max_decomposition_rel_err, 1e-9);
  EXPECT_GT(rep.equal_degree_trials, 0);
  EXPECT_LT(rep.equal_degree_trials, 200);
}

TEST(ErrorDominance, RandomProblemsSatisfyTheirAssumptions) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const ApproxProblem p = random_thm41_problem(s);
    EXPECT_EQ(p.spectrum.size(), 64);
    EXPECT_GE(p.degree, 2);
    EXPECT_LE(p.degree, 10);
    EXPECT_GE(p.adaptive_degree, 1);
    EXPECT_LE(p.adaptive_degree, p.degree);
    EXPECT_GE(p.supports.size(), 1u);
    EXPECT_LE(p.supports.size(), 4u);
    for (const Support& sup : p.supports) EXPECT_GT(sup.size(), p.degree);
  }
}

TEST(Dimension, FilterSpaceRanks) {
  Vector ten = Vector::LinSpaced(10, -0.95, 0.9);
  EXPECT_EQ(filter_space_dim(ten, 1, 1, 2), 6);
  EXPECT_EQ(filter_space_dim(Vector::LinSpaced(50, -1, 1), 10, 5, 10), 23);
  EXPECT_EQ(filter_space_dim(ten, 3, 2, 0), 4);
}

TEST(Dimension, GraphSpaceMatchesFilterSpace) {
  const Vector ten = Vector::LinSpaced(10, -0.95, 0.9);
  EXPECT_EQ(graph_space_dim(ten, 1, 1, 2, 3), 6);
  EXPECT_EQ(graph_space_dim(Vector::LinSpaced(12, -1, 1), 2, 2, 3, 4), 9);
  const FilterBasis b = filter_basis(ten, 2, 1, 3);
  EXPECT_EQ(graph_space_dim(b.joint(), Matrix::Identity(10, 10)), numerical_rank(b.joint()));
}

TEST(Dimension, RandomOrthogonalIsOrthogonal) {
  const Matrix u = random_orthogonal(20, 5);
  EXPECT_LE((u.transpose() * u - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_EQ(u, random_orthogonal(20, 5));
}

TEST(Dimension, ChecksFromTheSuite) {
  for (const auto& c : {std::array<int, 4>{1, 1, 2, 10}, {10, 5, 10, 50}, {2, 2, 3, 12}}) {
    const DimensionCheck d = run_dimension_check(c[0], c[1], c[2], c[3], 1);
    EXPECT_TRUE(d.passed) << c[0] << "," << c[1] << "," << c[2] << "," << c[3];
    EXPECT_EQ(d.filter_rank, c[0] + 2 * c[1] + 3);
    EXPECT_EQ(d.masked_rank, 2 * (c[1] + 1));
  }
}

TEST(Dimension, RejectsOverlappingMasks) {
  EXPECT_THROW(filter_basis(Vector::LinSpaced(6, -1, 1), 2, 1, 4), ValidationError);
}

TEST(Waveform, PolynomialWaveformIsExact) {
  WaveformSpec w;
  w.polynomial = Vector::LinSpaced(11, 1.0, -1.0);
  const WaveformResult r = waveform_experiment(w, 400, 10, 5, 10);
  EXPECT_LE(r.rmse_single, 1e-9);
  EXPECT_LE(r.rmse_multi, 1e-9);
}

TEST(Waveform, PiecesBeatSingleFitByHalf) {
  const WaveformResult r = waveform_experiment(std::uint64_t{1}, 1000, 10, 5, 10);
  EXPECT_LT(r.rmse_multi, 0.5 * r.rmse_single);
  const WaveformResult again = waveform_experiment(std::uint64_t{1}, 1000, 10, 5, 10);
  EXPECT_EQ(r.rmse_single, again.rmse_single);
  EXPECT_EQ(r.rmse_multi, again.rmse_multi);
}

TEST(Waveform, RejectsTinyTiles) {
  EXPECT_THROW(waveform_experiment(std::uint64_t{1}, 50, 10, 5, 10), ValidationError);
}
