#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "ppgnn/graph.hpp"
#include "ppgnn/util.hpp"

namespace ppgnn {

/// Rows (1, x, x^2, ..., x^degree) for every point.
inline Matrix vandermonde(const Vector& points, int degree) {
  if (degree < 0) throw ValidationError("degree must be nonnegative");
  Matrix v(points.size(), degree + 1);
  for (Index i = 0; i < points.size(); ++i) {
    double pw = 1.0;
    for (int p = 0; p <= degree; ++p, pw *= points[i]) v(i, p) = pw;
  }
  return v;
}

struct FitResult {
  Vector gamma;
  Vector residual_vec;
  double residual_norm = 0.0;
};

/// Least-squares fit by column-pivoted Householder QR.
inline FitResult lstsq(const Matrix& v, const Vector& target) {
  if (v.rows() != target.size()) throw ValidationError("lstsq: row count differs from target length");
  if (v.rows() < v.cols()) {
    throw ValidationError("lstsq: underdetermined system (" + std::to_string(v.rows()) + " rows, " +
                          std::to_string(v.cols()) + " columns)");
  }
  FitResult fit;
  if (v.cols() == 0) {
    fit.gamma = Vector(0);
    fit.residual_vec = target;
  } else {
    Eigen::ColPivHouseholderQR<Matrix> qr(v);
    if (qr.rank() < v.cols()) {
      throw ValidationError("lstsq: rank " + std::to_string(qr.rank()) + " < " + std::to_string(v.cols()) +
                            " columns (points not distinct?)");
    }
    fit.gamma = qr.solve(target);
    fit.residual_vec = target - v * fit.gamma;
  }
  fit.residual_norm = fit.residual_vec.norm();
  return fit;
}

/// Contiguous index range [begin, end) into a spectrum.
struct Support {
  Index begin = 0;
  Index end = 0;
  Index size() const noexcept { return end - begin; }
};

struct ApproxProblem {
  Vector spectrum;
  Vector target;
  int degree = 0;           // global polynomial degree K
  int adaptive_degree = 0;  // K' <= K
  std::vector<Support> supports;
};

enum class ProofCase { equal_degree = 1, lower_adaptive_degree = 2 };

struct Thm41Result {
  double err_single = 0.0;  // best single degree-K fit
  double err_multi = 0.0;   // global plus adaptive pieces
  ProofCase proof_case = ProofCase::equal_degree;
  std::vector<double> support_errors;  // ||e_i|| on each support
  double complement_error = 0.0;       // ||e_L|| off the supports
  /// |‖e‖² − (Σ‖e_i‖² + ‖e_L‖²)| / ‖e‖², with a floor for exact fits.
  double decomposition_rel_err = 0.0;
};

namespace detail {

inline void check_problem(const ApproxProblem& p) {
  const Index n = p.spectrum.size();
  if (p.target.size() != n) throw ValidationError("target length differs from spectrum length");
  if (p.degree < 0 || p.adaptive_degree < 0) throw ValidationError("degrees must be nonnegative");
  if (p.adaptive_degree > p.degree) {
    throw AssumptionViolation("adaptive degree <= global degree",
                              "K' = " + std::to_string(p.adaptive_degree) + " > K = " + std::to_string(p.degree));
  }
  std::vector<double> sorted(p.spectrum.data(), p.spectrum.data() + n);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (!(sorted[i] - sorted[i - 1] > 1e-12)) {
      throw AssumptionViolation("distinct eigenvalues", "spectrum repeats the value " + std::to_string(sorted[i]));
    }
  }
  std::vector<Support> s = p.supports;
  std::sort(s.begin(), s.end(), [](const Support& a, const Support& b) { return a.begin < b.begin; });
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].begin < 0 || s[i].end > n || s[i].begin >= s[i].end) {
      throw ValidationError("support [" + std::to_string(s[i].begin) + ", " + std::to_string(s[i].end) +
                            ") is empty or outside the spectrum");
    }
    if (s[i].size() <= p.degree) {
      throw AssumptionViolation("support size > K", "support [" + std::to_string(s[i].begin) + ", " +
                                                        std::to_string(s[i].end) + ") has " +
                                                        std::to_string(s[i].size()) + " points for K = " +
                                                        std::to_string(p.degree));
    }
    if (i > 0 && s[i].begin < s[i - 1].end) {
      throw AssumptionViolation("disjoint supports", "supports starting at " + std::to_string(s[i - 1].begin) +
                                                         " and " + std::to_string(s[i].begin) + " overlap");
    }
  }
}

inline Vector gather(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[idx[i]];
  return out;
}

// Chebyshev basis evaluated at `points`, on the affine map taking the range
// of `frame` onto [-1, 1]. Spans the same polynomials as the monomial
// Vandermonde with far better conditioning.
inline Matrix chebyshev_basis(const Vector& frame, const Vector& points, int degree) {
  const double lo = frame.minCoeff();
  const double hi = frame.maxCoeff();
  const double mid = 0.5 * (lo + hi);
  const double half = hi > lo ? 0.5 * (hi - lo) : 1.0;
  Matrix b(points.size(), degree + 1);
  for (Index i = 0; i < points.size(); ++i) {
    const double x = (points[i] - mid) / half;
    b(i, 0) = 1.0;
    if (degree >= 1) b(i, 1) = x;
    for (int k = 2; k <= degree; ++k) b(i, k) = 2.0 * x * b(i, k - 1) - b(i, k - 2);
  }
  return b;
}

// Best degree <= `degree` fit of `target` on `points`, evaluated at `at`.
// With too few points the interpolant of maximal degree is exact.
inline Vector fit_eval(const Vector& points, const Vector& target, int degree, const Vector& at) {
  if (points.size() == 0) return Vector::Zero(at.size());
  const int usable = static_cast<int>(std::min<Index>(degree, points.size() - 1));
  const Vector coeffs = lstsq(chebyshev_basis(points, points, usable), target).gamma;
  return chebyshev_basis(points, at, usable) * coeffs;
}

inline Vector fit_values(const Vector& points, const Vector& target, int degree) {
  return fit_eval(points, target, degree, points);
}

}  // namespace detail

/// Compares the best single degree-K polynomial fit of `target` with the fit
/// obtained by adding independent adaptive pieces on disjoint supports.
///
/// K' = K: the global polynomial is fitted on the complement of the supports
/// and each support gets its own degree-K fit (global + piece). K' < K: the
/// global polynomial is the single best fit and each support receives a
/// degree-K' least-squares correction of its residual.
inline Thm41Result thm41_oracle(const ApproxProblem& p) {
  detail::check_problem(p);
  const Index n = p.spectrum.size();
  if (n < p.degree + 1) {
    throw AssumptionViolation("support size > K", "spectrum has fewer than K+1 points");
  }

  Thm41Result r;
  const Vector single = detail::fit_values(p.spectrum, p.target, p.degree);
  r.err_single = (p.target - single).norm();

  std::vector<char> in_support(static_cast<std::size_t>(n), 0);
  for (const Support& s : p.supports) {
    for (Index i = s.begin; i < s.end; ++i) in_support[i] = 1;
  }
  std::vector<Index> complement;
  for (Index i = 0; i < n; ++i) {
    if (!in_support[i]) complement.push_back(i);
  }

  // Global polynomial values everywhere, then each piece added on its support.
  Vector approx;
  if (p.adaptive_degree == p.degree) {
    r.proof_case = ProofCase::equal_degree;
    const Vector pts = detail::gather(p.spectrum, complement);
    const Vector tgt = detail::gather(p.target, complement);
    approx = detail::fit_eval(pts, tgt, p.degree, p.spectrum);
  } else {
    r.proof_case = ProofCase::lower_adaptive_degree;
    approx = single;
  }

  for (const Support& s : p.supports) {
    const Vector pts = p.spectrum.segment(s.begin, s.size());
    const Vector tgt = p.target.segment(s.begin, s.size());
    if (r.proof_case == ProofCase::equal_degree) {
      // Piece = local degree-K fit minus the global polynomial.
      approx.segment(s.begin, s.size()) = detail::fit_values(pts, tgt, p.degree);
    } else {
      const Vector residual = tgt - approx.segment(s.begin, s.size());
      approx.segment(s.begin, s.size()) += detail::fit_values(pts, residual, p.adaptive_degree);
    }
  }

  const Vector err = p.target - approx;
  r.err_multi = err.norm();
  double parts = 0.0;
  for (const Support& s : p.supports) {
    const double e = err.segment(s.begin, s.size()).norm();
    r.support_errors.push_back(e);
    parts += e * e;
  }
  r.complement_error = detail::gather(err, complement).norm();
  parts += r.complement_error * r.complement_error;
  const double total = r.err_multi * r.err_multi;
  const double floor = 1e-20 * std::max(p.target.squaredNorm(), 1e-300);
  r.decomposition_rel_err = std::abs(total - parts) / std::max(total, floor);
  return r;
}

/// Number of singular values above rel_tol * sigma_max.
inline Index numerical_rank(const Matrix& m, double rel_tol = 1e-9) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i) rank += sv[i] > rel_tol * sv[0] ? 1 : 0;
  return rank;
}

/// Evaluation basis of the filter family: global monomials of degree <= K
/// on all points, then degree <= K' monomials masked to the t largest and to
/// the t smallest points. t = 0 drops the masked columns.
struct FilterBasis {
  Matrix global;  // n x (K+1)
  Matrix masked;  // n x 2(K'+1), or n x 0 when t = 0
  Matrix joint() const {
    Matrix j(global.rows(), global.cols() + masked.cols());
    j << global, masked;
    return j;
  }
};

inline FilterBasis filter_basis(const Vector& spectrum, int degree, int adaptive_degree, Index t) {
  const Index n = spectrum.size();
  if (degree < 0 || adaptive_degree < 0) throw ValidationError("degrees must be nonnegative");
  if (adaptive_degree > degree) throw ValidationError("adaptive degree exceeds global degree");
  if (t < 0) throw ValidationError("t must be nonnegative");
  std::vector<double> sorted(spectrum.data(), spectrum.data() + n);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (!(sorted[i] > sorted[i - 1])) throw ValidationError("spectrum must be distinct");
  }
  if (n < degree + 1) throw ValidationError("need at least K+1 points");
  if (t > 0) {
    if (2 * t >= n) throw ValidationError("need t < n/2");
    if (t < adaptive_degree + 1) throw ValidationError("need t >= K'+1");
    if (n - 2 * t < degree + 1) throw ValidationError("need n - 2t >= K+1");
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return spectrum[a] < spectrum[b]; });

  FilterBasis basis;
  basis.global = vandermonde(spectrum, degree);
  if (t == 0) {
    basis.masked.resize(n, 0);
    return basis;
  }
  const int w = adaptive_degree + 1;
  basis.masked = Matrix::Zero(n, 2 * w);
  for (Index r = 0; r < t; ++r) {
    const Index top = order[static_cast<std::size_t>(n - 1 - r)];
    const Index bottom = order[static_cast<std::size_t>(r)];
    double pt = 1.0;
    double pb = 1.0;
    for (int p = 0; p < w; ++p, pt *= spectrum[top], pb *= spectrum[bottom]) {
      basis.masked(top, p) = pt;
      basis.masked(bottom, w + p) = pb;
    }
  }
  return basis;
}

/// Dimension of the global + two-adaptive filter family, by numerical rank.
inline Index filter_space_dim(const Vector& spectrum, int degree, int adaptive_degree, Index t) {
  return numerical_rank(filter_basis(spectrum, degree, adaptive_degree, t).joint());
}

/// Seeded random orthogonal matrix (Q factor of a Gaussian matrix).
inline Matrix random_orthogonal(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix g(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) g(i, j) = gauss(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, n);
}

/// Rank of { vec(U^T diag(b) U) : b a basis column }.
inline Index graph_space_dim(const Matrix& basis, const Matrix& u) {
  const Index n = basis.rows();
  if (u.rows() != n || u.cols() != n) throw ValidationError("U must be n x n");
  Matrix stacked(n * n, basis.cols());
  for (Index c = 0; c < basis.cols(); ++c) {
    const Matrix g = u.transpose() * basis.col(c).asDiagonal() * u;
    stacked.col(c) = Eigen::Map<const Vector>(g.data(), n * n);
  }
  return numerical_rank(stacked);
}

inline Index graph_space_dim(const Vector& spectrum, int degree, int adaptive_degree, Index t, std::uint64_t seed) {
  const FilterBasis basis = filter_basis(spectrum, degree, adaptive_degree, t);
  return graph_space_dim(basis.joint(), random_orthogonal(spectrum.size(), seed));
}

/// Deterministic composite test signal on [-1, 1]: sinusoids, Gaussian
/// bumps and an optional polynomial part.
struct WaveformSpec {
  struct Sinusoid {
    double amplitude, frequency, phase;
  };
  struct Bump {
    double amplitude, center, width;
  };
  std::vector<Sinusoid> sinusoids;
  std::vector<Bump> bumps;
  Vector polynomial;  // coefficients, lowest degree first

  double operator()(double x) const {
    double y = 0.0;
    for (const auto& s : sinusoids) y += s.amplitude * std::sin(s.frequency * x + s.phase);
    for (const auto& b : bumps) {
      const double z = (x - b.center) / b.width;
      y += b.amplitude * std::exp(-0.5 * z * z);
    }
    if (polynomial.size() > 0) {
      double acc = 0.0;
      for (Index p = polynomial.size() - 1; p >= 0; --p) acc = acc * x + polynomial[p];
      y += acc;
    }
    return y;
  }
};

/// Three sinusoids of incommensurate frequency plus four narrow bumps.
inline WaveformSpec standard_waveform(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  WaveformSpec w;
  const double base[3] = {std::numbers::sqrt2, std::numbers::e, std::numbers::pi};
  for (double f : base) {
    w.sinusoids.push_back({0.5 + 1.5 * unif(rng), 3.0 * f * (1.0 + 0.5 * unif(rng)),
                           2.0 * std::numbers::pi * unif(rng)});
  }
  for (int i = 0; i < 4; ++i) {
    const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
    w.bumps.push_back({sign * (1.0 + 2.0 * unif(rng)), -0.9 + 1.8 * (i + unif(rng)) / 4.0, 0.03 + 0.05 * unif(rng)});
  }
  return w;
}

struct WaveformResult {
  double rmse_single = 0.0;
  double rmse_multi = 0.0;
};

/// Fits the waveform on an evenly spaced grid with one degree-`degree`
/// polynomial, then with `pieces` contiguous adaptive pieces of degree
/// `adaptive_degree` tiling the grid.
inline WaveformResult waveform_experiment(const WaveformSpec& spec, Index grid_n, int degree, int adaptive_degree,
                                          Index pieces) {
  if (grid_n < 2) throw ValidationError("grid needs at least 2 points");
  if (pieces < 1) throw ValidationError("need at least one adaptive piece");
  if (grid_n / pieces <= degree) {
    throw ValidationError("supports of " + std::to_string(grid_n / pieces) + " points are too small for degree " +
                          std::to_string(degree));
  }
  ApproxProblem p;
  p.spectrum = Vector::LinSpaced(grid_n, -1.0, 1.0);
  p.target.resize(grid_n);
  for (Index i = 0; i < grid_n; ++i) p.target[i] = spec(p.spectrum[i]);
  p.degree = degree;
  p.adaptive_degree = adaptive_degree;
  const Index base = grid_n / pieces;
  const Index extra = grid_n % pieces;
  Index at = 0;
  for (Index k = 0; k < pieces; ++k) {
    const Index len = base + (k < extra ? 1 : 0);
    p.supports.push_back({at, at + len});
    at += len;
  }
  const Thm41Result r = thm41_oracle(p);
  const double scale = 1.0 / std::sqrt(static_cast<double>(grid_n));
  return {r.err_single * scale, r.err_multi * scale};
}

inline WaveformResult waveform_experiment(std::uint64_t seed, Index grid_n, int degree, int adaptive_degree,
                                          Index pieces) {
  return waveform_experiment(standard_waveform(seed), grid_n, degree, adaptive_degree, pieces);
}

/// One random problem of the error-dominance fuzz suite: n distinct points
/// in [-1, 1] at least 1e-3 apart, Gaussian target, K in [2, 10], K' in [1, K], 1 to 4 disjoint
/// contiguous supports of more than K points each.
inline ApproxProblem random_thm41_problem(std::uint64_t seed, Index n = 64) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ApproxProblem p;
  std::vector<double> pts;
  while (static_cast<Index>(pts.size()) < n) {
    pts.push_back(unif(rng));
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end(), [](double a, double b) { return b - a < 1e-3; }), pts.end());
  }
  p.spectrum = Eigen::Map<Vector>(pts.data(), n);
  p.target.resize(n);
  for (Index i = 0; i < n; ++i) p.target[i] = gauss(rng);

  p.degree = std::uniform_int_distribution<int>(2, 10)(rng);
  p.adaptive_degree = std::uniform_int_distribution<int>(1, p.degree)(rng);
  const Index max_pieces = std::min<Index>(4, n / (p.degree + 1));
  const Index m = std::uniform_int_distribution<Index>(1, max_pieces)(rng);

  // Minimal sizes first, then spread the leftover points over the supports
  // and the gaps between them.
  std::vector<Index> sizes(static_cast<std::size_t>(m), p.degree + 1);
  std::vector<Index> gaps(static_cast<std::size_t>(m) + 1, 0);
  Index leftover = n - m * (p.degree + 1);
  std::uniform_int_distribution<Index> slot(0, 2 * m);
  while (leftover-- > 0) {
    const Index s = slot(rng);
    if (s < m) {
      ++sizes[static_cast<std::size_t>(s)];
    } else {
      ++gaps[static_cast<std::size_t>(s - m)];
    }
  }
  Index at = 0;
  for (Index k = 0; k < m; ++k) {
    at += gaps[static_cast<std::size_t>(k)];
    p.supports.push_back({at, at + sizes[static_cast<std::size_t>(k)]});
    at += sizes[static_cast<std::size_t>(k)];
  }
  return p;
}

struct Thm41SuiteReport {
  Index trials = 0;
  Index violations = 0;
  double max_gap = -std::numeric_limits<double>::infinity();  // max(err_multi - err_single)
  double max_decomposition_rel_err = 0.0;
  Index equal_degree_trials = 0;
};

inline Thm41SuiteReport run_thm41_suite(Index trials, std::uint64_t seed, double slack = 1e-9) {
  Thm41SuiteReport rep;
  for (Index t = 0; t < trials; ++t) {
    const ApproxProblem p = random_thm41_problem(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const Thm41Result r = thm41_oracle(p);
    ++rep.trials;
    const double gap = r.err_multi - r.err_single;
    rep.max_gap = std::max(rep.max_gap, gap);
    if (gap > slack) ++rep.violations;
    rep.max_decomposition_rel_err = std::max(rep.max_decomposition_rel_err, r.decomposition_rel_err);
    if (r.proof_case == ProofCase::equal_degree) ++rep.equal_degree_trials;
  }
  return rep;
}

struct DimensionCheck {
  int degree = 0;
  int adaptive_degree = 0;
  Index t = 0;
  Index n = 0;
  Index filter_rank = 0;
  Index graph_rank = 0;
  Index global_rank = 0;
  Index masked_rank = 0;
  bool passed = false;
};

/// Ranks of the filter family, its conjugated graph family, and the global /
/// masked parts alone, for a seeded random distinct spectrum.
inline DimensionCheck run_dimension_check(int degree, int adaptive_degree, Index t, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> pts;
  while (static_cast<Index>(pts.size()) < n) {
    pts.push_back(unif(rng));
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end(), [](double a, double b) { return b - a <= 1e-6; }), pts.end());
  }
  const Vector spectrum = Eigen::Map<Vector>(pts.data(), n);
  const FilterBasis basis = filter_basis(spectrum, degree, adaptive_degree, t);

  DimensionCheck c{degree, adaptive_degree, t, n};
  c.filter_rank = numerical_rank(basis.joint());
  c.graph_rank = graph_space_dim(basis.joint(), random_orthogonal(n, derive_seed(seed, 1)));
  c.global_rank = numerical_rank(basis.global);
  c.masked_rank = numerical_rank(basis.masked);
  const Index expected = degree + 2 * adaptive_degree + 3;
  c.passed = c.filter_rank == expected && c.graph_rank == expected && c.masked_rank == 2 * (adaptive_degree + 1) &&
             c.global_rank + c.masked_rank == c.filter_rank;
  return c;
}

}  // namespace ppgnn
