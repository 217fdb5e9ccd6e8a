#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ppgnn/graph.hpp"

namespace ppgnn {

/// Eigenpairs of a symmetric operator, eigenvalues ascending.
///
/// An extreme system stores `bottom_count` pairs from the low end of the
/// spectrum followed by `top_count` pairs from the high end. A complete
/// system holds all `source_n` pairs; `dense_eigh` splits it at the median
/// index (bottom_count = n / 2).
struct EigenSystem {
  Vector eigenvalues;
  Matrix eigenvectors;  // source_n x size(), column j pairs with eigenvalues[j]
  Index bottom_count = 0;
  Index top_count = 0;
  bool complete = false;
  Index source_n = 0;

  Index size() const noexcept { return eigenvalues.size(); }
};

enum class SpectrumEnd { bottom, top };

namespace detail {

// Largest-magnitude component made positive (first such index on ties).
inline void fix_sign(Eigen::Ref<Vector> v) {
  Index best = 0;
  double mag = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > mag) {
      mag = std::abs(v[i]);
      best = i;
    }
  }
  if (v.size() > 0 && v[best] < 0.0) v = -v;
}

inline double max_abs_asymmetry(const Matrix& m) {
  double worst = 0.0;
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = j + 1; i < m.rows(); ++i) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
  }
  return worst;
}

}  // namespace detail

/// Full spectrum of a symmetric matrix by cyclic Jacobi rotations.
inline EigenSystem dense_eigh(const Matrix& m, Index cap = 4096) {
  if (m.rows() != m.cols()) throw ValidationError("dense_eigh needs a square matrix");
  const Index n = m.rows();
  if (n > cap) {
    throw ValidationError("dense_eigh dimension " + std::to_string(n) + " exceeds cap " + std::to_string(cap));
  }
  if (detail::max_abs_asymmetry(m) > 1e-10) throw ValidationError("dense_eigh input is not symmetric");

  Matrix a = 0.5 * (m + m.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double fro = a.norm();
  const double target = 1e-12 * fro;

  auto off_norm = [&] {
    double s = 0.0;
    for (Index j = 0; j < n; ++j) {
      for (Index i = j + 1; i < n; ++i) s += 2.0 * a(i, j) * a(i, j);
    }
    return std::sqrt(s);
  };

  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  for (; sweep < kMaxSweeps && off_norm() > target; ++sweep) {
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = tau >= 0.0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                    : -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // Symmetry is maintained explicitly: only columns p, q are rotated
        // and mirrored into rows p, q.
        double* colp = a.col(p).data();
        double* colq = a.col(q).data();
        for (Index k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = colp[k];
          const double akq = colq[k];
          colp[k] = c * akp - s * akq;
          colq[k] = s * akp + c * akq;
          a(p, k) = colp[k];
          a(q, k) = colq[k];
        }
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off_norm() > target) throw ConvergenceError("Jacobi iteration did not converge in 100 sweeps");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) < a(j, j); });

  EigenSystem es;
  es.eigenvalues.resize(n);
  es.eigenvectors.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    es.eigenvalues[j] = a(order[j], order[j]);
    es.eigenvectors.col(j) = v.col(order[j]);
    detail::fix_sign(es.eigenvectors.col(j));
  }
  es.bottom_count = n / 2;
  es.top_count = n - n / 2;
  es.complete = true;
  es.source_n = n;
  return es;
}

/// The `count` most extreme pairs at one end, order preserved.
inline EigenSystem select_band(const EigenSystem& es, SpectrumEnd which, Index count) {
  const Index available = es.complete ? es.size() : (which == SpectrumEnd::bottom ? es.bottom_count : es.top_count);
  if (count < 0 || count > available) {
    throw ValidationError("requested " + std::to_string(count) + " pairs from the " +
                          (which == SpectrumEnd::bottom ? "bottom" : "top") + " end but only " +
                          std::to_string(available) + " are stored");
  }
  const Index first = which == SpectrumEnd::bottom ? 0 : es.size() - count;
  EigenSystem out;
  out.eigenvalues = es.eigenvalues.segment(first, count);
  out.eigenvectors = es.eigenvectors.middleCols(first, count);
  out.bottom_count = which == SpectrumEnd::bottom ? count : 0;
  out.top_count = which == SpectrumEnd::top ? count : 0;
  out.source_n = es.source_n;
  out.complete = es.source_n > 0 && count == es.source_n;
  return out;
}

/// Joins a bottom band and a top band into one extreme system.
inline EigenSystem join_bands(const EigenSystem& bottom, const EigenSystem& top) {
  if (bottom.source_n != top.source_n && bottom.size() > 0 && top.size() > 0) {
    throw ValidationError("bands come from operators of different dimension");
  }
  if (bottom.size() > 0 && top.size() > 0 && bottom.eigenvalues.maxCoeff() > top.eigenvalues.minCoeff()) {
    throw ValidationError("bottom band overlaps top band");
  }
  EigenSystem out;
  out.source_n = std::max(bottom.source_n, top.source_n);
  out.bottom_count = bottom.size();
  out.top_count = top.size();
  out.eigenvalues.resize(bottom.size() + top.size());
  out.eigenvalues << bottom.eigenvalues, top.eigenvalues;
  out.eigenvectors.resize(out.source_n, bottom.size() + top.size());
  if (bottom.size() > 0) out.eigenvectors.leftCols(bottom.size()) = bottom.eigenvectors;
  if (top.size() > 0) out.eigenvectors.rightCols(top.size()) = top.eigenvectors;
  out.complete = out.size() == out.source_n;
  return out;
}

/// Bottom `k_low` and top `k_high` pairs of a complete system.
inline EigenSystem extreme_bands(const EigenSystem& es, Index k_low, Index k_high) {
  if (k_low + k_high > es.size()) throw ValidationError("k_low + k_high exceeds stored pairs");
  return join_bands(select_band(es, SpectrumEnd::bottom, k_low), select_band(es, SpectrumEnd::top, k_high));
}

/// max_j ||A u_j - lambda_j u_j||_2.
inline double max_residual(const NormalizedGraph& ng, const EigenSystem& es) {
  double worst = 0.0;
  Vector au(ng.num_nodes());
  for (Index j = 0; j < es.size(); ++j) {
    ng.multiply_into(es.eigenvectors.col(j).data(), au.data());
    worst = std::max(worst, (au - es.eigenvalues[j] * es.eigenvectors.col(j)).norm());
  }
  return worst;
}

inline double max_residual(const Matrix& m, const EigenSystem& es) {
  double worst = 0.0;
  for (Index j = 0; j < es.size(); ++j) {
    worst = std::max(worst, (m * es.eigenvectors.col(j) - es.eigenvalues[j] * es.eigenvectors.col(j)).norm());
  }
  return worst;
}

/// max |U^T U - I|.
inline double orthogonality_error(const EigenSystem& es) {
  const Matrix gram = es.eigenvectors.transpose() * es.eigenvectors;
  return (gram - Matrix::Identity(es.size(), es.size())).cwiseAbs().maxCoeff();
}

namespace detail {

struct RitzPair {
  double value;
  Vector vector;
};

}  // namespace detail

/// Bottom `k_low` and top `k_high` eigenpairs of Ã by Lanczos iteration.
///
/// The Krylov basis is fully reorthogonalized (twice per step). Converged
/// pairs are locked and later passes restart from a fresh seeded vector in
/// their orthogonal complement; each end finishes only once a deflated pass
/// finds no remaining eigenvalue beyond the locked ones, which recovers
/// repeated eigenvalues a single Krylov sequence cannot see.
///
/// `max_iter` bounds the total number of operator applications (0 selects
/// 20 n). Throws ConvergenceError carrying the achieved residual estimates.
inline EigenSystem lanczos_extreme(const NormalizedGraph& ng, Index k_low, Index k_high, double tol,
                                   Index max_iter, std::uint64_t seed) {
  const Index n = ng.num_nodes();
  if (k_low < 0 || k_high < 0) throw ValidationError("band sizes must be nonnegative");
  if (k_low + k_high > n) {
    throw ValidationError("k_low + k_high = " + std::to_string(k_low + k_high) + " exceeds n = " + std::to_string(n));
  }
  if (!(tol > 0.0)) throw ValidationError("tolerance must be positive");
  if (max_iter <= 0) max_iter = 20 * std::max<Index>(n, 1);

  EigenSystem out;
  out.source_n = n;
  if (k_low + k_high == 0) {
    out.eigenvectors.resize(n, 0);
    return out;
  }

  const double conv_tol = 0.1 * tol;
  const double breakdown = 1e-12;

  std::vector<detail::RitzPair> top_pool;
  std::vector<detail::RitzPair> bottom_pool;
  Matrix locked(n, 0);
  bool top_done = k_high == 0;
  bool bottom_done = k_low == 0;
  Index matvecs = 0;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto kth_largest = [](std::vector<detail::RitzPair>& pool, Index k) {
    std::vector<double> vals;
    for (const auto& p : pool) vals.push_back(p.value);
    std::sort(vals.begin(), vals.end(), std::greater<>());
    return vals[static_cast<std::size_t>(k - 1)];
  };
  auto kth_smallest = [](std::vector<detail::RitzPair>& pool, Index k) {
    std::vector<double> vals;
    for (const auto& p : pool) vals.push_back(p.value);
    std::sort(vals.begin(), vals.end());
    return vals[static_cast<std::size_t>(k - 1)];
  };
  auto orthogonalize = [&](Vector& w, const Matrix& basis, Index cols) {
    for (int twice = 0; twice < 2; ++twice) {
      if (cols > 0) w -= basis.leftCols(cols) * (basis.leftCols(cols).transpose() * w);
      if (locked.cols() > 0) w -= locked * (locked.transpose() * w);
    }
  };

  while (!(top_done && bottom_done)) {
    const Index free_dim = n - locked.cols();
    if (free_dim == 0) break;

    const Index need_top = std::max<Index>(k_high - static_cast<Index>(top_pool.size()), 0);
    const Index need_bottom = std::max<Index>(k_low - static_cast<Index>(bottom_pool.size()), 0);
    const Index want_top_raw = top_done ? 0 : std::max<Index>(need_top, 1);
    const Index want_bottom_raw = bottom_done ? 0 : std::max<Index>(need_bottom, 1);

    Matrix q(n, std::min(free_dim, 2 * (want_top_raw + want_bottom_raw) + 32));
    std::vector<double> alpha;
    std::vector<double> beta;

    Vector v(n);
    for (int attempt = 0;; ++attempt) {
      for (Index i = 0; i < n; ++i) v[i] = gauss(rng);
      orthogonalize(v, q, 0);
      if (v.norm() > 1e-8) break;
      if (attempt > 10) throw ConvergenceError("could not draw a start vector outside the locked subspace");
    }
    q.col(0) = v / v.norm();

    Vector w(n);
    Eigen::SelfAdjointEigenSolver<Matrix> ritz;
    Vector estimates;
    Index dim = 0;
    Index want_top = 0;
    Index want_bottom = 0;
    for (Index m = 0;; ++m) {
      ng.multiply_into(q.col(m).data(), w.data());
      ++matvecs;
      alpha.push_back(q.col(m).dot(w));
      w -= alpha.back() * q.col(m);
      if (m > 0) w -= beta.back() * q.col(m - 1);
      orthogonalize(w, q, m + 1);
      const double b = w.norm();
      dim = m + 1;

      const bool invariant = b < breakdown || dim == free_dim;
      want_top = std::min(want_top_raw, dim);
      want_bottom = std::min(want_bottom_raw, dim - want_top);
      const bool enough = dim >= want_top_raw + want_bottom_raw;
      if (invariant || (enough && (dim % 5 == 0 || matvecs >= max_iter))) {
        Vector diag = Eigen::Map<Vector>(alpha.data(), dim);
        Vector sub = dim > 1 ? Vector(Eigen::Map<Vector>(beta.data(), dim - 1)) : Vector(0);
        ritz.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
        estimates = (b * ritz.eigenvectors().row(dim - 1)).cwiseAbs().transpose();
        bool converged = true;
        for (Index j = 0; j < want_top; ++j) converged = converged && estimates[dim - 1 - j] <= conv_tol;
        for (Index j = 0; j < want_bottom; ++j) converged = converged && estimates[j] <= conv_tol;
        if (converged || invariant) break;
      }
      if (matvecs >= max_iter) {
        std::ostringstream msg;
        msg << "Lanczos did not converge within " << max_iter << " operator applications; residual estimates:";
        if (estimates.size() > 0) {
          for (Index j = 0; j < want_bottom; ++j) msg << ' ' << estimates[j];
          for (Index j = 0; j < want_top; ++j) msg << ' ' << estimates[estimates.size() - 1 - j];
        } else {
          msg << " (none computed)";
        }
        throw ConvergenceError(msg.str());
      }
      beta.push_back(b);
      if (m + 1 >= q.cols()) q.conservativeResize(n, std::min(free_dim, 2 * q.cols()));
      q.col(m + 1) = w / b;
    }

    auto ritz_pair = [&](Index j) {
      Vector y = q.leftCols(dim) * ritz.eigenvectors().col(j);
      y /= y.norm();
      return detail::RitzPair{ritz.eigenvalues()[j], std::move(y)};
    };

    std::vector<detail::RitzPair> fresh;
    // Top end: lock up to need_top converged pairs, or confirm the pool.
    if (want_top > 0) {
      if (need_top > 0) {
        for (Index j = 0; j < std::min(need_top, want_top); ++j) {
          const Index idx = dim - 1 - j;
          if (estimates[idx] > conv_tol) break;
          auto p = ritz_pair(idx);
          top_pool.push_back(p);
          fresh.push_back(std::move(p));
        }
      } else if (estimates[dim - 1] <= conv_tol) {
        const double theta = ritz.eigenvalues()[dim - 1];
        if (theta > kth_largest(top_pool, k_high) + tol) {
          auto p = ritz_pair(dim - 1);
          top_pool.push_back(p);
          fresh.push_back(std::move(p));
        } else {
          top_done = true;
        }
      }
    }
    if (want_bottom > 0) {
      if (need_bottom > 0) {
        for (Index j = 0; j < std::min(need_bottom, want_bottom); ++j) {
          if (estimates[j] > conv_tol) break;
          auto p = ritz_pair(j);
          bottom_pool.push_back(p);
          fresh.push_back(std::move(p));
        }
      } else if (estimates[0] <= conv_tol) {
        const double theta = ritz.eigenvalues()[0];
        if (theta < kth_smallest(bottom_pool, k_low) - tol) {
          auto p = ritz_pair(0);
          bottom_pool.push_back(p);
          fresh.push_back(std::move(p));
        } else {
          bottom_done = true;
        }
      }
    }
    if (fresh.empty() && !(top_done && bottom_done) && matvecs >= max_iter) {
      throw ConvergenceError("Lanczos made no progress within the operator-application budget");
    }
    const Index old = locked.cols();
    locked.conservativeResize(n, old + static_cast<Index>(fresh.size()));
    for (std::size_t i = 0; i < fresh.size(); ++i) locked.col(old + static_cast<Index>(i)) = fresh[i].vector;
  }

  auto by_value = [](const detail::RitzPair& a, const detail::RitzPair& b) { return a.value < b.value; };
  std::stable_sort(bottom_pool.begin(), bottom_pool.end(), by_value);
  std::stable_sort(top_pool.begin(), top_pool.end(), by_value);
  if (static_cast<Index>(bottom_pool.size()) < k_low || static_cast<Index>(top_pool.size()) < k_high) {
    throw ConvergenceError("Lanczos exhausted the space before filling the requested bands");
  }

  out.bottom_count = k_low;
  out.top_count = k_high;
  out.eigenvalues.resize(k_low + k_high);
  out.eigenvectors.resize(n, k_low + k_high);
  for (Index j = 0; j < k_low; ++j) {
    out.eigenvalues[j] = bottom_pool[j].value;
    out.eigenvectors.col(j) = bottom_pool[j].vector;
  }
  const Index skip = static_cast<Index>(top_pool.size()) - k_high;
  for (Index j = 0; j < k_high; ++j) {
    out.eigenvalues[k_low + j] = top_pool[skip + j].value;
    out.eigenvectors.col(k_low + j) = top_pool[skip + j].vector;
  }
  for (Index j = 0; j < out.size(); ++j) detail::fix_sign(out.eigenvectors.col(j));
  out.complete = out.size() == n;

  const double worst = max_residual(ng, out);
  if (worst > tol) {
    std::ostringstream msg;
    msg << "Lanczos residual " << worst << " exceeds tolerance " << tol;
    throw ConvergenceError(msg.str());
  }
  return out;
}

}  // namespace ppgnn
