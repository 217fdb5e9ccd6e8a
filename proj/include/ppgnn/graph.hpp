#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppgnn/error.hpp"

namespace ppgnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = std::int64_t;

struct Edge {
  Index src = 0;
  Index dst = 0;
};

/// Undirected simple graph in compressed-sparse-row form.
///
/// Both orientations of every edge are stored, neighbour lists are sorted and
/// duplicate-free, and no self-loops are kept. Self-loops are reintroduced
/// uniformly by `sym_normalize`.
class Graph {
 public:
  Graph() = default;

  Index num_nodes() const noexcept { return n_; }
  /// Number of undirected edges (each stored pair counted once).
  Index num_edges() const noexcept { return static_cast<Index>(col_idx_.size()) / 2; }
  bool symmetric() const noexcept { return true; }

  std::span<const Index> row_ptr() const noexcept { return row_ptr_; }
  std::span<const Index> col_idx() const noexcept { return col_idx_; }

  std::span<const Index> neighbors(Index u) const noexcept {
    return {col_idx_.data() + row_ptr_[u], col_idx_.data() + row_ptr_[u + 1]};
  }
  Index degree(Index u) const noexcept { return row_ptr_[u + 1] - row_ptr_[u]; }

  bool has_edge(Index u, Index v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  /// Undirected edge list with src < dst, lexicographically ordered.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(static_cast<std::size_t>(num_edges()));
    for (Index u = 0; u < n_; ++u) {
      for (Index v : neighbors(u)) {
        if (u < v) out.push_back({u, v});
      }
    }
    return out;
  }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  friend Graph build_graph(Index n, std::span<const Edge> raw_edges);

  Index n_ = 0;
  std::vector<Index> row_ptr_{0};
  std::vector<Index> col_idx_;
};

/// Symmetrizes, deduplicates and drops self-loops.
inline Graph build_graph(Index n, std::span<const Edge> raw_edges) {
  if (n < 0) throw ValidationError("node count must be nonnegative");
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(raw_edges.size() * 2);
  for (const Edge& e : raw_edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) {
      throw ValidationError("index out of range: edge (" + std::to_string(e.src) + ", " +
                            std::to_string(e.dst) + ") with n=" + std::to_string(n));
    }
    if (e.src == e.dst) continue;
    pairs.emplace_back(e.src, e.dst);
    pairs.emplace_back(e.dst, e.src);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  Graph g;
  g.n_ = n;
  g.row_ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
  g.col_idx_.reserve(pairs.size());
  for (const auto& [u, v] : pairs) {
    ++g.row_ptr_[static_cast<std::size_t>(u) + 1];
    g.col_idx_.push_back(v);
  }
  for (Index u = 0; u < n; ++u) g.row_ptr_[u + 1] += g.row_ptr_[u];
  return g;
}

inline Graph build_graph(Index n, std::initializer_list<Edge> raw_edges) {
  return build_graph(n, std::span<const Edge>(raw_edges.begin(), raw_edges.size()));
}

/// Sparse symmetric operator D^{-1/2} (A + I) D^{-1/2}, CSR with sorted columns.
class NormalizedGraph {
 public:
  NormalizedGraph() = default;

  Index num_nodes() const noexcept { return n_; }
  std::span<const Index> row_ptr() const noexcept { return row_ptr_; }
  std::span<const Index> col_idx() const noexcept { return col_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Y = Ã X. Row-wise accumulation in stored column order; bit-reproducible.
  Matrix multiply(const Matrix& x) const {
    if (x.rows() != n_) {
      throw ValidationError("row-count mismatch: operator has " + std::to_string(n_) +
                            " rows, input has " + std::to_string(x.rows()));
    }
    Matrix y(n_, x.cols());
    for (Index c = 0; c < x.cols(); ++c) {
      const double* xc = x.col(c).data();
      double* yc = y.col(c).data();
      for (Index i = 0; i < n_; ++i) {
        double acc = 0.0;
        for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) acc += values_[p] * xc[col_idx_[p]];
        yc[i] = acc;
      }
    }
    return y;
  }

  Vector multiply(const Vector& x) const {
    Vector y(n_);
    multiply_into(x.data(), y.data());
    return y;
  }

  /// y = Ã x for raw length-n buffers.
  void multiply_into(const double* x, double* y) const {
    for (Index i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) acc += values_[p] * x[col_idx_[p]];
      y[i] = acc;
    }
  }

  Matrix to_dense() const {
    Matrix m = Matrix::Zero(n_, n_);
    for (Index i = 0; i < n_; ++i) {
      for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) m(i, col_idx_[p]) = values_[p];
    }
    return m;
  }

 private:
  friend NormalizedGraph sym_normalize(const Graph& g);

  Index n_ = 0;
  std::vector<Index> row_ptr_{0};
  std::vector<Index> col_idx_;
  std::vector<double> values_;
};

inline NormalizedGraph sym_normalize(const Graph& g) {
  const Index n = g.num_nodes();
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
  for (Index u = 0; u < n; ++u) inv_sqrt_deg[u] = 1.0 / std::sqrt(static_cast<double>(g.degree(u) + 1));

  NormalizedGraph ng;
  ng.n_ = n;
  ng.row_ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
  ng.col_idx_.reserve(static_cast<std::size_t>(2 * g.num_edges() + n));
  ng.values_.reserve(ng.col_idx_.capacity());
  for (Index u = 0; u < n; ++u) {
    bool diag_done = false;
    auto emit = [&](Index v) {
      ng.col_idx_.push_back(v);
      ng.values_.push_back(inv_sqrt_deg[u] * inv_sqrt_deg[v]);
    };
    for (Index v : g.neighbors(u)) {
      if (!diag_done && v > u) {
        emit(u);
        diag_done = true;
      }
      emit(v);
    }
    if (!diag_done) emit(u);
    ng.row_ptr_[u + 1] = static_cast<Index>(ng.col_idx_.size());
  }
  return ng;
}

/// Ã^j X by j successive sparse multiplies.
inline Matrix apply_power(const NormalizedGraph& ng, const Matrix& x, int j) {
  if (j < 0) throw ValidationError("power must be nonnegative");
  if (x.rows() != ng.num_nodes()) {
    throw ValidationError("row-count mismatch: operator has " + std::to_string(ng.num_nodes()) +
                          " rows, input has " + std::to_string(x.rows()));
  }
  Matrix y = x;
  for (int k = 0; k < j; ++k) y = ng.multiply(y);
  return y;
}

namespace detail {
inline void check_labels(const Graph& g, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != g.num_nodes()) {
    throw ValidationError("labels length " + std::to_string(labels.size()) + " != node count " +
                          std::to_string(g.num_nodes()));
  }
}
}  // namespace detail

/// Number of undirected edges whose endpoints share a label.
inline Index count_homophilous_edges(const Graph& g, std::span<const int> labels) {
  detail::check_labels(g, labels);
  Index same = 0;
  for (Index u = 0; u < g.num_nodes(); ++u) {
    for (Index v : g.neighbors(u)) {
      if (u < v && labels[u] == labels[v]) ++same;
    }
  }
  return same;
}

/// Fraction of undirected edges joining same-label endpoints.
inline double edge_homophily(const Graph& g, std::span<const int> labels) {
  detail::check_labels(g, labels);
  if (g.num_edges() == 0) throw ValidationError("no edges");
  return static_cast<double>(count_homophilous_edges(g, labels)) / static_cast<double>(g.num_edges());
}

inline double edge_heterophily(const Graph& g, std::span<const int> labels) {
  detail::check_labels(g, labels);
  if (g.num_edges() == 0) throw ValidationError("no edges");
  const Index differing = g.num_edges() - count_homophilous_edges(g, labels);
  return static_cast<double>(differing) / static_cast<double>(g.num_edges());
}

/// Mean Euclidean distance over all unordered pairs of rows.
inline double pairwise_distance_mean(const Matrix& x) {
  const Index n = x.rows();
  if (n < 2) throw ValidationError("pairwise distance needs at least 2 rows");
  // Row-major copy keeps the O(n^2 d) inner loop contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = x;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) total += (r.row(i) - r.row(j)).norm();
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return total / pairs;
}

/// Mean over columns of the population variance of each column.
inline double feature_variance_mean(const Matrix& x) {
  if (x.rows() < 2) throw ValidationError("variance needs at least 2 rows");
  if (x.cols() == 0) throw ValidationError("variance needs at least 1 column");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().mean();
  return var.mean();
}

/// Labeled node-classification problem.
struct Dataset {
  Graph graph;
  Matrix features;  // n x d
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;

  Index num_nodes() const noexcept { return graph.num_nodes(); }

  /// Throws ValidationError on any shape, label or split inconsistency.
  void validate() const {
    const Index n = graph.num_nodes();
    if (features.rows() != n) {
      throw ValidationError("features have " + std::to_string(features.rows()) + " rows, expected " +
                            std::to_string(n));
    }
    if (static_cast<Index>(labels.size()) != n) {
      throw ValidationError("labels have " + std::to_string(labels.size()) + " entries, expected " +
                            std::to_string(n));
    }
    if (num_classes < 2) throw ValidationError("need at least 2 classes");
    for (Index i = 0; i < n; ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes) {
        throw ValidationError("label " + std::to_string(labels[i]) + " of node " + std::to_string(i) +
                              " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    auto mark = [&](const std::vector<Index>& split, const char* name) {
      for (Index v : split) {
        if (v < 0 || v >= n) {
          throw ValidationError(std::string("split ") + name + " has out-of-range index " + std::to_string(v));
        }
        if (seen[v]) {
          throw ValidationError(std::string("split ") + name + " repeats or overlaps at index " +
                                std::to_string(v));
        }
        seen[v] = 1;
      }
    };
    mark(train, "train");
    mark(val, "val");
    mark(test, "test");
  }
};

}  // namespace ppgnn
