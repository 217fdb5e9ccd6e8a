#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "ppgnn/graph.hpp"

namespace ppgnn {

struct CsbmParams {
  Index n = 300;
  int num_classes = 2;
  double p_in = 0.05;
  double p_out = 0.01;
  Index feat_dim = 8;
  double class_separation = 1.0;
  std::uint64_t seed = 0;
};

/// Contextual stochastic block model: Bernoulli edges with class-dependent
/// probabilities and Gaussian features around class means that sit at
/// pairwise distance `class_separation`.
///
/// Classes are balanced (node i belongs to class i mod C before a seeded
/// shuffle). Splits are 48/32/20 percent of a seeded permutation.
inline Dataset synth_csbm(const CsbmParams& p) {
  if (!(p.p_in >= 0.0 && p.p_in <= 1.0) || !(p.p_out >= 0.0 && p.p_out <= 1.0)) {
    throw ValidationError("edge probabilities must lie in [0, 1]");
  }
  if (p.num_classes < 2) throw ValidationError("need at least 2 classes");
  if (p.n < p.num_classes) throw ValidationError("need n >= number of classes");
  if (p.feat_dim < 1) throw ValidationError("feature dimension must be positive");

  std::mt19937_64 rng(p.seed);
  const Index n = p.n;

  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[i] = static_cast<int>(i % p.num_classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (Index u = 0; u < n; ++u) {
    for (Index v = u + 1; v < n; ++v) {
      const double prob = labels[u] == labels[v] ? p.p_in : p.p_out;
      // Draw unconditionally so the stream does not depend on the probabilities.
      const double r = unif(rng);
      if (r < prob) edges.push_back({u, v});
    }
  }

  // Class c is centred on scale * e_(c mod d); for d >= C the means are
  // pairwise class_separation apart.
  const double scale = p.class_separation / std::sqrt(2.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix x(n, p.feat_dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p.feat_dim; ++j) x(i, j) = gauss(rng);
    x(i, labels[i] % p.feat_dim) += scale;
  }

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<Index>(std::floor(0.48 * static_cast<double>(n)));
  const auto n_val = static_cast<Index>(std::floor(0.32 * static_cast<double>(n)));

  Dataset ds;
  ds.graph = build_graph(n, edges);
  ds.features = std::move(x);
  ds.labels = std::move(labels);
  ds.num_classes = p.num_classes;
  ds.train.assign(perm.begin(), perm.begin() + n_train);
  ds.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  ds.test.assign(perm.begin() + n_train + n_val, perm.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.val.begin(), ds.val.end());
  std::sort(ds.test.begin(), ds.test.end());
  return ds;
}

}  // namespace ppgnn
