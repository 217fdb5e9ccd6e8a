#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ppgnn/graph.hpp"

namespace ppgnn::fixture {

inline Graph path_graph(Index n) {
  std::vector<Edge> e;
  for (Index i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  return build_graph(n, e);
}

inline Graph cycle_graph(Index n) {
  std::vector<Edge> e;
  for (Index i = 0; i < n; ++i) e.push_back({i, (i + 1) % n});
  return build_graph(n, e);
}

/// Random graph with about `avg_degree` neighbours per node; a spanning path
/// keeps it connected when `connected` is set.
inline Graph random_graph(Index n, double avg_degree, std::uint64_t seed, bool connected = true) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> node(0, n - 1);
  std::vector<Edge> e;
  if (connected) {
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index i = 0; i + 1 < n; ++i) e.push_back({perm[i], perm[i + 1]});
  }
  const auto target = static_cast<Index>(avg_degree * static_cast<double>(n) / 2.0);
  while (static_cast<Index>(e.size()) < target) e.push_back({node(rng), node(rng)});
  return build_graph(n, e);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("ppgnn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace ppgnn::fixture
