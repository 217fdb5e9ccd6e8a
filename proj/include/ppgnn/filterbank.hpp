#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ppgnn/spectral.hpp"

namespace ppgnn {

/// Contiguous run of eigenpairs [begin, end) inside an EigenSystem, with the
/// smallest and largest eigenvalue it holds.
struct Bin {
  Index begin = 0;
  Index end = 0;
  double lam_min = 0.0;
  double lam_max = 0.0;

  Index size() const noexcept { return end - begin; }
  bool contains(Index j) const noexcept { return j >= begin && j < end; }
  friend bool operator==(const Bin&, const Bin&) = default;
};

/// Bins over the two extreme bands, each ordered by ascending eigenvalue.
///
/// Low frequencies of Ã sit at the top of its spectrum (eigenvalue 1 carries
/// the smoothest signal), so `low_bins` cover the top band of the
/// EigenSystem and `high_bins` cover the bottom band.
struct PartitionSpec {
  std::vector<Bin> low_bins;
  std::vector<Bin> high_bins;

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

namespace detail {

inline std::vector<Bin> equal_count_bins(const EigenSystem& es, Index first, Index count, Index bins,
                                         const char* band) {
  if (bins < 0) throw ValidationError(std::string(band) + " bin count must be nonnegative");
  if (bins > count) {
    throw ValidationError("cannot split " + std::to_string(count) + " " + band + "-frequency eigenvalues into " +
                          std::to_string(bins) + " bins");
  }
  std::vector<Bin> out;
  if (bins == 0) return out;
  const Index base = count / bins;
  const Index extra = count % bins;
  Index at = first;
  for (Index b = 0; b < bins; ++b) {
    const Index len = base + (b < extra ? 1 : 0);
    out.push_back({at, at + len, es.eigenvalues[at], es.eigenvalues[at + len - 1]});
    at += len;
  }
  return out;
}

}  // namespace detail

/// Equal-count contiguous bins over each band; the remainder goes to the
/// first (lowest-eigenvalue) bins.
inline PartitionSpec make_partitions(const EigenSystem& es, Index m_low, Index m_high) {
  PartitionSpec spec;
  spec.low_bins = detail::equal_count_bins(es, es.bottom_count, es.top_count, m_low, "low");
  spec.high_bins = detail::equal_count_bins(es, 0, es.bottom_count, m_high, "high");
  return spec;
}

/// Horner evaluation of sum_p coeffs[p] * lam^p.
inline double eval_piece(const Vector& coeffs, double lam) {
  double acc = 0.0;
  for (Index p = coeffs.size() - 1; p >= 0; --p) acc = acc * lam + coeffs[p];
  return acc;
}

struct FilterBank {
  PartitionSpec partition;
  std::vector<Vector> low_coeffs;   // one per low bin
  std::vector<Vector> high_coeffs;  // one per high bin
  Vector gpr_coeffs;                // degree K global polynomial
  double eta_low = 0.0;
  double eta_high = 0.0;
  double eta_gpr = 1.0;

  /// Throws ValidationError if coefficient counts or values are inconsistent.
  void validate() const {
    if (low_coeffs.size() != partition.low_bins.size() || high_coeffs.size() != partition.high_bins.size()) {
      throw ValidationError("coefficient vectors do not match the number of bins");
    }
    auto finite = [](const Vector& v) { return v.allFinite(); };
    for (const auto& c : low_coeffs) {
      if (c.size() == 0 || !finite(c)) throw ValidationError("low-frequency piece has empty or non-finite coefficients");
    }
    for (const auto& c : high_coeffs) {
      if (c.size() == 0 || !finite(c)) throw ValidationError("high-frequency piece has empty or non-finite coefficients");
    }
    if (gpr_coeffs.size() == 0 || !finite(gpr_coeffs)) throw ValidationError("global polynomial is empty or non-finite");
    if (!std::isfinite(eta_low) || !std::isfinite(eta_high) || !std::isfinite(eta_gpr)) {
      throw ValidationError("mixing weights must be finite");
    }
  }

  /// Highest eigen-index referenced by the partition, plus one.
  Index span_end() const noexcept {
    Index end = 0;
    for (const auto& b : partition.low_bins) end = std::max(end, b.end);
    for (const auto& b : partition.high_bins) end = std::max(end, b.end);
    return end;
  }
};

/// Filter bank with zeroed pieces of the given orders on every bin.
inline FilterBank make_filter_bank(PartitionSpec partition, int order_low, int order_high, Vector gpr_coeffs,
                                   double eta_low, double eta_high, double eta_gpr) {
  if (order_low < 0 || order_high < 0) throw ValidationError("polynomial orders must be nonnegative");
  FilterBank fb;
  fb.low_coeffs.assign(partition.low_bins.size(), Vector::Zero(order_low + 1));
  fb.high_coeffs.assign(partition.high_bins.size(), Vector::Zero(order_high + 1));
  fb.partition = std::move(partition);
  fb.gpr_coeffs = std::move(gpr_coeffs);
  fb.eta_low = eta_low;
  fb.eta_high = eta_high;
  fb.eta_gpr = eta_gpr;
  fb.validate();
  return fb;
}

/// Per-eigenpair adaptive gain: eta_low / eta_high times the piece of the
/// bin holding the pair, zero outside every bin. Excludes the global term.
inline Vector adaptive_response(const FilterBank& fb, const EigenSystem& es) {
  if (fb.span_end() > es.size()) {
    throw ValidationError("partition references eigenpair " + std::to_string(fb.span_end() - 1) +
                          " but the eigensystem holds " + std::to_string(es.size()));
  }
  Vector r = Vector::Zero(es.size());
  for (std::size_t b = 0; b < fb.partition.low_bins.size(); ++b) {
    const Bin& bin = fb.partition.low_bins[b];
    for (Index j = bin.begin; j < bin.end; ++j) r[j] += fb.eta_low * eval_piece(fb.low_coeffs[b], es.eigenvalues[j]);
  }
  for (std::size_t b = 0; b < fb.partition.high_bins.size(); ++b) {
    const Bin& bin = fb.partition.high_bins[b];
    for (Index j = bin.begin; j < bin.end; ++j) r[j] += fb.eta_high * eval_piece(fb.high_coeffs[b], es.eigenvalues[j]);
  }
  return r;
}

/// Total frequency response h(lambda_j) at every stored eigenvalue.
inline Vector freq_response(const FilterBank& fb, const EigenSystem& es) {
  Vector r = adaptive_response(fb, es);
  for (Index j = 0; j < es.size(); ++j) r[j] += fb.eta_gpr * eval_piece(fb.gpr_coeffs, es.eigenvalues[j]);
  return r;
}

/// Knot-mismatch penalty over consecutive bins, within each band separately:
/// sum_i exp(-(max_i - min_{i+1})^2) (h_i(max_i) - h_{i+1}(min_{i+1}))^2.
inline double boundary_penalty(const FilterBank& fb) {
  auto band = [](const std::vector<Bin>& bins, const std::vector<Vector>& coeffs) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < bins.size(); ++i) {
      const double left = bins[i].lam_max;
      const double right = bins[i + 1].lam_min;
      const double gap = left - right;
      const double diff = eval_piece(coeffs[i], left) - eval_piece(coeffs[i + 1], right);
      total += std::exp(-gap * gap) * diff * diff;
    }
    return total;
  };
  return band(fb.partition.low_bins, fb.low_coeffs) + band(fb.partition.high_bins, fb.high_coeffs);
}

struct PieceGradients {
  std::vector<Vector> low;
  std::vector<Vector> high;
};

/// Gradient of boundary_penalty with respect to every piece coefficient.
inline PieceGradients boundary_penalty_grad(const FilterBank& fb) {
  auto band = [](const std::vector<Bin>& bins, const std::vector<Vector>& coeffs) {
    std::vector<Vector> g;
    for (const auto& c : coeffs) g.push_back(Vector::Zero(c.size()));
    for (std::size_t i = 0; i + 1 < bins.size(); ++i) {
      const double left = bins[i].lam_max;
      const double right = bins[i + 1].lam_min;
      const double gap = left - right;
      const double scale = 2.0 * std::exp(-gap * gap) *
                           (eval_piece(coeffs[i], left) - eval_piece(coeffs[i + 1], right));
      double pw = 1.0;
      for (Index p = 0; p < coeffs[i].size(); ++p, pw *= left) g[i][p] += scale * pw;
      pw = 1.0;
      for (Index p = 0; p < coeffs[i + 1].size(); ++p, pw *= right) g[i + 1][p] -= scale * pw;
    }
    return g;
  };
  return {band(fb.partition.low_bins, fb.low_coeffs), band(fb.partition.high_bins, fb.high_coeffs)};
}

enum class InitScheme { ppr, nppr, random };

inline InitScheme parse_init_scheme(const std::string& s) {
  if (s == "ppr") return InitScheme::ppr;
  if (s == "nppr") return InitScheme::nppr;
  if (s == "random") return InitScheme::random;
  throw ValidationError("unknown init scheme '" + s + "' (expected ppr, nppr or random)");
}

inline const char* to_string(InitScheme s) {
  switch (s) {
    case InitScheme::ppr: return "ppr";
    case InitScheme::nppr: return "nppr";
    case InitScheme::random: return "random";
  }
  return "?";
}

/// Initial global-polynomial coefficients gamma_0..gamma_K.
///
/// PPR: alpha (1-alpha)^k for k < K and (1-alpha)^K last, summing to one.
/// NPPR: (-alpha)^k scaled to unit 1-norm. Random: uniform in [-1, 1]
/// scaled to unit 1-norm.
inline Vector gpr_init(InitScheme scheme, double alpha, int order, std::uint64_t seed) {
  if (order < 0) throw ValidationError("polynomial order must be nonnegative");
  if (scheme != InitScheme::random && !(alpha > 0.0 && alpha < 1.0)) {
    throw ValidationError("alpha must lie in (0, 1)");
  }
  Vector g(order + 1);
  switch (scheme) {
    case InitScheme::ppr:
      for (int k = 0; k < order; ++k) g[k] = alpha * std::pow(1.0 - alpha, k);
      g[order] = std::pow(1.0 - alpha, order);
      break;
    case InitScheme::nppr:
      for (int k = 0; k <= order; ++k) g[k] = std::pow(-alpha, k);
      g /= g.lpNorm<1>();
      break;
    case InitScheme::random: {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      for (int k = 0; k <= order; ++k) g[k] = unif(rng);
      g /= g.lpNorm<1>();
      break;
    }
  }
  return g;
}

}  // namespace ppgnn
