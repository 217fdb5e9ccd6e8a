#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ppgnn/filterbank.hpp"

namespace ppgnn {

/// Feature width, hidden width and class count. hidden == 0 selects a
/// single linear layer in place of the two-layer MLP.
struct ModelDims {
  Index in = 0;
  Index hidden = 0;
  Index classes = 0;

  bool linear() const noexcept { return hidden == 0; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// MLP weights plus the spectral filter bank.
struct ModelParams {
  ModelDims dims;
  Matrix w1;  // in x hidden (in x classes when linear)
  Vector b1;
  Matrix w2;  // hidden x classes, empty when linear
  Vector b2;
  FilterBank filter;

  void validate() const {
    const Index first_out = dims.linear() ? dims.classes : dims.hidden;
    if (w1.rows() != dims.in || w1.cols() != first_out || b1.size() != first_out) {
      throw ValidationError("first layer shape does not match dims");
    }
    if (!dims.linear() && (w2.rows() != dims.hidden || w2.cols() != dims.classes || b2.size() != dims.classes)) {
      throw ValidationError("second layer shape does not match dims");
    }
    if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
      throw ValidationError("non-finite MLP parameter");
    }
    filter.validate();
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
inline ModelParams init_params(const ModelDims& dims, FilterBank filter, std::uint64_t seed) {
  if (dims.in < 1 || dims.classes < 2 || dims.hidden < 0) throw ValidationError("invalid model dimensions");
  std::mt19937_64 rng(seed);
  auto fill = [&](Index rows, Index cols, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> unif(-bound, bound);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) m(i, j) = unif(rng);
    }
    return m;
  };
  ModelParams p;
  p.dims = dims;
  if (dims.linear()) {
    p.w1 = fill(dims.in, dims.classes, dims.in);
    p.b1 = fill(dims.classes, 1, dims.in);
    p.w2.resize(0, 0);
    p.b2.resize(0);
  } else {
    p.w1 = fill(dims.in, dims.hidden, dims.in);
    p.b1 = fill(dims.hidden, 1, dims.in);
    p.w2 = fill(dims.hidden, dims.classes, dims.hidden);
    p.b2 = fill(dims.classes, 1, dims.hidden);
  }
  p.filter = std::move(filter);
  p.validate();
  return p;
}

/// Every trainable array, in a fixed order: w1, b1, w2, b2, low pieces,
/// high pieces, global polynomial.
inline std::vector<std::span<double>> trainable_blocks(ModelParams& p) {
  std::vector<std::span<double>> out;
  auto add = [&](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  add(p.w1);
  add(p.b1);
  add(p.w2);
  add(p.b2);
  for (auto& c : p.filter.low_coeffs) add(c);
  for (auto& c : p.filter.high_coeffs) add(c);
  add(p.filter.gpr_coeffs);
  return out;
}

inline std::vector<std::span<const double>> trainable_blocks(const ModelParams& p) {
  std::vector<std::span<const double>> out;
  for (auto s : trainable_blocks(const_cast<ModelParams&>(p))) out.emplace_back(s.data(), s.size());
  return out;
}

/// Same shapes as `p`, all zero.
inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto block : trainable_blocks(z)) std::fill(block.begin(), block.end(), 0.0);
  return z;
}

enum class Mode { train, eval };

struct ForwardOptions {
  Mode mode = Mode::eval;
  double dropout = 0.0;
  std::uint64_t seed = 0;
};

/// Intermediates of one forward pass, enough for exact gradients.
struct ForwardTrace {
  Mode mode = Mode::eval;
  Matrix pre;      // X W1 + b1
  Matrix mask;     // inverted-dropout scale per hidden unit (all ones in eval)
  Matrix hidden;   // relu(pre) .* mask
  Matrix z0;       // MLP output, n x C
  Matrix proj;     // U^T Z0, k x C
  Vector gain;     // adaptive response per eigenpair
  std::vector<Matrix> powers;  // Ã^k Z0, k = 0..K (empty when eta_gpr == 0)
  Matrix logits;   // filtered output Z
  Matrix probs;    // row softmax of logits
};

namespace detail {

inline Matrix row_softmax(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    double s = 0.0;
    for (Index c = 0; c < z.cols(); ++c) s += (p(i, c) = std::exp(z(i, c) - mx));
    p.row(i) /= s;
  }
  return p;
}

inline void check_inputs(const ModelParams& params, const Matrix& x, const NormalizedGraph& ng, const EigenSystem& es) {
  if (x.rows() != ng.num_nodes()) throw ValidationError("feature rows differ from node count");
  if (x.cols() != params.dims.in) {
    throw ValidationError("feature width " + std::to_string(x.cols()) + " differs from model input width " +
                          std::to_string(params.dims.in));
  }
  if (es.size() > 0 && es.eigenvectors.rows() != ng.num_nodes()) {
    throw ValidationError("eigenvectors have " + std::to_string(es.eigenvectors.rows()) + " rows, graph has " +
                          std::to_string(ng.num_nodes()) + " nodes");
  }
  if (params.filter.span_end() > es.size()) {
    throw ValidationError("partition references eigenpair " + std::to_string(params.filter.span_end() - 1) +
                          " absent from the eigensystem (" + std::to_string(es.size()) + " pairs)");
  }
}

}  // namespace detail

/// Z = U diag(adaptive gain) U^T Z0 + eta_gpr sum_k gamma_k Ã^k Z0 with
/// Z0 = MLP(X); probabilities are the row softmax of Z.
inline ForwardTrace forward(const ModelParams& params, const Matrix& x, const NormalizedGraph& ng,
                            const EigenSystem& es, const ForwardOptions& opt = {}) {
  detail::check_inputs(params, x, ng, es);
  if (!(opt.dropout >= 0.0 && opt.dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  ForwardTrace t;
  t.mode = opt.mode;
  const Index n = x.rows();

  t.pre = (x * params.w1).rowwise() + params.b1.transpose();
  if (params.dims.linear()) {
    t.z0 = t.pre;
  } else {
    t.mask = Matrix::Ones(n, params.dims.hidden);
    if (opt.mode == Mode::train && opt.dropout > 0.0) {
      std::mt19937_64 rng(opt.seed);
      std::bernoulli_distribution keep(1.0 - opt.dropout);
      const double scale = 1.0 / (1.0 - opt.dropout);
      for (Index j = 0; j < t.mask.cols(); ++j) {
        for (Index i = 0; i < n; ++i) t.mask(i, j) = keep(rng) ? scale : 0.0;
      }
    }
    t.hidden = t.pre.cwiseMax(0.0).cwiseProduct(t.mask);
    t.z0 = (t.hidden * params.w2).rowwise() + params.b2.transpose();
  }

  const FilterBank& fb = params.filter;
  t.gain = adaptive_response(fb, es);
  t.logits = Matrix::Zero(n, params.dims.classes);
  if (es.size() > 0) {
    t.proj = es.eigenvectors.transpose() * t.z0;
    t.logits.noalias() += es.eigenvectors * (t.gain.asDiagonal() * t.proj);
  }
  if (fb.eta_gpr != 0.0) {
    t.powers.reserve(static_cast<std::size_t>(fb.gpr_coeffs.size()));
    t.powers.push_back(t.z0);
    for (Index k = 1; k < fb.gpr_coeffs.size(); ++k) t.powers.push_back(ng.multiply(t.powers.back()));
    Matrix gpr = Matrix::Zero(n, params.dims.classes);
    for (Index k = 0; k < fb.gpr_coeffs.size(); ++k) gpr += fb.gpr_coeffs[k] * t.powers[k];
    t.logits += fb.eta_gpr * gpr;
  }
  t.probs = detail::row_softmax(t.logits);
  return t;
}

namespace detail {
inline void check_rows(std::span<const Index> rows, std::span<const int> labels, Index n) {
  if (rows.empty()) throw ValidationError("empty training mask");
  if (static_cast<Index>(labels.size()) != n) throw ValidationError("labels length differs from node count");
  for (Index r : rows) {
    if (r < 0 || r >= n) throw ValidationError("mask index out of range");
  }
}
}  // namespace detail

/// Mean cross-entropy over `rows` (no regularization).
inline double cross_entropy(const ForwardTrace& t, std::span<const int> labels, std::span<const Index> rows) {
  detail::check_rows(rows, labels, t.probs.rows());
  double total = 0.0;
  for (Index r : rows) {
    const int y = labels[r];
    if (y < 0 || y >= t.probs.cols()) throw ValidationError("label outside class range");
    total -= std::log(t.probs(r, y));
  }
  return total / static_cast<double>(rows.size());
}

/// Cross-entropy + weight_decay * ||MLP weights||^2 + boundary_weight * knot penalty.
inline double loss(const ModelParams& params, const ForwardTrace& t, std::span<const int> labels,
                   std::span<const Index> rows, double weight_decay, double boundary_weight) {
  double l = cross_entropy(t, labels, rows);
  if (weight_decay != 0.0) l += weight_decay * (params.w1.squaredNorm() + params.w2.squaredNorm());
  if (boundary_weight != 0.0) l += boundary_weight * boundary_penalty(params.filter);
  return l;
}

/// Exact gradients of `loss` with respect to every trainable parameter.
/// `ng` and `es` must be the operators the trace was computed with.
inline ModelParams backward(const ModelParams& params, const ForwardTrace& t, const Matrix& x,
                            const NormalizedGraph& ng, const EigenSystem& es, std::span<const int> labels,
                            std::span<const Index> rows, double weight_decay, double boundary_weight) {
  detail::check_rows(rows, labels, t.probs.rows());
  if (t.z0.cols() != params.dims.classes || t.z0.rows() != x.rows()) {
    throw ValidationError("trace does not match parameters");
  }
  if (params.filter.eta_gpr != 0.0 && static_cast<Index>(t.powers.size()) != params.filter.gpr_coeffs.size()) {
    throw ValidationError("trace does not match parameters");
  }
  const FilterBank& fb = params.filter;
  ModelParams g = zeros_like(params);

  // dL/dZ for mean softmax cross-entropy.
  Matrix dz = Matrix::Zero(t.probs.rows(), t.probs.cols());
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (Index r : rows) {
    dz.row(r) += inv * t.probs.row(r);
    dz(r, labels[r]) -= inv;
  }

  Matrix dz0 = Matrix::Zero(dz.rows(), dz.cols());
  if (es.size() > 0) {
    const Matrix back = es.eigenvectors.transpose() * dz;  // k x C
    // dL/d gain_j = <U_j^T dZ, U_j^T Z0>
    const Vector dgain = back.cwiseProduct(t.proj).rowwise().sum();
    auto pieces = [&](const std::vector<Bin>& bins, std::vector<Vector>& out, double eta) {
      for (std::size_t b = 0; b < bins.size(); ++b) {
        for (Index j = bins[b].begin; j < bins[b].end; ++j) {
          double pw = eta * dgain[j];
          for (Index p = 0; p < out[b].size(); ++p, pw *= es.eigenvalues[j]) out[b][p] += pw;
        }
      }
    };
    pieces(fb.partition.low_bins, g.filter.low_coeffs, fb.eta_low);
    pieces(fb.partition.high_bins, g.filter.high_coeffs, fb.eta_high);
    dz0.noalias() += es.eigenvectors * (t.gain.asDiagonal() * back);
  }
  if (fb.eta_gpr != 0.0) {
    const Index order = fb.gpr_coeffs.size() - 1;
    for (Index k = 0; k <= order; ++k) g.filter.gpr_coeffs[k] = fb.eta_gpr * dz.cwiseProduct(t.powers[k]).sum();
    // sum_k gamma_k Ã^k dZ by Horner; Ã is symmetric.
    Matrix acc = fb.gpr_coeffs[order] * dz;
    for (Index k = order - 1; k >= 0; --k) acc = ng.multiply(acc) + fb.gpr_coeffs[k] * dz;
    dz0 += fb.eta_gpr * acc;
  }

  if (params.dims.linear()) {
    g.w1 = x.transpose() * dz0;
    g.b1 = dz0.colwise().sum().transpose();
  } else {
    g.w2 = t.hidden.transpose() * dz0;
    g.b2 = dz0.colwise().sum().transpose();
    Matrix dpre = (dz0 * params.w2.transpose()).cwiseProduct(t.mask);
    dpre = (t.pre.array() > 0.0).select(dpre, 0.0);
    g.w1 = x.transpose() * dpre;
    g.b1 = dpre.colwise().sum().transpose();
  }
  if (weight_decay != 0.0) {
    g.w1 += 2.0 * weight_decay * params.w1;
    if (!params.dims.linear()) g.w2 += 2.0 * weight_decay * params.w2;
  }
  if (boundary_weight != 0.0) {
    const PieceGradients pg = boundary_penalty_grad(fb);
    for (std::size_t b = 0; b < pg.low.size(); ++b) g.filter.low_coeffs[b] += boundary_weight * pg.low[b];
    for (std::size_t b = 0; b < pg.high.size(); ++b) g.filter.high_coeffs[b] += boundary_weight * pg.high[b];
  }
  return g;
}

/// Row argmax of the logits; ties go to the smaller class index.
inline std::vector<int> predict(const ForwardTrace& t) {
  std::vector<int> out(static_cast<std::size_t>(t.logits.rows()));
  for (Index i = 0; i < t.logits.rows(); ++i) {
    int best = 0;
    for (Index c = 1; c < t.logits.cols(); ++c) {
      if (t.logits(i, c) > t.logits(i, best)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> labels, std::span<const Index> rows) {
  if (rows.empty()) return 0.0;
  Index hits = 0;
  for (Index r : rows) hits += predicted[r] == labels[r] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

}  // namespace ppgnn
