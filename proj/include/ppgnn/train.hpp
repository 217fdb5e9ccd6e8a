#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ppgnn/model.hpp"
#include "ppgnn/util.hpp"

namespace ppgnn {

struct FilterConfig {
  Index k_extreme = 0;  // eigenpairs taken from each end; 0 keeps the system's own layout
  Index bins_low = 2;
  Index bins_high = 2;
  int order = 3;       // degree of every adaptive piece
  int gpr_order = 10;  // degree K of the global polynomial
  double eta_low = 0.5;
  double eta_high = 0.5;
  double eta_gpr = 0.5;
  InitScheme init = InitScheme::ppr;
  double alpha = 0.1;
};

struct TrainConfig {
  double lr = 0.01;
  double lr_decay = 0.99;
  int lr_decay_every = 50;
  double weight_decay = 0.0005;
  double dropout = 0.5;
  int max_epochs = 1000;
  int patience = 200;
  std::uint64_t seed = 0;
  double boundary_weight = 0.0;
  Index hidden = 64;  // 0 selects the linear-head variant
  FilterConfig filter;

  void validate() const {
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ValidationError("lr decay must lie in (0, 1]");
    if (lr_decay_every < 1) throw ValidationError("lr decay period must be positive");
    if (max_epochs < 1) throw ValidationError("max_epochs must be positive");
    if (patience < 1 || patience > max_epochs) throw ValidationError("patience must lie in [1, max_epochs]");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
    if (weight_decay < 0.0 || boundary_weight < 0.0) throw ValidationError("regularization weights must be >= 0");
  }
};

/// lr * lr_decay^floor(epoch / lr_decay_every).
inline double lr_at(const TrainConfig& cfg, int epoch) {
  return cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
}

struct AdamState {
  std::vector<Vector> m;
  std::vector<Vector> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam_state(const ModelParams& params) {
  AdamState s;
  for (auto block : trainable_blocks(params)) {
    s.m.push_back(Vector::Zero(static_cast<Index>(block.size())));
    s.v.push_back(Vector::Zero(static_cast<Index>(block.size())));
  }
  return s;
}

/// One bias-corrected Adam update, in place. Throws NumericError on a
/// non-finite gradient before touching any parameter.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr, int epoch = -1) {
  auto p_blocks = trainable_blocks(params);
  const auto g_blocks = trainable_blocks(grads);
  if (p_blocks.size() != g_blocks.size() || p_blocks.size() != state.m.size()) {
    throw ValidationError("adam: parameter / gradient / state layout mismatch");
  }
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    if (p_blocks[b].size() != g_blocks[b].size() || static_cast<Index>(p_blocks[b].size()) != state.m[b].size()) {
      throw ValidationError("adam: block " + std::to_string(b) + " shape mismatch");
    }
    for (double g : g_blocks[b]) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient" + (epoch >= 0 ? " at epoch " + std::to_string(epoch) : std::string()));
      }
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    Vector& m = state.m[b];
    Vector& v = state.v[b];
    for (std::size_t i = 0; i < p_blocks[b].size(); ++i) {
      const double g = g_blocks[b][i];
      const auto k = static_cast<Index>(i);
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      p_blocks[b][i] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

/// Restricts `es` to `k` pairs per end (0 keeps it as is).
inline EigenSystem band_system(const EigenSystem& es, Index k) {
  if (k == 0) return es;
  if (es.complete) {
    if (2 * k > es.size()) {
      throw ValidationError("cannot take " + std::to_string(k) + " eigenpairs per end from " +
                            std::to_string(es.size()));
    }
    return extreme_bands(es, k, k);
  }
  return join_bands(select_band(es, SpectrumEnd::bottom, k), select_band(es, SpectrumEnd::top, k));
}

/// Zeroed adaptive pieces on equal-count bins plus an initialized global polynomial.
inline FilterBank build_filter(const FilterConfig& fc, const EigenSystem& es, std::uint64_t seed) {
  return make_filter_bank(make_partitions(es, fc.bins_low, fc.bins_high), fc.order, fc.order,
                          gpr_init(fc.init, fc.alpha, fc.gpr_order, seed), fc.eta_low, fc.eta_high, fc.eta_gpr);
}

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  double best_val_acc = 0.0;
  double test_acc_at_best_val = 0.0;
  double train_acc_at_best_val = 0.0;
  double best_val_loss = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<double> loss_history;
  ModelParams best_params;
};

struct Metrics {
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double val_loss = 0.0;
};

inline Metrics evaluate(const ModelParams& params, const Dataset& ds, const NormalizedGraph& ng, const EigenSystem& es) {
  const ForwardTrace t = forward(params, ds.features, ng, es, {Mode::eval, 0.0, 0});
  const std::vector<int> pred = predict(t);
  Metrics m;
  m.train_acc = accuracy(pred, ds.labels, ds.train);
  m.val_acc = accuracy(pred, ds.labels, ds.val);
  m.test_acc = accuracy(pred, ds.labels, ds.test);
  m.val_loss = ds.val.empty() ? 0.0 : cross_entropy(t, ds.labels, ds.val);
  return m;
}

using EpochSink = std::function<void(const EpochRecord&)>;

/// Full-graph training with Adam, step learning-rate decay and early
/// stopping on validation accuracy (ties broken by lower validation loss).
/// `es` is restricted to `cfg.filter.k_extreme` pairs per end first.
inline TrainResult train_loop(const Dataset& ds, const NormalizedGraph& ng, const EigenSystem& es,
                              const TrainConfig& cfg, const EpochSink& sink = {}) {
  cfg.validate();
  ds.validate();
  if (ds.train.empty() || ds.val.empty()) throw ValidationError("train and validation splits must be nonempty");
  const EigenSystem bands = band_system(es, cfg.filter.k_extreme);

  const ModelDims dims{ds.features.cols(), cfg.hidden, ds.num_classes};
  ModelParams params = init_params(dims, build_filter(cfg.filter, bands, derive_seed(cfg.seed, 1)),
                                   derive_seed(cfg.seed, 0));
  AdamState adam = make_adam_state(params);

  TrainResult res;
  res.best_val_acc = -1.0;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const ForwardOptions opt{Mode::train, cfg.dropout, derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch))};
    const ForwardTrace t = forward(params, ds.features, ng, bands, opt);
    const double l = loss(params, t, ds.labels, ds.train, cfg.weight_decay, cfg.boundary_weight);
    res.loss_history.push_back(l);
    if (!std::isfinite(l)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
    const ModelParams g =
        backward(params, t, ds.features, ng, bands, ds.labels, ds.train, cfg.weight_decay, cfg.boundary_weight);
    const double lr = lr_at(cfg, epoch);
    adam_step(params, g, adam, lr, epoch);

    const Metrics m = evaluate(params, ds, ng, bands);
    res.epochs_run = epoch + 1;
    if (sink) sink({epoch, l, m.train_acc, m.val_acc, lr});
    if (m.val_acc > res.best_val_acc || (m.val_acc == res.best_val_acc && m.val_loss < res.best_val_loss)) {
      res.best_val_acc = m.val_acc;
      res.best_val_loss = m.val_loss;
      res.test_acc_at_best_val = m.test_acc;
      res.train_acc_at_best_val = m.train_acc;
      res.best_epoch = epoch;
      res.best_params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return res;
}

/// Sweep lists for the random search.
struct SearchRanges {
  std::vector<Index> bins{2, 3, 4, 5, 10, 20};
  int order_min = 1;
  int order_max = 10;
  std::vector<Index> k_extreme{32, 64, 128, 256, 512, 1024};
  double eta_min = 0.0;  // exclusive
  double eta_max = 1.0;  // exclusive
};

struct TrialRecord {
  int trial = 0;
  TrainConfig config;
  int resamples = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  int best_epoch = 0;
};

struct SearchResult {
  TrainResult best;
  int best_trial = 0;
  TrainConfig best_config;
  std::vector<TrialRecord> trials;
};

/// Largest per-end band size `es` can supply.
inline Index available_per_end(const EigenSystem& es) {
  return es.complete ? es.size() / 2 : std::min(es.bottom_count, es.top_count);
}

/// Draws one configuration: bins per band, piece order, eigenpairs per end
/// and eta_low = eta_high = eta with eta_gpr = 1 - eta. Band sizes are capped
/// at `per_end`; draws with more bins than a band holds are redrawn.
inline TrainConfig sample_config(const SearchRanges& ranges, const TrainConfig& base, Index per_end,
                                 std::mt19937_64& rng, int& resamples) {
  if (ranges.bins.empty() || ranges.k_extreme.empty()) throw ValidationError("empty search range");
  // Band sizes beyond what the system stores collapse onto the largest available one.
  std::vector<Index> ks;
  for (Index k : ranges.k_extreme) ks.push_back(std::min(k, per_end));
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  std::uniform_int_distribution<std::size_t> pick_bins(0, ranges.bins.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_k(0, ks.size() - 1);
  std::uniform_int_distribution<int> pick_order(ranges.order_min, ranges.order_max);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  resamples = 0;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    TrainConfig c = base;
    c.filter.bins_low = ranges.bins[pick_bins(rng)];
    c.filter.bins_high = ranges.bins[pick_bins(rng)];
    c.filter.order = pick_order(rng);
    c.filter.k_extreme = ks[pick_k(rng)];
    double eta = ranges.eta_min + (ranges.eta_max - ranges.eta_min) * unif(rng);
    while (!(eta > ranges.eta_min && eta < ranges.eta_max)) eta = ranges.eta_min + (ranges.eta_max - ranges.eta_min) * unif(rng);
    c.filter.eta_low = eta;
    c.filter.eta_high = eta;
    c.filter.eta_gpr = 1.0 - eta;
    if (c.filter.k_extreme <= per_end && c.filter.bins_low <= c.filter.k_extreme &&
        c.filter.bins_high <= c.filter.k_extreme) {
      return c;
    }
    ++resamples;
  }
  throw ValidationError("no feasible configuration in the search ranges for " + std::to_string(per_end) +
                        " eigenpairs per end");
}

/// Seeded random search; the winner is the trial with the highest
/// validation accuracy (earliest trial on ties).
inline SearchResult random_search(const Dataset& ds, const NormalizedGraph& ng, const EigenSystem& es,
                                  const SearchRanges& ranges, const TrainConfig& base, int trials,
                                  std::uint64_t seed) {
  if (trials < 1) throw ValidationError("need at least one trial");
  std::mt19937_64 rng(seed);
  const Index per_end = available_per_end(es);
  SearchResult out;
  for (int t = 0; t < trials; ++t) {
    TrialRecord rec;
    rec.trial = t;
    rec.config = sample_config(ranges, base, per_end, rng, rec.resamples);
    rec.config.seed = derive_seed(seed, static_cast<std::uint64_t>(t));
    TrainResult r = train_loop(ds, ng, es, rec.config);
    rec.val_acc = r.best_val_acc;
    rec.test_acc = r.test_acc_at_best_val;
    rec.best_epoch = r.best_epoch;
    if (t == 0 || r.best_val_acc > out.best.best_val_acc) {
      out.best = std::move(r);
      out.best_trial = t;
      out.best_config = rec.config;
    }
    out.trials.push_back(std::move(rec));
  }
  return out;
}

}  // namespace ppgnn
