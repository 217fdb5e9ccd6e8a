#include <cmath>

#include <gtest/gtest.h>

#include "ppgnn/csbm.hpp"
#include "ppgnn/train.hpp"

using namespace ppgnn;

namespace {

ModelParams scalar_params(double value) {
  ModelParams p;
  p.dims = {1, 0, 2};
  p.w1 = Matrix::Constant(1, 2, value);
  p.b1 = Vector::Zero(2);
  p.filter = make_filter_bank({}, 0, 0, Vector::Zero(1), 0.0, 0.0, 1.0);
  return p;
}

struct Fixture {
  Dataset ds;
  NormalizedGraph ng;
  EigenSystem es;
};

Fixture separable() {
  CsbmParams c;
  c.n = 120;
  c.p_in = 0.08;
  c.p_out = 0.01;
  c.class_separation = 6.0;
  c.seed = 21;
  Fixture f;
  f.ds = synth_csbm(c);
  f.ng = sym_normalize(f.ds.graph);
  f.es = dense_eigh(f.ng.to_dense());
  return f;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep) {
  ModelParams p = scalar_params(0.7);
  AdamState st = make_adam_state(p);
  adam_step(p, zeros_like(p), st, 0.1);
  EXPECT_EQ(p.w1(0, 0), 0.7);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ModelParams p = scalar_params(0.0);
  ModelParams g = zeros_like(p);
  g.w1(0, 0) = 3.0;
  g.w1(0, 1) = -0.002;
  AdamState st = make_adam_state(p);
  adam_step(p, g, st, 0.1);
  EXPECT_NEAR(p.w1(0, 0), -0.1, 1e-8);
  EXPECT_NEAR(p.w1(0, 1), 0.1, 1e-5);
}

TEST(Adam, TwoStepsMatchHandUnroll) {
  ModelParams p = scalar_params(1.0);
  ModelParams g = zeros_like(p);
  g.w1(0, 0) = 1.0;
  AdamState st = make_adam_state(p);
  adam_step(p, g, st, 0.1);
  adam_step(p, g, st, 0.1);
  // m2 = 0.19, v2 = 0.001999; bias corrections 0.19 and 0.001999 give
  // m_hat = v_hat = 1, so each step moves lr / (1 + eps).
  const double step = 0.1 * 1.0 / (1.0 + 1e-8);
  EXPECT_NEAR(p.w1(0, 0), 1.0 - 2.0 * step, 1e-14);
}

TEST(Adam, RejectsNonFiniteGradient) {
  ModelParams p = scalar_params(1.0);
  ModelParams g = zeros_like(p);
  g.w1(0, 1) = std::nan("");
  AdamState st = make_adam_state(p);
  try {
    adam_step(p, g, st, 0.1, 12);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 12"), std::string::npos);
  }
}

TEST(LrSchedule, StepDecay) {
  TrainConfig c;
  c.lr = 0.01;
  c.lr_decay = 0.99;
  c.lr_decay_every = 50;
  EXPECT_EQ(lr_at(c, 0), 0.01);
  EXPECT_EQ(lr_at(c, 49), 0.01);
  EXPECT_NEAR(lr_at(c, 100), 0.009801, 1e-15);
}

TEST(TrainConfig, ValidationRules) {
  TrainConfig c;
  c.patience = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c.patience = c.max_epochs + 1;
  EXPECT_THROW(c.validate(), ValidationError);
  c.patience = 10;
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(TrainLoop, SeparableFixtureReachesPerfectTraining) {
  const Fixture f = separable();
  TrainConfig c;
  c.max_epochs = 200;
  c.patience = 200;
  c.seed = 3;
  c.dropout = 0.0;
  c.weight_decay = 0.0;
  c.hidden = 16;
  c.filter.bins_low = 2;
  c.filter.bins_high = 2;
  const TrainResult r = train_loop(f.ds, f.ng, f.es, c);
  const Metrics m = evaluate(r.best_params, f.ds, f.ng, f.es);
  EXPECT_EQ(r.epochs_run, 200);
  EXPECT_EQ(m.train_acc, 1.0);
  EXPECT_EQ(m.val_acc, r.best_val_acc);
}

TEST(TrainLoop, PatienceEqualToMaxEpochsNeverStopsEarly) {
  const Fixture f = separable();
  TrainConfig c;
  c.max_epochs = 30;
  c.patience = 30;
  c.hidden = 8;
  EXPECT_EQ(train_loop(f.ds, f.ng, f.es, c).epochs_run, 30);
  c.patience = 1;
  EXPECT_LT(train_loop(f.ds, f.ng, f.es, c).epochs_run, 30);
}

TEST(TrainLoop, IsDeterministic) {
  const Fixture f = separable();
  TrainConfig c;
  c.max_epochs = 25;
  c.patience = 25;
  c.hidden = 8;
  c.seed = 9;
  const TrainResult a = train_loop(f.ds, f.ng, f.es, c);
  const TrainResult b = train_loop(f.ds, f.ng, f.es, c);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  const auto pa = trainable_blocks(a.best_params);
  const auto pb = trainable_blocks(b.best_params);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].begin(), pa[i].end(), pb[i].begin()));
  }
}

TEST(TrainLoop, SinkSeesEveryEpoch) {
  const Fixture f = separable();
  TrainConfig c;
  c.max_epochs = 12;
  c.patience = 12;
  c.hidden = 4;
  std::vector<EpochRecord> seen;
  const TrainResult r = train_loop(f.ds, f.ng, f.es, c, [&](const EpochRecord& e) { seen.push_back(e); });
  ASSERT_EQ(seen.size(), 12u);
  for (int i = 0; i < 12; ++i) {
    EXPECT_EQ(seen[static_cast<std::size_t>(i)].epoch, i);
    EXPECT_EQ(seen[static_cast<std::size_t>(i)].loss, r.loss_history[static_cast<std::size_t>(i)]);
  }
}

TEST(TrainLoop, KExtremeRestrictsTheBands) {
  const Fixture f = separable();
  TrainConfig c;
  c.max_epochs = 5;
  c.patience = 5;
  c.hidden = 4;
  c.filter.k_extreme = 10;
  const TrainResult r = train_loop(f.ds, f.ng, f.es, c);
  EXPECT_EQ(r.best_params.filter.span_end(), 20);
  c.filter.k_extreme = 61;
  EXPECT_THROW(train_loop(f.ds, f.ng, f.es, c), ValidationError);
}

TEST(RandomSearch, OneTrialEqualsTrainLoop) {
  const Fixture f = separable();
  TrainConfig base;
  base.max_epochs = 15;
  base.patience = 15;
  base.hidden = 4;
  SearchRanges ranges;
  ranges.k_extreme = {8, 16};
  const SearchResult s = random_search(f.ds, f.ng, f.es, ranges, base, 1, 4);
  ASSERT_EQ(s.trials.size(), 1u);
  const TrainResult direct = train_loop(f.ds, f.ng, f.es, s.trials[0].config);
  EXPECT_EQ(direct.loss_history, s.best.loss_history);
  EXPECT_EQ(direct.best_val_acc, s.best.best_val_acc);
}

TEST(RandomSearch, SameSeedSameSequenceAndSelectsByValidation) {
  const Fixture f = separable();
  TrainConfig base;
  base.max_epochs = 10;
  base.patience = 10;
  base.hidden = 4;
  SearchRanges ranges;
  ranges.k_extreme = {8, 16, 32};
  const SearchResult a = random_search(f.ds, f.ng, f.es, ranges, base, 4, 8);
  const SearchResult b = random_search(f.ds, f.ng, f.es, ranges, base, 4, 8);
  ASSERT_EQ(a.trials.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.trials[i].config.filter.bins_low, b.trials[i].config.filter.bins_low);
    EXPECT_EQ(a.trials[i].config.filter.order, b.trials[i].config.filter.order);
    EXPECT_EQ(a.trials[i].config.filter.eta_low, b.trials[i].config.filter.eta_low);
    EXPECT_EQ(a.trials[i].val_acc, b.trials[i].val_acc);
  }
  double best_val = -1.0;
  double test_of_best = 0.0;
  for (const auto& t : a.trials) {
    if (t.val_acc > best_val) {
      best_val = t.val_acc;
      test_of_best = t.test_acc;
    }
  }
  EXPECT_EQ(a.best.best_val_acc, best_val);
  EXPECT_EQ(a.best.test_acc_at_best_val, test_of_best);
}

TEST(RandomSearch, SampledConfigsRespectRanges) {
  SearchRanges r;
  TrainConfig base;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    int resamples = 0;
    const TrainConfig c = sample_config(r, base, 100, rng, resamples);
    EXPECT_LE(c.filter.k_extreme, 100);
    EXPECT_LE(c.filter.bins_low, c.filter.k_extreme);
    EXPECT_GE(c.filter.order, 1);
    EXPECT_LE(c.filter.order, 10);
    EXPECT_GT(c.filter.eta_low, 0.0);
    EXPECT_LT(c.filter.eta_low, 1.0);
    EXPECT_DOUBLE_EQ(c.filter.eta_gpr, 1.0 - c.filter.eta_low);
  }
}
