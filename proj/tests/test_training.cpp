#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "ccat/frontend/context.hpp"
#include "ccat/model/network.hpp"
#include "ccat/training/adam.hpp"
#include "ccat/training/batching.hpp"
#include "ccat/training/fit.hpp"
#include "ccat/training/loss.hpp"
#include "support/synthetic.hpp"

using namespace ccat;
using namespace ccat::training;

namespace {

LossTerm term(double label, double utt, std::span<const double> frames, std::span<const std::uint8_t> mask = {}) {
  return LossTerm{label, utt, frames, mask};
}

model::ModelConfig tiny() {
  model::ModelConfig c;
  c.feature_kind = frontend::FeatureKind::kMel;
  c.context_size = 3;
  c.conv_filters = 4;
  c.conv_kernel = 3;
  c.num_encoders = 1;
  c.ff_units = 16;
  c.att_heads = 2;
  c.d_model = 8;
  c.fc_units = 8;
  c.fc_layers = 1;
  c.dropout = 0.0;
  return c;
}

frontend::FeatureConfig tiny_features() {
  frontend::FeatureConfig f;
  f.kind = frontend::FeatureKind::kMel;
  f.mel_bands = 16;
  f.context_half_width = 1;
  return f;
}

std::vector<Example> noisy_set(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> snr(-5.0, 30.0);
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) {
    const auto clip = synth::noisy_tone(0.5, snr(rng), rng);
    out.push_back({"u" + std::to_string(i), frontend::extract_features(clip.mix, tiny_features()),
                   synth::snr_to_mos(clip.snr_db)});
  }
  return out;
}

}  // namespace

TEST(Loss, MosWeightIsExactPowerOfTen) {
  EXPECT_EQ(mos_weight(5.0), 1.0);
  EXPECT_EQ(mos_weight(4.0), 0.1);
  EXPECT_EQ(mos_weight(3.0), 0.01);
  EXPECT_THROW(mos_weight(0.5), LabelError);
  EXPECT_THROW(mos_weight(5.01), LabelError);
  EXPECT_THROW(mos_weight(std::nan("")), LabelError);
}

TEST(Loss, WorkedExamples) {
  const std::vector<double> f1{3.7, 3.7, 3.7}, f2{4.0, 4.0}, f3{3.0, 3.0, 3.0, 3.0};
  const std::vector<LossTerm> perfect{term(3.7, 3.7, f1)};
  EXPECT_EQ(ccat_loss(perfect), 0.0);
  const std::vector<LossTerm> five{term(5.0, 4.0, f2)};
  EXPECT_NEAR(ccat_loss(five), 2.0, 1e-12);
  const std::vector<LossTerm> four{term(4.0, 3.0, f3)};
  EXPECT_NEAR(ccat_loss(four), 1.1, 1e-12);
  // batch mean
  const std::vector<LossTerm> both{five[0], four[0]};
  EXPECT_NEAR(ccat_loss(both), 1.55, 1e-12);
}

TEST(Loss, Errors) {
  EXPECT_THROW(ccat_loss(std::span<const LossTerm>{}), EmptyBatch);
  const std::vector<std::uint8_t> none{0, 0};
  const std::vector<double> two{1.0, 2.0}, one{1.0};
  const std::vector<LossTerm> masked{term(3.0, 3.0, two, none)};
  EXPECT_THROW(ccat_loss(masked), EmptyInput);
  const std::vector<LossTerm> bad{term(6.0, 3.0, one)};
  EXPECT_THROW(ccat_loss(bad), LabelError);
}

TEST(Loss, PaddingIsIgnored) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> frames(7);
    for (auto& f : frames) f = u(rng);
    const double label = 1.0 + u(rng) * 0.8;
    const double utt = u(rng);
    const std::vector<LossTerm> plain{term(label, utt, frames)};
    auto padded = frames;
    padded.insert(padded.end(), 5, u(rng));  // garbage in padded slots
    std::vector<std::uint8_t> mask(7, 1);
    mask.insert(mask.end(), 5, 0);
    const std::vector<LossTerm> with_pad{term(label, utt, padded, mask)};
    EXPECT_DOUBLE_EQ(ccat_loss(plain), ccat_loss(with_pad));
    EXPECT_GE(ccat_loss(plain), 0.0);
  }
}

TEST(Loss, TensorFormMatchesValueForm) {
  nn::Tape<double> tp;
  const std::vector<double> f1{3.0, 4.5, 2.0}, f2{1.5, 2.5, 0.0, 0.0};
  const std::vector<std::uint8_t> m1{1, 1, 1}, m2{1, 1, 0, 0};
  const std::vector<nn::Tensor<double>> utt{tp.leaf({1}, {3.2}, true), tp.leaf({1}, {2.0}, true)};
  const std::vector<nn::Tensor<double>> frames{tp.leaf({3}, f1, true), tp.leaf({4}, f2, true)};
  const std::vector<double> labels{4.1, 1.8};
  const std::vector<std::vector<std::uint8_t>> masks{m1, m2};
  const auto loss = ccat_loss<double>(utt, frames, labels, masks);
  const std::vector<LossTerm> terms{term(4.1, 3.2, f1, m1), term(1.8, 2.0, f2, m2)};
  EXPECT_NEAR(loss.item(), ccat_loss(terms), 1e-15);
  tp.backward(loss);
  // analytic derivative of the value form
  EXPECT_NEAR(utt[0].grad()[0], 0.5 * 2 * (3.2 - 4.1), 1e-15);
  EXPECT_NEAR(frames[0].grad()[1], 0.5 * mos_weight(4.1) / 3 * 2 * (4.5 - 4.1), 1e-15);
  EXPECT_EQ(frames[1].grad()[2], 0.0);
  EXPECT_EQ(frames[1].grad()[3], 0.0);
}

TEST(Adam, ZeroGradientNoDecayIsNoOp) {
  nn::ParameterSet<float> ps;
  ps.add("w", {3}, true);
  ps[0].value = {0.5f, -1.0f, 2.0f};
  auto st = AdamState::for_parameters(ps);
  for (int i = 0; i < 5; ++i) adam_step(ps, st, 0.1, 0.0);
  EXPECT_EQ(ps[0].value, (std::vector<float>{0.5f, -1.0f, 2.0f}));
  EXPECT_EQ(st.step, 5);
}

TEST(Adam, FirstStepClosedForm) {
  nn::ParameterSet<double> ps;
  ps.add("w", {1}, true);
  ps[0].value = {1.0};
  ps[0].grad = {0.3};
  auto st = AdamState::for_parameters(ps);
  const double lr = 1e-3;
  adam_step(ps, st, lr, 0.0);
  // bias-corrected moments are g and g^2, so the step is lr * g / (|g| + eps)
  EXPECT_NEAR(ps[0].value[0], 1.0 - lr * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(ps[0].value[0], 1.0 - lr, 1e-10);
}

TEST(Adam, DecayShrinksOnlyMarkedWeights) {
  nn::ParameterSet<double> ps;
  ps.add("w", {2}, true);
  ps.add("b", {2}, false);
  ps[0].value = {0.8, -0.6};
  ps[1].value = {0.8, -0.6};
  auto st = AdamState::for_parameters(ps);
  double prev = std::abs(ps[0].value[0]) + std::abs(ps[0].value[1]);
  for (int i = 0; i < 10; ++i) {
    ps.zero_grad();
    adam_step(ps, st, 1e-2, 1e-2);
    const double now = std::abs(ps[0].value[0]) + std::abs(ps[0].value[1]);
    EXPECT_LT(now, prev);
    prev = now;
  }
  EXPECT_EQ(ps[1].value, (std::vector<double>{0.8, -0.6}));
}

TEST(Adam, TinyLearningRateLeavesParameters) {
  nn::ParameterSet<float> ps;
  ps.add("w", {2}, true);
  ps[0].value = {1.0f, 2.0f};
  ps[0].grad = {0.5f, -0.5f};
  auto st = AdamState::for_parameters(ps);
  for (int i = 0; i < 100; ++i) adam_step(ps, st, 1e-12, 0.0);
  EXPECT_EQ(ps[0].value, (std::vector<float>{1.0f, 2.0f}));
}

TEST(Batching, EqualLengthsNeedNoPadding) {
  const std::vector<int> lengths(8, 50);
  const auto batches = make_batches(lengths, 4, 0, 1);
  ASSERT_EQ(batches.size(), 2u);
  std::set<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  EXPECT_EQ(seen.size(), 8u);
  frontend::ContextTensor a;
  a.frames = 50;
  a.bins = 1;
  a.context = 1;
  a.data.assign(50, 1.0f);
  a.valid_mask.assign(50, 1);
  const frontend::ContextTensor* members[] = {&a, &a};
  for (const auto& p : pad_batch(members)) EXPECT_EQ(p.valid_frames(), p.frames);
}

TEST(Batching, PadsToLongestMember) {
  frontend::ContextTensor a, b;
  for (auto* ct : {&a, &b}) {
    ct->bins = 2;
    ct->context = 3;
  }
  a.frames = 40;
  b.frames = 60;
  a.data.assign(40 * 6, 1.0f);
  b.data.assign(60 * 6, 1.0f);
  a.valid_mask.assign(40, 1);
  b.valid_mask.assign(60, 1);
  const frontend::ContextTensor* members[] = {&a, &b};
  const auto padded = pad_batch(members);
  EXPECT_EQ(padded[0].frames, 60);
  EXPECT_EQ(padded[1].frames, 60);
  EXPECT_EQ(padded[0].valid_frames(), 40);
  EXPECT_EQ(padded[1].valid_frames(), 60);
  EXPECT_THROW(pad_batch(std::span<const frontend::ContextTensor* const>{}), EmptyBatch);
}

TEST(Batching, BucketsAndDeterminism) {
  const std::vector<int> lengths{30, 250, 60, 260, 90, 20, 240, 10};
  const auto a = make_batches(lengths, 2, 7, 3);
  EXPECT_EQ(a, make_batches(lengths, 2, 7, 3));
  EXPECT_NE(a, make_batches(lengths, 2, 7, 4));
  for (const auto& b : a)
    for (auto i : b) EXPECT_EQ(lengths[i] / 100, lengths[b.front()] / 100);
  EXPECT_THROW(make_batches(lengths, 0, 0), ConfigError);
}

TEST(TrainConfigJson, RoundTripAndUnknownKeys) {
  TrainConfig c;
  c.batch_size = 16;
  c.learning_rate = 4.2e-4;
  c.l2_lambda = 1e-3;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(back.batch_size, 16);
  EXPECT_EQ(back.learning_rate, 4.2e-4);
  EXPECT_THROW(train_config_from_json({{"epochs", 3}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"learning_rate", 0.0}}), ConfigError);
}

TEST(Fit, ZeroEpochsReturnsInitialNetwork) {
  const auto data = noisy_set(2, 1);
  auto net = model::Network<float>::build(tiny(), 16, 0, tiny_features());
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const auto res = fit(net, data, data, cfg);
  EXPECT_TRUE(res.history.empty());
  EXPECT_EQ(res.best_epoch, 0);
  for (std::size_t i = 0; i < net.parameters().size(); ++i)
    EXPECT_EQ(res.best.parameters()[i].value, net.parameters()[i].value);
}

TEST(Fit, InjectedNanGradientDiverges) {
  const auto data = noisy_set(4, 2);
  auto net = model::Network<float>::build(tiny(), 16, 0, tiny_features());
  TrainConfig cfg;
  cfg.max_epochs = 2;
  FitHooks hooks;
  hooks.after_backward_f32 = [](nn::ParameterSet<float>& ps) {
    ps[0].grad[0] = std::numeric_limits<float>::quiet_NaN();
  };
  EXPECT_THROW(fit(net, data, data, cfg, hooks), DivergenceError);
}

TEST(Fit, HugeLearningRateDivergesOrStaysFinite) {
  // Either the run completes with finite reports or it is stopped with a
  // DivergenceError; it never returns non-finite numbers.
  const auto data = noisy_set(4, 3);
  auto net = model::Network<float>::build(tiny(), 16, 0, tiny_features());
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.learning_rate = 1e6;
  try {
    const auto res = fit(net, data, data, cfg);
    for (const auto& r : res.history) {
      EXPECT_TRUE(std::isfinite(r.train_loss));
      EXPECT_TRUE(std::isfinite(r.dev_pcc));
    }
  } catch (const DivergenceError&) {
    SUCCEED();
  }
}

TEST(Fit, RejectsBadInputs) {
  const auto data = noisy_set(2, 4);
  auto net = model::Network<float>::build(tiny(), 16, 0, tiny_features());
  TrainConfig cfg;
  cfg.max_epochs = 1;
  EXPECT_THROW(fit(net, std::span<const Example>{}, data, cfg), EmptyBatch);
  EXPECT_THROW(fit(net, data, std::span<const Example>{}, cfg), EmptyInput);
  auto bad = data;
  bad[0].mos = 0.0;
  EXPECT_THROW(fit(net, bad, data, cfg), LabelError);
}

TEST(Fit, DeterministicAndLossDecreases) {
  const auto train = noisy_set(8, 5);
  const auto dev = noisy_set(4, 6);
  TrainConfig cfg;
  cfg.max_epochs = 8;
  cfg.batch_size = 4;
  cfg.learning_rate = 3e-3;
  cfg.l2_lambda = 0.0;
  cfg.early_stop_patience = 100;
  auto run = [&] { return fit(model::Network<float>::build(tiny(), 16, 9, tiny_features()), train, dev, cfg); };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.history.size(), 8u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].dev_pcc, b.history[i].dev_pcc);
  }
  for (std::size_t i = 0; i < a.best.parameters().size(); ++i)
    EXPECT_EQ(a.best.parameters()[i].value, b.best.parameters()[i].value);
  EXPECT_LT(a.history.back().train_loss, a.history.front().train_loss);
  // the returned network is the best-dev-PCC epoch
  double best = -2.0;
  int best_epoch = 0;
  for (const auto& r : a.history)
    if (r.dev_pcc > best) {
      best = r.dev_pcc;
      best_epoch = r.epoch;
    }
  EXPECT_EQ(a.best_epoch, best_epoch);
}

TEST(Fit, EarlyStopping) {
  const auto train = noisy_set(4, 7);
  const auto dev = noisy_set(3, 8);
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.early_stop_patience = 2;
  cfg.learning_rate = 1e-12;  // nothing changes, so PCC never improves after epoch 1
  const auto res = fit(model::Network<float>::build(tiny(), 16, 1, tiny_features()), train, dev, cfg);
  EXPECT_EQ(res.history.size(), 3u);
  EXPECT_EQ(res.best_epoch, 1);
}
