#include <cmath>

#include <gtest/gtest.h>

#include "meshgen/error.hpp"
#include "meshgen/seqgen.hpp"
#include "meshgen/verify.hpp"
#include "synth.hpp"

using namespace meshgen;
using namespace meshgen::seqgen;
using ag::Tensor;

namespace {

Tensor random_tensor(ag::Shape shape, Rng& rng, bool grad = true) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

LstmCell zero_cell(std::size_t in, std::size_t h) {
  return {Tensor::zeros({in, 4 * h}, true), Tensor::zeros({h, 4 * h}, true), Tensor::zeros({4 * h}, true)};
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

SeqGenConfig toy(Variant v, Combine c = Combine::Concat) {
  SeqGenConfig cfg;
  cfg.variant = v;
  cfg.combine = c;
  cfg.image_dim = 6;
  cfg.hidden = 8;
  cfg.word_dim = v == Variant::Rnn0 ? 5 : 4;
  cfg.transition_dim = 5;
  cfg.vocab_size = 10;
  if (c == Combine::Sum) cfg.transition_dim = 0;  // forced to the partner width
  return cfg;
}

}  // namespace

TEST(SeqGenConfig, DefaultsResolve) {
  SeqGenConfig c;
  c.vocab_size = 20;
  c.variant = Variant::Rnn0;
  c.image_dim = 4096;
  EXPECT_EQ(c.resolved().transition_dim, 2048u);
  EXPECT_EQ(c.resolved().word_dim, 2048u);
  c.image_dim = 2048;
  EXPECT_EQ(c.resolved().transition_dim, 1024u);
  c.variant = Variant::Rnn1;
  EXPECT_EQ(c.resolved().transition_dim, 1024u);
  EXPECT_EQ(c.resolved().word_dim, 256u);
  c.combine = Combine::Sum;
  EXPECT_EQ(c.resolved().transition_dim, c.hidden);
  c.variant = Variant::Rnn2;
  EXPECT_EQ(c.resolved().transition_dim, 256u);
  EXPECT_EQ(c.steps(), 6u);
}

TEST(SeqGenConfig, InvalidCombinationsAreConfigErrors) {
  auto c = toy(Variant::Rnn0).resolved();
  c.combine = Combine::Sum;
  EXPECT_THROW(c.validate(), ConfigError);
  auto d = toy(Variant::Rnn1).resolved();
  d.image_before_start = true;
  EXPECT_THROW(d.validate(), ConfigError);
  auto e = toy(Variant::Rnn2, Combine::Sum).resolved();
  e.transition_dim = 7;
  EXPECT_THROW(e.validate(), ConfigError);
  EXPECT_THROW(parse_variant("rnn3"), ConfigError);
  EXPECT_EQ(parse_combine("sum"), Combine::Sum);
  EXPECT_EQ(to_string(parse_variant("rnn2")), "rnn2");
}

TEST(LstmStep, ZeroFixedPoint) {
  auto cell = zero_cell(3, 4);
  auto s = lstm_step(Tensor::zeros({1, 3}), zero_state(1, 4), cell);
  for (double v : s.memory.values()) EXPECT_EQ(v, 0.0);
  for (double v : s.output.values()) EXPECT_EQ(v, 0.0);
}

TEST(LstmStep, ZeroWeightsHalveTheMemory) {
  auto cell = zero_cell(3, 4);
  const std::vector<double> v{0.8, -1.2, 2.0, 0.1};
  LstmState prev{Tensor::from({1, 4}, v), Tensor::zeros({1, 4})};
  auto s = lstm_step(Tensor::zeros({1, 3}), prev, cell);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(s.memory.values()[j], 0.5 * v[j]);
    EXPECT_DOUBLE_EQ(s.output.values()[j], 0.5 * std::tanh(0.5 * v[j]));
  }
}

TEST(LstmStep, DimensionMismatch) {
  auto cell = zero_cell(3, 4);
  EXPECT_THROW(lstm_step(Tensor::zeros({1, 2}), zero_state(1, 4), cell), DimensionError);
  EXPECT_THROW(lstm_step(Tensor::zeros({1, 3}), zero_state(1, 5), cell), DimensionError);
}

TEST(LstmStep, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  LstmCell cell{random_tensor({3, 16}, rng), random_tensor({4, 16}, rng), random_tensor({16}, rng)};
  auto x = random_tensor({2, 3}, rng);
  LstmState prev{random_tensor({2, 4}, rng), random_tensor({2, 4}, rng)};
  auto fn = [&] {
    auto s = lstm_step(x, prev, cell);
    return ag::add(ag::sum(ag::mul(s.output, s.output)), ag::sum(s.memory));
  };
  for (auto* t : {&cell.w_input, &cell.w_recurrent, &cell.bias, &x, &prev.memory, &prev.output}) {
    EXPECT_LT(finite_difference_check(fn, *t), 1e-5);
  }
}

TEST(Rnn0Inputs, ImageReplacesStart) {
  auto cfg = toy(Variant::Rnn0);
  Rng init(2);
  SeqGenModel m(cfg, init);
  for (auto& w : m.transition_w.mutable_values()) w = 0.0;
  const std::vector<std::vector<int>> caps{{4, 5, 2, 0, 0}};
  auto in = m.build_rnn0_inputs(Tensor::zeros({1, 6}), caps);
  ASSERT_EQ(in.size(), 6u);
  for (double v : in[0].values()) EXPECT_EQ(v, 0.0);

  Rng rng(3);
  SeqGenModel m2(cfg, init);
  auto a = m2.build_rnn0_inputs(random_tensor({1, 6}, rng, false), caps);
  auto b = m2.build_rnn0_inputs(random_tensor({1, 6}, rng, false), caps);
  EXPECT_NE(vals(a[0]), vals(b[0]));
  for (std::size_t t = 1; t < 6; ++t) EXPECT_EQ(vals(a[t]), vals(b[t]));

  EXPECT_THROW(m2.build_rnn0_inputs(Tensor::zeros({1, 7}), caps), DimensionError);
}

TEST(Rnn0Inputs, ImageBeforeStartAddsAStep) {
  auto cfg = toy(Variant::Rnn0);
  cfg.image_before_start = true;
  Rng init(2);
  SeqGenModel m(cfg, init);
  const std::vector<std::vector<int>> caps{{4, 5, 2, 0, 0}};
  EXPECT_EQ(m.build_rnn0_inputs(Tensor::zeros({1, 6}), caps).size(), 7u);
  EXPECT_EQ(m.forward(Tensor::zeros({1, 6}), caps).size(), 6u);
}

TEST(ConditioningSteps, ZeroImageSumIsAdditiveIdentity) {
  Rng rng(4);
  auto o = random_tensor({2, 4}, rng);
  auto w = random_tensor({4, 4}, rng);
  auto b = random_tensor({4}, rng);
  auto expected = vals(ag::relu(ag::linear(o, w, b)));
  auto zero_proj = Tensor::zeros({2, 4});
  EXPECT_EQ(vals(rnn1_decode_step(o, zero_proj, w, b, Combine::Sum)), expected);
  EXPECT_EQ(vals(rnn2_encode_step(o, zero_proj, w, b, Combine::Sum)), expected);
  EXPECT_THROW(rnn1_decode_step(o, Tensor::zeros({2, 3}), w, b, Combine::Sum), DimensionError);
}

TEST(ConditioningSteps, ConcatLayerWidths) {
  SeqGenConfig c;
  c.vocab_size = 12;
  c.variant = Variant::Rnn1;
  c.image_dim = 2048;
  Rng init(5);
  SeqGenModel rnn1(c, init);
  EXPECT_EQ(rnn1.cond_w.rows(), 512u + 1024u);
  c.variant = Variant::Rnn2;
  c.word_dim = 64;
  SeqGenModel rnn2(c, init);
  EXPECT_EQ(rnn2.cond_w.rows(), 64u + 1024u);
  EXPECT_EQ(rnn2.transition_w.cols(), 1024u);
}

TEST(ConditioningSteps, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  auto o = random_tensor({2, 4}, rng);
  auto p = random_tensor({2, 3}, rng);
  auto ps = random_tensor({2, 4}, rng);
  auto wc = random_tensor({7, 4}, rng), bc = random_tensor({4}, rng);
  auto ws = random_tensor({4, 4}, rng), bs = random_tensor({4}, rng);
  auto f1 = [&] { return ag::sum(ag::tanh(rnn1_decode_step(o, p, wc, bc, Combine::Concat))); };
  auto f2 = [&] { return ag::sum(ag::tanh(rnn2_encode_step(o, ps, ws, bs, Combine::Sum))); };
  for (auto* t : {&o, &p, &wc, &bc}) EXPECT_LT(finite_difference_check(f1, *t), 1e-5);
  for (auto* t : {&o, &ps, &ws, &bs}) EXPECT_LT(finite_difference_check(f2, *t), 1e-5);
}

TEST(SequenceLoss, Examples) {
  // probability one on every target
  std::vector<Tensor> certain;
  const std::vector<std::vector<int>> targets{{4, 5, 2, 0, 0, 0}};
  for (std::size_t t = 0; t < 6; ++t) {
    std::vector<double> row(10, 0.0);
    row[static_cast<std::size_t>(targets[0][t])] = 1.0;
    certain.push_back(Tensor::from({1, 10}, row));
  }
  EXPECT_EQ(sequence_loss(certain, targets).item(), 0.0);

  std::vector<Tensor> uniform(5, Tensor::full({1, 10}, 0.1));
  const std::vector<std::vector<int>> five{{4, 5, 6, 7, 2}};
  EXPECT_NEAR(sequence_loss(uniform, five).item(), 5 * std::log(10.0), 1e-12);

  const std::vector<std::vector<int>> pad{{0, 0, 0, 0, 0}};
  EXPECT_EQ(sequence_loss(uniform, pad).item(), 0.0);

  std::vector<Tensor> bad(5, Tensor::full({1, 10}, 0.2));
  EXPECT_THROW(sequence_loss(bad, five), ContractError);
}

TEST(SequenceLoss, Targets) {
  EXPECT_EQ(make_targets(std::vector<int>{4, 5, 0, 0, 0}, 6), (std::vector<int>{4, 5, 2, 0, 0, 0}));
  EXPECT_EQ(make_targets(std::vector<int>{4, 5, 6, 7, 8}, 6), (std::vector<int>{4, 5, 6, 7, 8, 2}));
  EXPECT_EQ(caption_tokens(std::vector<int>{4, 5, 0, 6, 0}), (std::vector<int>{4, 5}));
}

TEST(SeqGenForward, DistributionsAreNormalized) {
  Rng init(7), rng(8);
  for (auto v : {Variant::Rnn0, Variant::Rnn1, Variant::Rnn2}) {
    SeqGenModel m(toy(v), init);
    const std::vector<std::vector<int>> caps{{4, 5, 6, 0, 0}, {7, 8, 9, 4, 5}};
    auto dists = m.forward(random_tensor({2, 6}, rng, false), caps);
    ASSERT_EQ(dists.size(), 6u);
    for (const auto& d : dists) {
      for (std::size_t r = 0; r < 2; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 10; ++c) s += d.at(r, c);
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(SeqGenForward, SumWithZeroImageEqualsUnconditionedLstm) {
  for (auto v : {Variant::Rnn1, Variant::Rnn2}) {
    Rng init(9);
    SeqGenModel m(toy(v, Combine::Sum), init);
    // relu(0 W + 0) = 0 once the transition bias is zero (its initial value)
    const std::vector<std::vector<int>> caps{{4, 5, 6, 0, 0}};
    auto cond = m.forward(Tensor::zeros({1, 6}), caps, true);
    auto plain = m.forward(Tensor::zeros({1, 6}), caps, false);
    for (std::size_t t = 0; t < cond.size(); ++t) EXPECT_EQ(vals(cond[t]), vals(plain[t]));
  }
}

TEST(SeqGenForward, FreshModelLossNearUniform) {
  Rng init(10), rng(11);
  SeqGenConfig c = toy(Variant::Rnn1);
  c.vocab_size = 40;
  SeqGenModel m(c, init);
  std::vector<std::vector<int>> caps;
  std::vector<std::vector<int>> targets;
  for (int i = 0; i < 32; ++i) {
    std::vector<int> cap(5);
    for (auto& t : cap) t = 4 + static_cast<int>(rng.below(36));
    targets.push_back(make_targets(cap, 6));
    caps.push_back(cap);
  }
  const double loss = sequence_loss(m.forward(random_tensor({32, 6}, rng, false), caps), targets).item();
  const double expected = 6 * std::log(40.0);
  EXPECT_NEAR(loss, expected, 0.1 * expected);
}

TEST(SeqGenGradients, EveryVariantMatchesFiniteDifferences) {
  for (const auto& suite : verify::gradcheck_module("seqgen", 42)) {
    for (const auto& b : suite.blocks) EXPECT_LT(b.max_rel_error, 1e-4) << suite.suite << " " << b.name;
  }
}

TEST(Generate, DeterministicAndCapped) {
  Rng init(12), rng(13);
  SeqGenModel m(toy(Variant::Rnn2), init);
  for (int i = 0; i < 20; ++i) {
    auto img = random_tensor({1, 6}, rng, false);
    const std::vector<double> e(img.values().begin(), img.values().end());
    auto a = greedy_generate(m, e);
    EXPECT_EQ(a.tokens, greedy_generate(m, e).tokens);
    EXPECT_LE(a.tokens.size(), 5u);
    for (int t : a.tokens) {
      EXPECT_NE(t, text::kEnd);
      EXPECT_NE(t, text::kPad);
    }
    for (const auto& d : a.distributions) {
      double s = 0.0;
      for (double p : d) s += p;
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Generate, TemperatureSamplingIsSeeded) {
  Rng init(14);
  SeqGenModel m(toy(Variant::Rnn1), init);
  const std::vector<double> e(6, 0.3);
  Rng a(5), b(5);
  EXPECT_EQ(greedy_generate(m, e, {1.0, &a}).tokens, greedy_generate(m, e, {1.0, &b}).tokens);
}

namespace {

TrainSchedule quick(std::size_t epochs, std::size_t batch) {
  TrainSchedule s;
  s.epochs = epochs;
  s.batch_size = batch;
  s.learning_rate = 1e-2;
  s.patience = epochs;
  s.bleu_every = 0;
  return s;
}

SeqGenConfig trainable(Variant v, std::size_t vocab, std::size_t dim) {
  SeqGenConfig c;
  c.variant = v;
  c.image_dim = dim;
  c.hidden = 32;
  c.word_dim = 16;
  c.transition_dim = v == Variant::Rnn0 ? 16 : 32;
  c.vocab_size = vocab;
  return c;
}

}  // namespace

TEST(SeqGenTraining, SinglePairIsReproduced) {
  for (auto v : {Variant::Rnn0, Variant::Rnn1, Variant::Rnn2}) {
    auto data = synth::sign_caption_set(1, 8, 3);
    auto r = train_seqgen(data.pairs, data.pairs, trainable(v, data.vocab.size(), 8), quick(150, 1), 1);
    EXPECT_EQ(greedy_generate(r.model, data.pairs[0].embedding).tokens, caption_tokens(data.pairs[0].caption))
        << to_string(v);
  }
}

TEST(SeqGenTraining, IdenticalImagesConvergeToMajorityCaption) {
  auto data = synth::sign_caption_set(2, 8, 5);
  ASSERT_NE(data.pairs[0].caption, data.pairs[1].caption);
  std::vector<CaptionedImage> pairs;
  for (int i = 0; i < 3; ++i) pairs.push_back(data.pairs[0]);
  pairs.push_back(data.pairs[1]);
  for (auto& p : pairs) p.embedding.assign(8, 0.5);
  for (auto v : {Variant::Rnn1, Variant::Rnn2}) {
    auto r = train_seqgen(pairs, pairs, trainable(v, data.vocab.size(), 8), quick(200, 4), 2);
    EXPECT_EQ(greedy_generate(r.model, pairs[0].embedding).tokens, caption_tokens(data.pairs[0].caption));
    EXPECT_GT(r.history.back().train_loss, 0.1);
  }
}

TEST(SeqGenTraining, SameSeedSameHistory) {
  auto data = synth::sign_caption_set(6, 8, 7);
  auto s = quick(5, 3);
  s.bleu_every = 1;
  auto a = train_seqgen(data.pairs, data.pairs, trainable(Variant::Rnn1, data.vocab.size(), 8), s, 3);
  auto b = train_seqgen(data.pairs, data.pairs, trainable(Variant::Rnn1, data.vocab.size(), 8), s, 3);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].val_loss, b.history[e].val_loss);
    EXPECT_EQ(a.history[e].train_bleu1, b.history[e].train_bleu1);
  }
}

TEST(SeqGenTraining, TargetBleuStopsEarly) {
  auto data = synth::sign_caption_set(4, 8, 9);
  auto s = quick(300, 4);
  s.bleu_every = 1;
  s.target_train_bleu1 = 0.5;
  auto r = train_seqgen(data.pairs, data.pairs, trainable(Variant::Rnn1, data.vocab.size(), 8), s, 3);
  EXPECT_LT(r.history.size(), 300u);
  ASSERT_TRUE(r.history.back().train_bleu1.has_value());
  EXPECT_GE(*r.history.back().train_bleu1, 0.5);
}

TEST(SeqGenTraining, InconsistentEmbeddingWidthIsDataError) {
  auto data = synth::sign_caption_set(3, 8, 1);
  data.pairs[1].embedding.pop_back();
  EXPECT_THROW(train_seqgen(data.pairs, data.pairs, trainable(Variant::Rnn1, data.vocab.size(), 8), quick(2, 2), 1),
               DataError);
}

TEST(SeqGenTraining, NonFiniteLossIsDivergence) {
  auto data = synth::sign_caption_set(3, 8, 1);
  auto s = quick(3, 3);
  s.learning_rate = 1e308;  // parameters overflow on the second update
  EXPECT_THROW(train_seqgen(data.pairs, data.pairs, trainable(Variant::Rnn1, data.vocab.size(), 8), s, 1),
               DivergenceError);
}
