#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "meshgen/error.hpp"
#include "meshgen/metrics.hpp"
#include "meshgen/rng.hpp"
#include "oracles.hpp"

using namespace meshgen;
using namespace meshgen::metrics;
using text::LabelVector;

namespace {

Tokens toks(std::initializer_list<const char*> w) { return Tokens(w.begin(), w.end()); }

std::vector<LabelVector> random_labels(Rng& rng, std::size_t n, std::size_t k, double p) {
  std::vector<LabelVector> v(n, LabelVector(k));
  for (auto& row : v) {
    for (auto& x : row) x = rng.bernoulli(p);
  }
  return v;
}

}  // namespace

TEST(Classification, PerfectPrediction) {
  const std::vector<LabelVector> y{{1, 0, 1}, {0, 1, 0}, {1, 1, 0}};
  auto r = classification_report(y, y);
  for (double v : {r.accuracy, r.precision, r.recall, r.precision_oc, r.recall_oc, r.precision_os, r.recall_os}) {
    EXPECT_EQ(v, 1.0);
  }
}

TEST(Classification, AllZeroPrediction) {
  const std::vector<LabelVector> y{{1, 0, 1, 0}, {0, 0, 0, 1}};
  const std::vector<LabelVector> p(2, LabelVector(4, 0));
  auto r = classification_report(p, y);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.accuracy, 5.0 / 8.0);
}

TEST(Classification, WorkedExample) {
  const std::vector<LabelVector> truth{{1, 0}, {1, 1}}, pred{{1, 1}, {1, 0}};
  auto r = classification_report(pred, truth);
  EXPECT_DOUBLE_EQ(r.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall, 2.0 / 3.0);
  EXPECT_EQ(r.recall_oc, 0.5);
  EXPECT_EQ(r.recall_os, 0.75);
}

TEST(Classification, ShapeMismatch) {
  const std::vector<LabelVector> a{{1, 0}}, b{{1, 0}, {0, 1}}, c{{1, 0, 1}};
  EXPECT_THROW(classification_report(a, b), DimensionError);
  EXPECT_THROW(classification_report(a, c), DimensionError);
}

TEST(Classification, UndefinedPolicy) {
  // class 1 is never predicted nor present
  const std::vector<LabelVector> y{{1, 0}, {1, 0}}, p{{1, 0}, {0, 0}};
  EXPECT_EQ(classification_report(p, y, UndefinedPolicy::Exclude).precision_oc, 1.0);
  EXPECT_EQ(classification_report(p, y, UndefinedPolicy::Zero).precision_oc, 0.5);
}

TEST(Classification, CountsAndRatesAreConsistent) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(10), k = 1 + rng.below(7);
    auto y = random_labels(rng, n, k, 0.3), p = random_labels(rng, n, k, 0.4);
    auto r = classification_report(p, y);
    std::size_t total = 0;
    for (const auto& c : r.per_class) total += c.tp + c.fp + c.fn + c.tn;
    EXPECT_EQ(total, n * k);
    for (double v : {r.accuracy, r.precision, r.recall, r.precision_oc, r.recall_oc, r.precision_os, r.recall_os}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Classification, MicroMetricsInvariantUnderPermutation) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(8), k = 2 + rng.below(6);
    auto y = random_labels(rng, n, k, 0.3), p = random_labels(rng, n, k, 0.4);
    auto base = classification_report(p, y);
    std::vector<std::size_t> sp(n), cp(k);
    std::iota(sp.begin(), sp.end(), 0);
    std::iota(cp.begin(), cp.end(), 0);
    rng.shuffle(std::span(sp));
    rng.shuffle(std::span(cp));
    std::vector<LabelVector> y2(n, LabelVector(k)), p2(n, LabelVector(k));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        y2[i][j] = y[sp[i]][cp[j]];
        p2[i][j] = p[sp[i]][cp[j]];
      }
    }
    auto r = classification_report(p2, y2);
    EXPECT_EQ(r.accuracy, base.accuracy);
    EXPECT_EQ(r.precision, base.precision);
    EXPECT_EQ(r.recall, base.recall);
  }
}

TEST(Classification, AveragesMatchNaiveLoops) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(9), k = 1 + rng.below(6);
    auto y = random_labels(rng, n, k, 0.35), p = random_labels(rng, n, k, 0.35);
    for (bool zero : {false, true}) {
      auto r = classification_report(p, y, zero ? UndefinedPolicy::Zero : UndefinedPolicy::Exclude);
      auto o = oracles::naive_averages(p, y, zero);
      EXPECT_EQ(r.precision_oc, o.precision_oc);
      EXPECT_EQ(r.recall_oc, o.recall_oc);
      EXPECT_EQ(r.precision_os, o.precision_os);
      EXPECT_EQ(r.recall_os, o.recall_os);
    }
  }
}

TEST(Classification, ColumnSubset) {
  const std::vector<LabelVector> y{{1, 0, 1}, {0, 1, 1}}, p{{1, 1, 0}, {0, 1, 1}};
  const std::vector<std::size_t> cols{0, 2};
  auto r = classification_report(p, y, cols);
  EXPECT_EQ(r.classes, 2u);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 2.0 / 3.0);
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(classification_report(p, y, bad), DimensionError);
}

TEST(Bleu, Examples) {
  const auto ref = toks({"opacity", "lung", "base", "left"});
  for (int n = 1; n <= 4; ++n) EXPECT_EQ(bleu_n(ref, ref, n), 1.0);
  EXPECT_NEAR(bleu_n(toks({"a", "b", "c"}), toks({"a", "b", "d"}), 1), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(bleu_n(toks({"a", "b"}), toks({"c", "d"}), 2), 0.0);
}

TEST(Bleu, ShortCandidatesScoreZeroAtHigherOrders) {
  // no smoothing: a 2-token candidate has no 3-grams
  const auto c = toks({"cardiomegaly", "mild"});
  EXPECT_EQ(bleu_n(c, c, 2), 1.0);
  EXPECT_EQ(bleu_n(c, c, 3), 0.0);
}

TEST(Bleu, BrevityPenaltyAndClipping) {
  EXPECT_NEAR(bleu_n(toks({"a", "b"}), toks({"a", "b", "c", "d"}), 1), std::exp(1.0 - 2.0), 1e-15);
  EXPECT_NEAR(bleu_n(toks({"a", "a", "a"}), toks({"a", "b", "c"}), 1), 1.0 / 3.0, 1e-15);
}

TEST(Bleu, ContractErrors) {
  const auto c = toks({"a"});
  EXPECT_THROW(bleu_n(c, c, 0), ContractError);
  EXPECT_THROW(bleu_n(c, c, 5), ContractError);
  const std::vector<Tokens> none;
  EXPECT_THROW(bleu_n(c, none, 1), ContractError);
  EXPECT_EQ(bleu_n(Tokens{}, c, 1), 0.0);
}

TEST(Bleu, MatchesBruteForce) {
  Rng rng(4);
  const std::vector<std::string> alphabet{"a", "b", "c", "d"};
  auto draw = [&] {
    Tokens t(1 + rng.below(8));
    for (auto& x : t) x = alphabet[rng.below(alphabet.size())];
    return t;
  };
  for (int i = 0; i < 300; ++i) {
    const auto cand = draw();
    std::vector<Tokens> refs{draw()};
    if (rng.bernoulli(0.5)) refs.push_back(draw());
    for (int n = 1; n <= 4; ++n) EXPECT_NEAR(bleu_n(cand, refs, n), oracles::brute_force_bleu(cand, refs, n), 1e-12);
  }
}

// Clipping can make unigram precision the weakest order, so BLEU-n is not
// monotone in n in general; it is for candidates without repeated tokens.
TEST(Bleu, MonotoneInOrderForRepeatFreeCandidates) {
  EXPECT_GT(bleu_n(toks({"a", "b", "a"}), toks({"b", "a", "b"}), 2),
            bleu_n(toks({"a", "b", "a"}), toks({"b", "a", "b"}), 1));
  Rng rng(5);
  std::vector<std::string> alphabet{"a", "b", "c", "d", "e", "f", "g", "h"};
  for (int i = 0; i < 300; ++i) {
    rng.shuffle(std::span(alphabet));
    const Tokens cand(alphabet.begin(), alphabet.begin() + 1 + static_cast<std::ptrdiff_t>(rng.below(6)));
    Tokens ref(1 + rng.below(8));
    for (auto& x : ref) x = alphabet[rng.below(alphabet.size())];
    double prev = 1.0;
    for (int n = 1; n <= 4; ++n) {
      const double b = bleu_n(cand, ref, n);
      EXPECT_LE(b, prev);
      prev = b;
    }
  }
}

TEST(CorpusBleu, Examples) {
  std::vector<BleuPair> same{{toks({"a", "b", "c", "d"}), {toks({"a", "b", "c", "d"})}},
                             {toks({"e", "f", "g", "h", "i"}), {toks({"e", "f", "g", "h", "i"})}}};
  auto r = corpus_bleu_report(same);
  for (double b : r.bleu) EXPECT_EQ(b, 1.0);

  std::vector<BleuPair> half{{toks({"a", "b"}), {toks({"a", "b"})}}, {toks({"a", "b"}), {toks({"c", "d"})}}};
  EXPECT_EQ(corpus_bleu_report(half).bleu[0], 0.5);

  std::vector<BleuPair> one{{toks({"a", "b", "c"}), {toks({"a", "c", "d", "e"})}}};
  auto single = corpus_bleu_report(one);
  for (int n = 1; n <= 4; ++n) EXPECT_EQ(single.bleu[static_cast<std::size_t>(n - 1)], bleu_n(one[0].candidate, one[0].references, n));
}

TEST(CorpusBleu, EmptyCandidatesScoreZeroAndAreCounted) {
  std::vector<BleuPair> pairs{{{}, {toks({"a"})}}, {toks({"a"}), {toks({"a"})}}};
  auto r = corpus_bleu_report(pairs);
  EXPECT_EQ(r.empty_candidates, 1u);
  EXPECT_EQ(r.bleu[0], 0.5);
  EXPECT_THROW(corpus_bleu_report(std::vector<BleuPair>{}), ContractError);
}

TEST(CorpusBleu, PooledMode) {
  std::vector<BleuPair> pairs{{toks({"a", "b"}), {toks({"a", "b"})}}, {toks({"a", "x", "y", "z"}), {toks({"a", "b", "c", "d"})}}};
  auto r = corpus_bleu_report(pairs, BleuMode::Pooled);
  EXPECT_NEAR(r.bleu[0], 3.0 / 6.0, 1e-15);  // pooled clipped unigrams
  EXPECT_EQ(r.brevity_penalty, 1.0);
  EXPECT_NE(r.bleu[0], corpus_bleu_report(pairs).bleu[0]);
}
