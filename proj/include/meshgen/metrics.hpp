#pragma once

// Multi-label classification metrics and sentence BLEU.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "meshgen/text.hpp"

namespace meshgen::metrics {

// How per-class / per-sample precision and recall with a zero denominator
// enter the over-class (OC) and over-sample (OS) means.
enum class UndefinedPolicy { Exclude, Zero };

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct ClassificationReport {
  std::size_t samples = 0;
  std::size_t classes = 0;
  double accuracy = 0.0;
  // micro: pooled over all (sample, class) cells
  double precision = 0.0;
  double recall = 0.0;
  double precision_oc = 0.0;
  double recall_oc = 0.0;
  double precision_os = 0.0;
  double recall_os = 0.0;
  std::vector<ClassCounts> per_class;
};

ClassificationReport classification_report(std::span<const text::LabelVector> pred,
                                           std::span<const text::LabelVector> truth,
                                           UndefinedPolicy policy = UndefinedPolicy::Exclude);

// Same, restricted to the given class columns (e.g. the pathology subset).
ClassificationReport classification_report(std::span<const text::LabelVector> pred,
                                           std::span<const text::LabelVector> truth,
                                           std::span<const std::size_t> columns,
                                           UndefinedPolicy policy = UndefinedPolicy::Exclude);

using Tokens = std::vector<std::string>;

// Clipped n-gram precision over orders 1..n, uniform-weight geometric mean,
// times the brevity penalty exp(1 - r/c) when c < r (r: closest reference
// length, shorter on ties). No smoothing: any order without a match gives 0.
// ContractError when n is outside 1..4 or there are no references.
double bleu_n(std::span<const std::string> candidate, std::span<const Tokens> references, int n);
double bleu_n(std::span<const std::string> candidate, std::span<const std::string> reference,
              int n);

struct BleuPair {
  Tokens candidate;
  std::vector<Tokens> references;
};

enum class BleuMode { Sentence, Pooled };

struct BleuReport {
  std::array<double, 4> bleu{};  // bleu[k] is BLEU-(k+1)
  std::vector<std::array<double, 4>> per_sentence;
  double brevity_penalty = 1.0;  // corpus-level, from pooled lengths
  std::size_t empty_candidates = 0;
};

// Sentence mode averages per-pair scores; pooled mode sums clipped counts
// and lengths over the corpus first. Empty candidates score 0 and are
// counted. ContractError on an empty list.
BleuReport corpus_bleu_report(std::span<const BleuPair> pairs,
                              BleuMode mode = BleuMode::Sentence);

}  // namespace meshgen::metrics
