#include "meshgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "meshgen/error.hpp"

namespace meshgen::metrics {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

struct MeanAcc {
  double sum = 0.0;
  std::size_t n = 0;
  void add(std::size_t num, std::size_t den, UndefinedPolicy policy) {
    if (den == 0) {
      if (policy == UndefinedPolicy::Zero) ++n;
      return;
    }
    sum += ratio(num, den);
    ++n;
  }
  double value() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
};

}  // namespace

ClassificationReport classification_report(std::span<const text::LabelVector> pred,
                                           std::span<const text::LabelVector> truth,
                                           UndefinedPolicy policy) {
  std::vector<std::size_t> all(truth.empty() ? 0 : truth.front().size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return classification_report(pred, truth, all, policy);
}

ClassificationReport classification_report(std::span<const text::LabelVector> pred,
                                           std::span<const text::LabelVector> truth,
                                           std::span<const std::size_t> columns,
                                           UndefinedPolicy policy) {
  if (pred.size() != truth.size()) {
    throw DimensionError(fmt::format("classification_report: {} predictions for {} samples",
                                     pred.size(), truth.size()));
  }
  const std::size_t k = truth.empty() ? 0 : truth.front().size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() != k || pred[i].size() != k) {
      throw DimensionError(fmt::format("classification_report: sample {} has {} / {} labels, expected {}",
                                       i, pred[i].size(), truth[i].size(), k));
    }
  }
  for (auto c : columns) {
    if (c >= k) throw DimensionError(fmt::format("class column {} outside {} classes", c, k));
  }

  ClassificationReport r;
  r.samples = truth.size();
  r.classes = columns.size();
  r.per_class.resize(columns.size());
  MeanAcc p_os, r_os;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ClassCounts s;
    for (std::size_t ci = 0; ci < columns.size(); ++ci) {
      const bool p = pred[i][columns[ci]] != 0, t = truth[i][columns[ci]] != 0;
      auto& c = r.per_class[ci];
      if (p && t) { ++c.tp; ++s.tp; }
      else if (p) { ++c.fp; ++s.fp; }
      else if (t) { ++c.fn; ++s.fn; }
      else { ++c.tn; ++s.tn; }
    }
    p_os.add(s.tp, s.tp + s.fp, policy);
    r_os.add(s.tp, s.tp + s.fn, policy);
  }
  ClassCounts total;
  MeanAcc p_oc, r_oc;
  for (const auto& c : r.per_class) {
    total.tp += c.tp; total.fp += c.fp; total.fn += c.fn; total.tn += c.tn;
    p_oc.add(c.tp, c.tp + c.fp, policy);
    r_oc.add(c.tp, c.tp + c.fn, policy);
  }
  r.accuracy = ratio(total.tp + total.tn, total.tp + total.tn + total.fp + total.fn);
  r.precision = ratio(total.tp, total.tp + total.fp);
  r.recall = ratio(total.tp, total.tp + total.fn);
  r.precision_oc = p_oc.value();
  r.recall_oc = r_oc.value();
  r.precision_os = p_os.value();
  r.recall_os = r_os.value();
  return r;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(std::span<const std::string> toks, std::size_t order) {
  NgramCounts out;
  if (toks.size() < order) return out;
  for (std::size_t i = 0; i + order <= toks.size(); ++i) {
    ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                   toks.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return out;
}

struct OrderStats {
  std::size_t matched = 0;
  std::size_t total = 0;
};

// Clipped matches and candidate n-gram totals for orders 1..4.
std::array<OrderStats, 4> clipped_counts(std::span<const std::string> cand,
                                         std::span<const Tokens> refs) {
  std::array<OrderStats, 4> out{};
  for (std::size_t order = 1; order <= 4; ++order) {
    auto cc = ngrams(cand, order);
    NgramCounts max_ref;
    for (const auto& ref : refs) {
      for (const auto& [g, n] : ngrams(ref, order)) max_ref[g] = std::max(max_ref[g], n);
    }
    auto& s = out[order - 1];
    for (const auto& [g, n] : cc) {
      auto it = max_ref.find(g);
      s.matched += std::min(n, it == max_ref.end() ? std::size_t{0} : it->second);
      s.total += n;
    }
  }
  return out;
}

std::size_t closest_ref_length(std::size_t c, std::span<const Tokens> refs) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = r.size() > c ? r.size() - c : c - r.size();
    const auto bd = best > c ? best - c : c - best;
    if (d < bd || (d == bd && r.size() < best)) best = r.size();
  }
  return best;
}

double combine(const std::array<OrderStats, 4>& stats, int n, std::size_t c, std::size_t r) {
  if (c == 0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (stats[static_cast<std::size_t>(k)].matched == 0) return 0.0;
    log_sum += std::log(ratio(stats[static_cast<std::size_t>(k)].matched,
                              stats[static_cast<std::size_t>(k)].total));
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return bp * std::exp(log_sum / n);
}

void check_order(int n) {
  if (n < 1 || n > 4) throw ContractError(fmt::format("BLEU order {} outside 1..4", n));
}

}  // namespace

double bleu_n(std::span<const std::string> candidate, std::span<const Tokens> references, int n) {
  check_order(n);
  if (references.empty()) throw ContractError("bleu_n: no references");
  if (candidate.empty()) return 0.0;
  return combine(clipped_counts(candidate, references), n, candidate.size(),
                 closest_ref_length(candidate.size(), references));
}

double bleu_n(std::span<const std::string> candidate, std::span<const std::string> reference,
              int n) {
  const std::vector<Tokens> refs{Tokens(reference.begin(), reference.end())};
  return bleu_n(candidate, refs, n);
}

BleuReport corpus_bleu_report(std::span<const BleuPair> pairs, BleuMode mode) {
  if (pairs.empty()) throw ContractError("corpus_bleu_report: no pairs");
  BleuReport rep;
  std::array<OrderStats, 4> pooled{};
  std::size_t c_total = 0, r_total = 0;
  for (const auto& p : pairs) {
    if (p.references.empty()) throw ContractError("corpus_bleu_report: pair without reference");
    std::array<double, 4> s{};
    const std::size_t r = closest_ref_length(p.candidate.size(), p.references);
    r_total += r;
    if (p.candidate.empty()) {
      ++rep.empty_candidates;
    } else {
      auto stats = clipped_counts(p.candidate, p.references);
      for (int n = 1; n <= 4; ++n) s[static_cast<std::size_t>(n - 1)] = combine(stats, n, p.candidate.size(), r);
      for (std::size_t k = 0; k < 4; ++k) {
        pooled[k].matched += stats[k].matched;
        pooled[k].total += stats[k].total;
      }
      c_total += p.candidate.size();
    }
    rep.per_sentence.push_back(s);
  }
  if (mode == BleuMode::Sentence) {
    for (std::size_t k = 0; k < 4; ++k) {
      double sum = 0.0;
      for (const auto& s : rep.per_sentence) sum += s[k];
      rep.bleu[k] = sum / static_cast<double>(pairs.size());
    }
  } else {
    for (int n = 1; n <= 4; ++n) rep.bleu[static_cast<std::size_t>(n - 1)] = combine(pooled, n, c_total, r_total);
  }
  rep.brevity_penalty =
      c_total == 0 ? 0.0
                   : (c_total < r_total ? std::exp(1.0 - static_cast<double>(r_total) / static_cast<double>(c_total))
                                        : 1.0);
  return rep;
}

}  // namespace meshgen::metrics
