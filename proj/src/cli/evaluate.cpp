// evaluate and gradcheck.

#include <algorithm>
#include <map>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "commands.hpp"
#include "common.hpp"
#include "meshgen/cli.hpp"
#include "meshgen/error.hpp"
#include "meshgen/log.hpp"
#include "meshgen/metrics.hpp"
#include "meshgen/pipeline.hpp"
#include "meshgen/tensor.hpp"
#include "meshgen/verify.hpp"

namespace meshgen::cli {

namespace {

KeyValues evaluate_captions(const EvaluateOptions& o) {
  const auto pred = pipeline::read_captions(o.pred);
  const auto truth = pipeline::read_captions(o.truth);
  if (pred.empty()) throw DataError(fmt::format("{}: no predictions", o.pred));
  if (truth.empty()) throw DataError(fmt::format("{}: no reference captions", o.truth));
  std::map<std::string, const pipeline::CaptionRow*> by_id;
  for (const auto& r : pred) by_id.emplace(r.id, &r);
  std::vector<metrics::BleuPair> pairs;
  for (const auto& t : truth) {
    auto it = by_id.find(t.id);
    if (it == by_id.end()) throw DataError(fmt::format("{}: no prediction for '{}'", o.pred, t.id));
    pairs.push_back({it->second->terms, {t.terms}});
  }
  const auto mode = o.bleu_mode == "pooled" ? metrics::BleuMode::Pooled : metrics::BleuMode::Sentence;
  const auto rep = metrics::corpus_bleu_report(pairs, mode);
  if (rep.empty_candidates) log::warn("{} empty candidate captions scored 0", rep.empty_candidates);
  KeyValues kv{{"kind", "bleu"}, {"mode", o.bleu_mode}, {"pairs", std::to_string(pairs.size())}};
  for (std::size_t n = 0; n < 4; ++n) kv.emplace_back(fmt::format("bleu{}", n + 1), format_value(rep.bleu[n]));
  kv.emplace_back("brevity_penalty", format_value(rep.brevity_penalty));
  kv.emplace_back("empty_candidates", std::to_string(rep.empty_candidates));
  return kv;
}

KeyValues evaluate_labels(const EvaluateOptions& o) {
  const auto pred = pipeline::read_labels(o.pred);
  const auto truth = pipeline::read_labels(o.truth);
  if (pred.rows.empty()) throw DataError(fmt::format("{}: no predictions", o.pred));
  if (truth.rows.empty()) throw DataError(fmt::format("{}: no reference labels", o.truth));

  std::vector<std::string> classes = !truth.classes.empty() ? truth.classes : pred.classes;
  if (classes.empty()) {
    std::set<std::string> all;
    for (const auto* f : {&pred, &truth}) {
      for (const auto& r : f->rows) all.insert(r.terms.begin(), r.terms.end());
    }
    classes.assign(all.begin(), all.end());
  }
  const text::TermIndex index(classes);
  std::size_t unknown = 0;
  auto vec = [&](const std::vector<std::string>& terms) {
    text::LabelVector v(index.size(), 0);
    for (const auto& t : terms) {
      if (auto k = index.index(t)) v[*k] = 1;
      else ++unknown;
    }
    return v;
  };
  std::map<std::string, const pipeline::LabelRow*> by_id;
  for (const auto& r : pred.rows) by_id.emplace(r.id, &r);
  std::vector<text::LabelVector> p, t;
  for (const auto& r : truth.rows) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw DataError(fmt::format("{}: no prediction for '{}'", o.pred, r.id));
    p.push_back(vec(it->second->terms));
    t.push_back(vec(r.terms));
  }
  if (unknown) log::warn("{} labels outside the class list ignored", unknown);
  const auto policy = parse_policy(o.undefined);
  KeyValues kv{{"kind", "classification"}, {"samples", std::to_string(t.size())}};
  append_report(kv, "all", metrics::classification_report(p, t, policy));
  if (!o.pathology_classes.empty()) {
    const auto cols = term_columns(pipeline::read_list_file(o.pathology_classes), index);
    append_report(kv, "pathology", metrics::classification_report(p, t, cols, policy));
  }
  return kv;
}

}  // namespace

int evaluate(const EvaluateOptions& o, std::ostream& out) {
  const auto truth_header = pipeline::read_header(o.truth);
  const auto pred_header = pipeline::read_header(o.pred);
  if (pred_header != truth_header) {
    throw FormatError(fmt::format("{} and {} are different kinds of file ('{}' vs '{}')", o.pred, o.truth,
                                  pred_header, truth_header));
  }
  KeyValues kv;
  if (truth_header == pipeline::kCaptionsHeader) kv = evaluate_captions(o);
  else if (truth_header == pipeline::kLabelsHeader) kv = evaluate_labels(o);
  else throw FormatError(fmt::format("{}: neither a captions nor a labels file", o.truth));
  write_key_values(o.out, kv);
  out << render_table(kv);
  return kExitOk;
}

int gradcheck(const GradcheckOptions& o, std::ostream& out) {
  struct FaultReset {
    ~FaultReset() { ag::debug::set_backward_fault("", 1.0); }
  } reset;
  if (!o.fault_op.empty()) ag::debug::set_backward_fault(o.fault_op, o.fault_factor);

  const auto suites = verify::gradcheck_module(o.module, o.seed);
  std::vector<std::string> failed;
  for (const auto& s : suites) {
    for (const auto& b : s.blocks) {
      const bool ok = b.max_rel_error < verify::kGradTolerance;
      out << fmt::format("{:<32} {:<20} {:.3e}  {}\n", s.suite, b.name, b.max_rel_error, ok ? "ok" : "FAIL");
      if (!ok) failed.push_back(s.suite + "/" + b.name);
    }
  }
  if (!failed.empty()) {
    out << fmt::format("gradcheck FAILED ({} blocks at or above {:.0e}):\n", failed.size(), verify::kGradTolerance);
    for (const auto& f : failed) out << "  " << f << "\n";
    return kExitVerification;
  }
  out << fmt::format("gradcheck passed: {} suites, all blocks below {:.0e}\n", suites.size(), verify::kGradTolerance);
  return kExitOk;
}

}  // namespace meshgen::cli
