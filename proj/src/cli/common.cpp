#include "common.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "meshgen/dataio.hpp"
#include "meshgen/error.hpp"
#include "meshgen/log.hpp"
#include "meshgen/pipeline.hpp"

namespace meshgen::cli {

namespace fs = std::filesystem;

fs::path make_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory {}: {}", dir, ec.message()));
  return fs::path(dir);
}

std::string format_value(double v) { return fmt::format("{:.6f}", v); }

void write_key_values(const fs::path& path, const KeyValues& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += fmt::format("{}\t{}\n", k, v);
  dataio::write_text_atomic(path, s);
}

std::string render_table(const KeyValues& kv) {
  std::size_t w = 0;
  for (const auto& [k, v] : kv) w = std::max(w, k.size());
  std::string s;
  for (const auto& [k, v] : kv) s += fmt::format("  {:<{}}  {}\n", k, w, v);
  return s;
}

text::NegationRules load_negation_rules(const std::string& cue_file) {
  if (cue_file.empty()) return {};
  auto cues = pipeline::read_list_file(cue_file);
  if (cues.empty()) throw ConfigError(fmt::format("{}: no negation cues", cue_file));
  return text::NegationRules(std::move(cues));
}

void append_report(KeyValues& kv, const std::string& prefix, const metrics::ClassificationReport& r) {
  kv.emplace_back(prefix + ".classes", std::to_string(r.classes));
  kv.emplace_back(prefix + ".accuracy", format_value(r.accuracy));
  kv.emplace_back(prefix + ".precision", format_value(r.precision));
  kv.emplace_back(prefix + ".recall", format_value(r.recall));
  kv.emplace_back(prefix + ".precision_oc", format_value(r.precision_oc));
  kv.emplace_back(prefix + ".recall_oc", format_value(r.recall_oc));
  kv.emplace_back(prefix + ".precision_os", format_value(r.precision_os));
  kv.emplace_back(prefix + ".recall_os", format_value(r.recall_os));
}

metrics::UndefinedPolicy parse_policy(const std::string& s) {
  if (s == "exclude") return metrics::UndefinedPolicy::Exclude;
  if (s == "zero") return metrics::UndefinedPolicy::Zero;
  throw ConfigError(fmt::format("unknown undefined-metric policy '{}'", s));
}

std::vector<std::size_t> term_columns(const std::vector<std::string>& terms, const text::TermIndex& index) {
  std::vector<std::size_t> cols;
  for (const auto& t : terms) {
    if (auto k = index.index(t)) cols.push_back(*k);
    else log::warn("pathology class '{}' is not in the label space", t);
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

}  // namespace meshgen::cli
