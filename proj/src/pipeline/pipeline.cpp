#include "meshgen/pipeline.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "meshgen/error.hpp"
#include "meshgen/log.hpp"

namespace meshgen::pipeline {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Empty field -> empty list.
std::vector<std::string> split_list(std::string_view s, char sep) {
  if (s.empty()) return {};
  return split(s, sep);
}

std::string join(std::span<const std::string> items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

struct Lines {
  std::vector<std::string> lines;
  fs::path path;
};

Lines read_lines(const fs::path& path) {
  const auto bytes = dataio::read_file(path);
  Lines out{{}, path};
  std::string cur;
  for (auto b : bytes) {
    if (b == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      out.lines.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(b));
    }
  }
  if (!cur.empty()) out.lines.push_back(std::move(cur));
  return out;
}

void expect_header(const Lines& f, std::string_view header) {
  if (f.lines.empty() || f.lines.front() != header) {
    throw FormatError(fmt::format("{}: expected header '{}'", f.path.string(), header));
  }
}

[[noreturn]] void bad_line(const Lines& f, std::size_t line, std::string_view why) {
  throw FormatError(fmt::format("{}:{}: {}", f.path.string(), line, why));
}

void check_field(std::string_view value, std::string_view what) {
  if (value.find_first_of("\t\n") != std::string_view::npos) {
    throw ContractError(fmt::format("{} '{}' contains a tab or newline", what, value));
  }
}

}  // namespace

PreparedCorpus prepare_corpus(std::span<const dataio::CorpusRecord> records,
                              const text::NegationRules& rules, bool dedup) {
  PreparedCorpus out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    Example e{r.exam_id, text::prepare_report(r.report_text, rules), text::parse_mesh(r.mesh_raw),
              r.mesh_raw, r.image_refs};
    if (dedup) {
      if (e.report.token_count() == 0) {
        ++out.empty_reports;
        log::debug("{}: report empty after negation removal, dropped", r.exam_id);
        continue;
      }
      if (!seen.emplace(e.report.joined(), text::serialize_mesh(e.captions)).second) {
        ++out.duplicates;
        log::debug("{}: duplicate report/MeSH pair, dropped", r.exam_id);
        continue;
      }
    }
    out.examples.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> read_list_file(const fs::path& path) {
  std::vector<std::string> out;
  for (auto& line : read_lines(path).lines) {
    const auto norm = text::normalize_text(line);
    if (line.starts_with('#') || norm.empty()) continue;
    out.push_back(norm);
  }
  return out;
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::vector<std::string> out;
  for (auto& line : read_lines(path).lines) {
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

// ---- annotations --------------------------------------------------------------

void write_annotations(const fs::path& path, std::span<const AnnotationRow> rows) {
  std::string s = fmt::format("{}\n", kAnnotationsHeader);
  for (const auto& r : rows) {
    check_field(r.exam_id, "exam id");
    check_field(r.mesh, "annotation");
    s += fmt::format("{}\t{}\t{}\t{}\t{}\n", r.exam_id, r.source == Source::Gold ? "gold" : "pred", r.mesh,
                     join(r.labels, "|"), join(r.image_refs, ","));
  }
  dataio::write_text_atomic(path, s);
}

std::vector<AnnotationRow> read_annotations(const fs::path& path) {
  const auto f = read_lines(path);
  expect_header(f, kAnnotationsHeader);
  std::vector<AnnotationRow> out;
  std::set<std::string> ids;
  for (std::size_t i = 1; i < f.lines.size(); ++i) {
    if (f.lines[i].empty()) continue;
    const auto fields = split(f.lines[i], '\t');
    if (fields.size() != 5) bad_line(f, i + 1, fmt::format("expected 5 fields, found {}", fields.size()));
    AnnotationRow r;
    r.exam_id = fields[0];
    if (r.exam_id.empty()) bad_line(f, i + 1, "empty exam id");
    if (fields[1] == "gold") r.source = Source::Gold;
    else if (fields[1] == "pred") r.source = Source::Predicted;
    else bad_line(f, i + 1, fmt::format("source must be gold or pred, not '{}'", fields[1]));
    r.mesh = fields[2];
    r.labels = split_list(fields[3], '|');
    r.image_refs = split_list(fields[4], ',');
    if (!ids.insert(r.exam_id).second) bad_line(f, i + 1, fmt::format("duplicate exam id '{}'", r.exam_id));
    out.push_back(std::move(r));
  }
  return out;
}

// ---- captions -----------------------------------------------------------------

void write_captions(const fs::path& path, std::span<const CaptionRow> rows) {
  std::string s = fmt::format("{}\n", kCaptionsHeader);
  for (const auto& r : rows) {
    check_field(r.id, "caption id");
    s += fmt::format("{}\t{}\n", r.id, join(r.terms, "/"));
  }
  dataio::write_text_atomic(path, s);
}

std::vector<CaptionRow> read_captions(const fs::path& path) {
  const auto f = read_lines(path);
  expect_header(f, kCaptionsHeader);
  std::vector<CaptionRow> out;
  std::set<std::string> ids;
  for (std::size_t i = 1; i < f.lines.size(); ++i) {
    if (f.lines[i].empty()) continue;
    const auto fields = split(f.lines[i], '\t');
    if (fields.size() != 2) bad_line(f, i + 1, fmt::format("expected 2 fields, found {}", fields.size()));
    if (fields[0].empty()) bad_line(f, i + 1, "empty id");
    if (!ids.insert(fields[0]).second) bad_line(f, i + 1, fmt::format("duplicate id '{}'", fields[0]));
    out.push_back({fields[0], split_list(fields[1], '/')});
  }
  return out;
}

// ---- labels -------------------------------------------------------------------

void write_labels(const fs::path& path, const LabelFile& file) {
  std::string s = fmt::format("{}\n", kLabelsHeader);
  if (!file.classes.empty()) s += fmt::format("#classes\t{}\n", join(file.classes, "|"));
  for (const auto& r : file.rows) {
    check_field(r.id, "label id");
    s += fmt::format("{}\t{}\n", r.id, join(r.terms, "|"));
  }
  dataio::write_text_atomic(path, s);
}

LabelFile read_labels(const fs::path& path) {
  const auto f = read_lines(path);
  expect_header(f, kLabelsHeader);
  LabelFile out;
  std::set<std::string> ids;
  for (std::size_t i = 1; i < f.lines.size(); ++i) {
    if (f.lines[i].empty()) continue;
    const auto fields = split(f.lines[i], '\t');
    if (fields.size() != 2) bad_line(f, i + 1, fmt::format("expected 2 fields, found {}", fields.size()));
    if (fields[0] == "#classes") {
      if (i != 1) bad_line(f, i + 1, "#classes must directly follow the header");
      out.classes = split_list(fields[1], '|');
      continue;
    }
    if (fields[0].empty()) bad_line(f, i + 1, "empty id");
    if (!ids.insert(fields[0]).second) bad_line(f, i + 1, fmt::format("duplicate id '{}'", fields[0]));
    out.rows.push_back({fields[0], split_list(fields[1], '|')});
  }
  return out;
}

std::string read_header(const fs::path& path) {
  const auto f = read_lines(path);
  return f.lines.empty() ? std::string() : f.lines.front();
}

// ---- term roles ---------------------------------------------------------------

std::vector<TermRole> term_roles(std::span<const Example> examples, const text::TermIndex& index) {
  std::vector<TermRole> roles(index.size());
  std::vector<double> position_sum(index.size(), 0.0);
  for (const auto& e : examples) {
    for (const auto& c : e.captions) {
      if (auto k = index.index(c.pathology)) ++roles[*k].as_pathology;
      for (std::size_t d = 0; d < c.descriptors.size(); ++d) {
        if (auto k = index.index(c.descriptors[d])) {
          ++roles[*k].as_descriptor;
          position_sum[*k] += static_cast<double>(d);
        }
      }
    }
  }
  for (std::size_t k = 0; k < roles.size(); ++k) {
    if (roles[k].as_descriptor) roles[k].mean_position = position_sum[k] / static_cast<double>(roles[k].as_descriptor);
  }
  return roles;
}

text::MeshAnnotation caption_from_scores(std::span<const double> scores,
                                         const text::LabelVector& predicted,
                                         const text::TermIndex& index,
                                         std::span<const TermRole> roles,
                                         std::size_t max_descriptors) {
  if (scores.size() != index.size() || predicted.size() != index.size() || roles.size() != index.size()) {
    throw DimensionError("caption_from_scores: scores, labels and roles must cover the term index");
  }
  // best predicted pathology, else best pathology overall
  std::optional<std::size_t> best_pred, best_any;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (!roles[k].is_pathology()) continue;
    if (!best_any || scores[k] > scores[*best_any]) best_any = k;
    if (predicted[k] && (!best_pred || scores[k] > scores[*best_pred])) best_pred = k;
  }
  text::MeshAnnotation a;
  const auto path = best_pred ? best_pred : best_any;
  if (path) a.pathology = index.term(*path);

  std::vector<std::size_t> desc;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (predicted[k] && !roles[k].is_pathology() && roles[k].as_descriptor > 0) desc.push_back(k);
  }
  std::stable_sort(desc.begin(), desc.end(), [&](std::size_t x, std::size_t y) {
    return roles[x].mean_position < roles[y].mean_position;
  });
  if (desc.size() > max_descriptors) desc.resize(max_descriptors);
  for (auto k : desc) a.descriptors.push_back(index.term(k));
  return a;
}

std::vector<std::string> label_terms(const text::LabelVector& v, const text::TermIndex& index) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < v.size() && k < index.size(); ++k) {
    if (v[k]) out.push_back(index.term(k));
  }
  return out;
}

}  // namespace meshgen::pipeline
