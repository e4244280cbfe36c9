#pragma once

// Glue between the corpus files and the two models, plus the plain-text
// record files the command line exchanges between stages.
//
// Annotations (stage-1 output, stage-2 input):
//   meshgen-annotations v1
//   exam_id <TAB> gold|pred <TAB> mesh <TAB> label|label|... <TAB> image_ref,...
// Captions (generated or reference MeSH sequences):
//   meshgen-captions v1
//   id <TAB> term/term/...
// Labels (multi-label sets; optional fixed class list):
//   meshgen-labels v1
//   #classes <TAB> term|term|...
//   id <TAB> term|term|...

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "meshgen/dataio.hpp"
#include "meshgen/text.hpp"

namespace meshgen::pipeline {

struct Example {
  std::string exam_id;
  text::PreparedReport report;
  std::vector<text::MeshAnnotation> captions;
  std::string mesh_raw;
  std::vector<std::string> image_refs;
};

struct PreparedCorpus {
  std::vector<Example> examples;
  std::size_t empty_reports = 0;  // nothing left after negation removal
  std::size_t duplicates = 0;     // same (normalized report, MeSH) pair seen before
};

// Runs the report and annotation pipeline over every record. With `dedup`,
// empty reports and repeated (report, MeSH) pairs are dropped, keeping the
// first occurrence.
PreparedCorpus prepare_corpus(std::span<const dataio::CorpusRecord> records,
                              const text::NegationRules& rules, bool dedup);

// One normalized term or cue per line; '#' comments and blank lines ignored.
std::vector<std::string> read_list_file(const std::filesystem::path& path);
// Same, but lines are only trimmed (identifiers).
std::vector<std::string> read_id_list(const std::filesystem::path& path);

// ---- annotations --------------------------------------------------------------

inline constexpr std::string_view kAnnotationsHeader = "meshgen-annotations v1";

enum class Source { Gold, Predicted };

struct AnnotationRow {
  std::string exam_id;
  Source source = Source::Gold;
  std::string mesh;
  std::vector<std::string> labels;
  std::vector<std::string> image_refs;
};

void write_annotations(const std::filesystem::path& path, std::span<const AnnotationRow> rows);
// FormatError (with line number) on malformed rows or a wrong header.
std::vector<AnnotationRow> read_annotations(const std::filesystem::path& path);

// ---- captions -----------------------------------------------------------------

inline constexpr std::string_view kCaptionsHeader = "meshgen-captions v1";

struct CaptionRow {
  std::string id;
  std::vector<std::string> terms;
};

void write_captions(const std::filesystem::path& path, std::span<const CaptionRow> rows);
std::vector<CaptionRow> read_captions(const std::filesystem::path& path);

// ---- labels -------------------------------------------------------------------

inline constexpr std::string_view kLabelsHeader = "meshgen-labels v1";

struct LabelRow {
  std::string id;
  std::vector<std::string> terms;
};

struct LabelFile {
  std::vector<std::string> classes;  // empty: class space not fixed
  std::vector<LabelRow> rows;
};

void write_labels(const std::filesystem::path& path, const LabelFile& file);
LabelFile read_labels(const std::filesystem::path& path);

// First line of a file (IoError when unreadable).
std::string read_header(const std::filesystem::path& path);

// ---- term roles ---------------------------------------------------------------

// How a MeSH term was used in the annotations: as a pathology or as a
// descriptor, and at which descriptor position on average.
struct TermRole {
  std::size_t as_pathology = 0;
  std::size_t as_descriptor = 0;
  double mean_position = 0.0;
  bool is_pathology() const { return as_pathology >= as_descriptor && as_pathology > 0; }
};

std::vector<TermRole> term_roles(std::span<const Example> examples, const text::TermIndex& index);

// Structured caption from classifier scores: the highest-scoring predicted
// pathology term (the best pathology overall when none passes the
// threshold), then the predicted descriptor terms in their usual order.
text::MeshAnnotation caption_from_scores(std::span<const double> scores,
                                         const text::LabelVector& predicted,
                                         const text::TermIndex& index,
                                         std::span<const TermRole> roles,
                                         std::size_t max_descriptors = 4);

// Set terms of a label vector in index order.
std::vector<std::string> label_terms(const text::LabelVector& v, const text::TermIndex& index);

}  // namespace meshgen::pipeline
