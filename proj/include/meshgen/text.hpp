#pragma once

// Report and MeSH-annotation normalization.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace meshgen::text {

inline constexpr int kPad = 0;
inline constexpr int kStart = 1;
inline constexpr int kEnd = 2;
inline constexpr int kUnk = 3;
inline constexpr std::size_t kReservedIds = 4;

inline constexpr std::size_t kDefaultReportLength = 32;
inline constexpr std::size_t kDefaultCaptionLength = 5;

// Token <-> id map with PAD/START/END/UNK at ids 0..3. Ordinary tokens are
// numbered in lexicographic order so the mapping depends only on the token
// multiset it was built from.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary build(const std::map<std::string, std::size_t>& counts,
                          std::size_t min_count = 1);
  // Restores a vocabulary from its id-ordered token list (reserved entries
  // included), e.g. when loading a checkpoint.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  // UNK for unknown tokens.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Lower-case; every byte outside [a-z0-9] becomes a space; whitespace runs
// collapse; ends trimmed.
std::string normalize_text(std::string_view raw);

std::vector<std::string> split_tokens(std::string_view normalized);

// Splits raw text on [.;:] and normalizes each piece; empty pieces dropped.
std::vector<std::string> split_segments(std::string_view raw);

// A segment is negated when any cue occurs in it as a whole-word phrase.
class NegationRules {
 public:
  static const std::vector<std::string>& default_cues();

  NegationRules();
  explicit NegationRules(std::vector<std::string> cues);

  bool matches(std::string_view normalized_segment) const;
  const std::vector<std::string>& cues() const { return cues_; }

 private:
  std::vector<std::string> cues_;
  std::regex pattern_;
};

// Drops every negated segment; the others are returned unchanged.
std::vector<std::string> remove_negations(std::span<const std::string> segments,
                                          const NegationRules& rules);
// Segment, normalize, drop negated segments, join with single spaces.
std::string remove_negations(std::string_view raw, const NegationRules& rules = {});

// Output of the full report pipeline; segments are the units used by
// sentence-shuffle augmentation.
struct PreparedReport {
  std::vector<std::vector<std::string>> segments;
  std::size_t token_count() const;
  std::vector<std::string> tokens() const;
  std::string joined() const;
};
PreparedReport prepare_report(std::string_view raw, const NegationRules& rules);

struct TokenizedReport {
  std::vector<int> ids;
  std::size_t original_length = 0;
};

TokenizedReport tokenize_and_pad(std::span<const std::string> tokens, const Vocabulary& vocab,
                                 std::size_t length = kDefaultReportLength);
TokenizedReport tokenize_and_pad(std::string_view text, const Vocabulary& vocab,
                                 std::size_t length = kDefaultReportLength);

struct MeshAnnotation {
  std::string pathology;
  std::vector<std::string> descriptors;

  std::vector<std::string> terms() const;
  // "pathology/descriptor/..."
  std::string serialize() const;
  bool operator==(const MeshAnnotation&) const = default;
};

// "Cardiomegaly/mild, Opacity/lung/base/left" -> two captions. Captions are
// separated by ',' or ';' and fields by '/'; each field is normalized and
// empty fields are dropped.
std::vector<MeshAnnotation> parse_mesh(std::string_view raw);
std::string serialize_mesh(std::span<const MeshAnnotation> captions);

// [pathology, descriptors..., PAD...] cropped/padded to `length` ids.
std::vector<int> flatten(const MeshAnnotation& caption, const Vocabulary& vocab,
                         std::size_t length = kDefaultCaptionLength);

using PathologyCounts = std::map<std::string, std::size_t>;

void count_pathologies(std::span<const MeshAnnotation> captions, PathologyCounts& counts);

// Caption whose pathology is most frequent; ties go to the lexicographically
// smaller pathology, then the earlier caption. ContractError on empty input.
const MeshAnnotation& select_primary_annotation(std::span<const MeshAnnotation> captions,
                                                const PathologyCounts& counts);

// Sorted list of the MeSH terms that make up the multi-label class space.
class TermIndex {
 public:
  TermIndex() = default;
  explicit TermIndex(std::vector<std::string> terms);

  std::optional<std::size_t> index(std::string_view term) const;
  const std::string& term(std::size_t i) const { return terms_[i]; }
  std::size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
};

using LabelVector = std::vector<std::uint8_t>;

// Terms missing from the index are ignored and counted in `unknown`.
LabelVector to_label_vector(std::span<const MeshAnnotation> captions, const TermIndex& index,
                            std::size_t* unknown = nullptr);

}  // namespace meshgen::text
