#include "meshgen/text.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "meshgen/error.hpp"

namespace meshgen::text {

// ---- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary() : tokens_{"<pad>", "<start>", "<end>", "<unk>"} {
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::build(const std::map<std::string, std::size_t>& counts,
                             std::size_t min_count) {
  Vocabulary v;
  for (const auto& [tok, n] : counts) {  // std::map iterates in lexicographic order
    if (n < min_count || tok.empty() || v.ids_.count(tok)) continue;
    v.ids_.emplace(tok, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  if (tokens.size() < kReservedIds ||
      !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
    throw FormatError("vocabulary does not start with the reserved tokens");
  }
  for (std::size_t i = kReservedIds; i < tokens.size(); ++i) {
    if (!v.ids_.emplace(tokens[i], static_cast<int>(i)).second) {
      throw FormatError(fmt::format("duplicate vocabulary token '{}'", tokens[i]));
    }
  }
  v.tokens_ = std::move(tokens);
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError(fmt::format("token id {} outside vocabulary of {}", id, tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

// ---- normalization ----------------------------------------------------------

std::string normalize_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    auto c = static_cast<unsigned char>(ch);
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (!keep) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view normalized) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < normalized.size()) {
    while (i < normalized.size() && normalized[i] == ' ') ++i;
    std::size_t j = i;
    while (j < normalized.size() && normalized[j] != ' ') ++j;
    if (j > i) out.emplace_back(normalized.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> split_segments(std::string_view raw) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= raw.size(); ++i) {
    if (i == raw.size() || raw[i] == '.' || raw[i] == ';' || raw[i] == ':') {
      auto seg = normalize_text(raw.substr(start, i - start));
      if (!seg.empty()) out.push_back(std::move(seg));
      start = i + 1;
    }
  }
  return out;
}

// ---- negation ---------------------------------------------------------------

const std::vector<std::string>& NegationRules::default_cues() {
  static const std::vector<std::string> cues{
      "no",          "not",         "without",     "negative for",         "free of",
      "clear of",    "absence of",  "within normal limits", "unremarkable"};
  return cues;
}

NegationRules::NegationRules() : NegationRules(default_cues()) {}

NegationRules::NegationRules(std::vector<std::string> cues) {
  std::string alt;
  for (const auto& raw : cues) {
    auto cue = normalize_text(raw);
    if (cue.empty()) continue;
    if (!alt.empty()) alt += '|';
    alt += cue;  // normalized cues contain only [a-z0-9 ], nothing to escape
    cues_.push_back(std::move(cue));
  }
  if (cues_.empty()) throw ConfigError("negation cue list is empty");
  pattern_ = std::regex("(^| )(" + alt + ")( |$)", std::regex::optimize);
}

bool NegationRules::matches(std::string_view segment) const {
  return std::regex_search(segment.begin(), segment.end(), pattern_);
}

std::vector<std::string> remove_negations(std::span<const std::string> segments,
                                          const NegationRules& rules) {
  std::vector<std::string> out;
  for (const auto& s : segments) {
    if (!rules.matches(s)) out.push_back(s);
  }
  return out;
}

std::string remove_negations(std::string_view raw, const NegationRules& rules) {
  auto kept = remove_negations(split_segments(raw), rules);
  std::string out;
  for (const auto& s : kept) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

std::size_t PreparedReport::token_count() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.size();
  return n;
}

std::vector<std::string> PreparedReport::tokens() const {
  std::vector<std::string> out;
  for (const auto& s : segments) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::string PreparedReport::joined() const {
  std::string out;
  for (const auto& t : tokens()) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

PreparedReport prepare_report(std::string_view raw, const NegationRules& rules) {
  PreparedReport r;
  for (const auto& seg : remove_negations(split_segments(raw), rules)) {
    r.segments.push_back(split_tokens(seg));
  }
  return r;
}

// ---- tokenization -----------------------------------------------------------

TokenizedReport tokenize_and_pad(std::span<const std::string> tokens, const Vocabulary& vocab,
                                 std::size_t length) {
  if (length == 0) throw ContractError("tokenize_and_pad: length must be positive");
  TokenizedReport r;
  r.original_length = tokens.size();
  r.ids.assign(length, kPad);
  for (std::size_t i = 0; i < std::min(length, tokens.size()); ++i) r.ids[i] = vocab.id(tokens[i]);
  return r;
}

TokenizedReport tokenize_and_pad(std::string_view text, const Vocabulary& vocab,
                                 std::size_t length) {
  auto toks = split_tokens(text);
  return tokenize_and_pad(std::span<const std::string>(toks), vocab, length);
}

// ---- MeSH -------------------------------------------------------------------

std::vector<std::string> MeshAnnotation::terms() const {
  std::vector<std::string> out{pathology};
  out.insert(out.end(), descriptors.begin(), descriptors.end());
  return out;
}

std::string MeshAnnotation::serialize() const {
  std::string out = pathology;
  for (const auto& d : descriptors) out += "/" + d;
  return out;
}

std::vector<MeshAnnotation> parse_mesh(std::string_view raw) {
  std::vector<MeshAnnotation> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= raw.size(); ++i) {
    if (i != raw.size() && raw[i] != ',' && raw[i] != ';') continue;
    auto caption = raw.substr(start, i - start);
    start = i + 1;
    MeshAnnotation ann;
    bool first = true;
    std::size_t fs = 0;
    for (std::size_t j = 0; j <= caption.size(); ++j) {
      if (j != caption.size() && caption[j] != '/') continue;
      auto field = normalize_text(caption.substr(fs, j - fs));
      fs = j + 1;
      if (field.empty()) continue;
      if (first) {
        ann.pathology = std::move(field);
        first = false;
      } else {
        ann.descriptors.push_back(std::move(field));
      }
    }
    if (!ann.pathology.empty()) out.push_back(std::move(ann));
  }
  return out;
}

std::string serialize_mesh(std::span<const MeshAnnotation> captions) {
  std::string out;
  for (const auto& c : captions) {
    if (!out.empty()) out += ", ";
    out += c.serialize();
  }
  return out;
}

std::vector<int> flatten(const MeshAnnotation& caption, const Vocabulary& vocab,
                         std::size_t length) {
  std::vector<int> ids(length, kPad);
  auto terms = caption.terms();
  for (std::size_t i = 0; i < std::min(length, terms.size()); ++i) ids[i] = vocab.id(terms[i]);
  return ids;
}

void count_pathologies(std::span<const MeshAnnotation> captions, PathologyCounts& counts) {
  for (const auto& c : captions) ++counts[c.pathology];
}

const MeshAnnotation& select_primary_annotation(std::span<const MeshAnnotation> captions,
                                                const PathologyCounts& counts) {
  if (captions.empty()) throw ContractError("select_primary_annotation: no captions");
  auto freq = [&](const MeshAnnotation& c) {
    auto it = counts.find(c.pathology);
    return it == counts.end() ? std::size_t{0} : it->second;
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < captions.size(); ++i) {
    const auto fi = freq(captions[i]), fb = freq(captions[best]);
    if (fi > fb || (fi == fb && captions[i].pathology < captions[best].pathology)) best = i;
  }
  return captions[best];
}

TermIndex::TermIndex(std::vector<std::string> terms) {
  std::set<std::string> uniq(terms.begin(), terms.end());
  terms_.assign(uniq.begin(), uniq.end());
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], i);
}

std::optional<std::size_t> TermIndex::index(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LabelVector to_label_vector(std::span<const MeshAnnotation> captions, const TermIndex& index,
                            std::size_t* unknown) {
  LabelVector y(index.size(), 0);
  for (const auto& c : captions) {
    for (const auto& t : c.terms()) {
      if (auto i = index.index(t)) {
        y[*i] = 1;
      } else if (unknown) {
        ++*unknown;
      }
    }
  }
  return y;
}

}  // namespace meshgen::text
