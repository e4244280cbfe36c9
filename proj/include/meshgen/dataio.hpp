#pragma once

// Dataset and artifact persistence.
//
// Corpus file (UTF-8 text):
//   meshgen-corpus v1
//   exam_id <TAB> report_text <TAB> mesh_raw <TAB> image_ref,image_ref,...
//
// Embedding file (binary, little-endian):
//   "IMEMB1" | u32 version=1 | u32 count | u32 dim
//   count x ( u16 id_len | id bytes | dim x f32 )

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "meshgen/rng.hpp"
#include "meshgen/text.hpp"

namespace meshgen::dataio {

inline constexpr std::string_view kCorpusHeader = "meshgen-corpus v1";

struct CorpusRecord {
  std::string exam_id;
  std::string report_text;
  std::string mesh_raw;
  std::vector<std::string> image_refs;
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct Corpus {
  std::vector<CorpusRecord> records;
  std::vector<LineError> skipped;  // malformed lines, not fatal
};

// IoError when the file cannot be read, FormatError on a bad header or a
// duplicate exam id.
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, std::span<const CorpusRecord> records);

// ---- embeddings -------------------------------------------------------------

struct EmbeddingRecord {
  std::string id;
  std::vector<float> values;
  bool operator==(const EmbeddingRecord&) const = default;
};

struct EmbeddingFile {
  std::uint32_t dim = 0;
  std::vector<EmbeddingRecord> records;
};

// DimensionError on non-uniform dims, ContractError on ids longer than 65535
// bytes or duplicate ids. Writes atomically.
void write_embeddings(const std::filesystem::path& path, const EmbeddingFile& file);
// FormatError on a bad magic/version/header, CorruptionError (with byte
// offset) on truncation or trailing bytes.
EmbeddingFile read_embeddings(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_embeddings(const EmbeddingFile& file);
EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes);

// True for the backbone widths the pipeline expects (2048, 4096).
bool is_standard_embedding_dim(std::uint32_t dim);

// ---- splits -----------------------------------------------------------------

struct SplitSpec {
  std::uint64_t seed = 42;
  std::size_t validation_count = 300;
  std::size_t test_count = 300;
};

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};

// Seeded permutation of 0..n-1; the first validation_count indices form the
// validation split, the next test_count the test split, the rest train.
// ContractError when the counts exceed n.
SplitIndices split_dataset(std::size_t n, const SplitSpec& spec);

template <typename T>
struct Split {
  std::vector<T> train, validation, test;
};

template <typename T>
Split<T> split_dataset(std::span<const T> records, const SplitSpec& spec) {
  auto idx = split_dataset(records.size(), spec);
  Split<T> out;
  for (auto i : idx.train) out.train.push_back(records[i]);
  for (auto i : idx.validation) out.validation.push_back(records[i]);
  for (auto i : idx.test) out.test.push_back(records[i]);
  return out;
}

// ---- class-balanced sampling ------------------------------------------------

struct BatchItem {
  std::size_t instance = 0;
  std::size_t drawn_class = 0;
  // Segment order to use; identity unless the instance was already drawn in
  // the current epoch, in which case a non-identity permutation (when the
  // report has at least two segments).
  std::vector<std::size_t> segment_order;
};

// Fills batch slots by cycling over the classes that have at least one
// instance (class order reshuffled every cycle), drawing a random instance
// that bears the slot's class.
class BalancedBatcher {
 public:
  BalancedBatcher(std::span<const text::LabelVector> labels,
                  std::vector<std::size_t> segment_counts, Rng rng);

  // ContractError when batch_size < 1.
  std::vector<BatchItem> next_batch(std::size_t batch_size);
  // Forget which instances were drawn (start of an epoch).
  void new_epoch();

  const std::vector<std::size_t>& active_classes() const { return active_; }
  const std::vector<std::size_t>& skipped_classes() const { return skipped_; }

 private:
  std::size_t next_class();

  std::vector<std::vector<std::size_t>> by_class_;
  std::vector<std::size_t> segment_counts_;
  std::vector<std::size_t> active_, skipped_;
  std::vector<std::size_t> cycle_;
  std::size_t cycle_pos_ = 0;
  std::vector<std::uint8_t> drawn_;
  Rng rng_;
};

// ---- atomic file helpers ----------------------------------------------------

// Write to <path>.tmp then rename over <path>.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace meshgen::dataio
