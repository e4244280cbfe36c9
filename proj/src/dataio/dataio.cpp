#include "meshgen/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "meshgen/error.hpp"
#include "meshgen/log.hpp"

namespace meshgen::dataio {

namespace fs = std::filesystem;

// ---- files --------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(fmt::format("error reading '{}'", path.string()));
  return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", tmp.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(fmt::format("error writing '{}'", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("cannot rename '{}' to '{}': {}", tmp.string(), path.string(), ec.message()));
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---- corpus -------------------------------------------------------------------

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Corpus load_corpus(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open corpus '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kCorpusHeader) {
    throw FormatError(fmt::format("'{}': first line must be '{}'", path.string(), kCorpusHeader));
  }
  Corpus c;
  std::set<std::string> ids;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 4) {
      c.skipped.push_back({lineno, fmt::format("expected 4 tab-separated fields, found {}", fields.size())});
      continue;
    }
    if (fields[0].empty()) {
      c.skipped.push_back({lineno, "empty exam id"});
      continue;
    }
    if (!ids.insert(fields[0]).second) {
      throw FormatError(fmt::format("'{}' line {}: duplicate exam id '{}'", path.string(), lineno, fields[0]));
    }
    CorpusRecord r{fields[0], fields[1], fields[2], {}};
    for (auto& ref : split(fields[3], ',')) {
      if (!ref.empty()) r.image_refs.push_back(std::move(ref));
    }
    c.records.push_back(std::move(r));
  }
  for (const auto& e : c.skipped) log::warn("{}:{}: skipped ({})", path.string(), e.line, e.message);
  return c;
}

void write_corpus(const fs::path& path, std::span<const CorpusRecord> records) {
  std::string out(kCorpusHeader);
  out += '\n';
  for (const auto& r : records) {
    std::string refs;
    for (const auto& ref : r.image_refs) {
      if (!refs.empty()) refs += ',';
      refs += ref;
    }
    out += fmt::format("{}\t{}\t{}\t{}\n", r.exam_id, r.report_text, r.mesh_raw, refs);
  }
  write_text_atomic(path, out);
}

// ---- embeddings ---------------------------------------------------------------

namespace {

constexpr char kMagic[6] = {'I', 'M', 'E', 'M', 'B', '1'};
constexpr std::uint32_t kEmbeddingVersion = 1;
constexpr std::size_t kHeaderBytes = 6 + 4 + 4 + 4;

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

bool is_standard_embedding_dim(std::uint32_t dim) { return dim == 2048 || dim == 4096; }

std::vector<std::uint8_t> encode_embeddings(const EmbeddingFile& file) {
  std::set<std::string_view> ids;
  for (const auto& r : file.records) {
    if (r.values.size() != file.dim) {
      throw DimensionError(fmt::format("embedding '{}' has {} values, file dim is {}", r.id,
                                       r.values.size(), file.dim));
    }
    if (r.id.size() > 0xFFFF) throw ContractError(fmt::format("embedding id longer than 65535 bytes"));
    if (!ids.insert(r.id).second) throw ContractError(fmt::format("duplicate embedding id '{}'", r.id));
  }
  std::vector<std::uint8_t> b(std::begin(kMagic), std::end(kMagic));
  put_u32(b, kEmbeddingVersion);
  put_u32(b, static_cast<std::uint32_t>(file.records.size()));
  put_u32(b, file.dim);
  for (const auto& r : file.records) {
    put_u16(b, static_cast<std::uint16_t>(r.id.size()));
    b.insert(b.end(), r.id.begin(), r.id.end());
    for (float f : r.values) put_u32(b, std::bit_cast<std::uint32_t>(f));
  }
  return b;
}

EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("embedding file: bad magic (expected IMEMB1)");
  }
  if (bytes.size() < kHeaderBytes) {
    throw FormatError(fmt::format("embedding file: header truncated at byte {}", bytes.size()));
  }
  const auto version = get_u32(bytes.data() + 6);
  if (version != kEmbeddingVersion) {
    throw FormatError(fmt::format("embedding file: version {} (reader supports {})", version, kEmbeddingVersion));
  }
  const auto count = get_u32(bytes.data() + 10);
  EmbeddingFile f;
  f.dim = get_u32(bytes.data() + 14);
  std::size_t off = kHeaderBytes;
  std::set<std::string> ids;
  const std::size_t payload = static_cast<std::size_t>(f.dim) * 4;
  f.records.reserve(std::min<std::size_t>(count, bytes.size() / (2 + payload + 1) + 1));
  for (std::uint32_t k = 0; k < count; ++k) {
    if (off + 2 > bytes.size()) {
      throw CorruptionError(fmt::format("embedding file: record {} of {} truncated at byte offset {}", k, count, off));
    }
    const std::size_t len = bytes[off] | static_cast<std::size_t>(bytes[off + 1]) << 8;
    if (off + 2 + len + payload > bytes.size()) {
      throw CorruptionError(fmt::format("embedding file: record {} of {} truncated at byte offset {}", k, count, off));
    }
    EmbeddingRecord r;
    r.id.assign(reinterpret_cast<const char*>(bytes.data() + off + 2), len);
    off += 2 + len;
    r.values.resize(f.dim);
    for (std::uint32_t i = 0; i < f.dim; ++i, off += 4) {
      r.values[i] = std::bit_cast<float>(get_u32(bytes.data() + off));
    }
    if (!ids.insert(r.id).second) {
      throw CorruptionError(fmt::format("embedding file: duplicate id '{}' at record {}", r.id, k));
    }
    f.records.push_back(std::move(r));
  }
  if (off != bytes.size()) {
    throw CorruptionError(fmt::format("embedding file: {} unexpected trailing bytes at byte offset {}",
                                      bytes.size() - off, off));
  }
  if (!is_standard_embedding_dim(f.dim)) {
    log::warn("embedding dim {} is not a standard backbone width (2048 or 4096)", f.dim);
  }
  return f;
}

void write_embeddings(const fs::path& path, const EmbeddingFile& file) {
  if (!is_standard_embedding_dim(file.dim)) {
    log::warn("writing embedding dim {}, not a standard backbone width", file.dim);
  }
  write_file_atomic(path, encode_embeddings(file));
}

EmbeddingFile read_embeddings(const fs::path& path) { return decode_embeddings(read_file(path)); }

// ---- splits -------------------------------------------------------------------

SplitIndices split_dataset(std::size_t n, const SplitSpec& spec) {
  if (spec.validation_count + spec.test_count > n) {
    throw ContractError(fmt::format("split needs {} validation + {} test records, only {} available",
                                    spec.validation_count, spec.test_count, n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(spec.seed);
  rng.shuffle(std::span(perm));
  SplitIndices out;
  auto v_end = perm.begin() + static_cast<std::ptrdiff_t>(spec.validation_count);
  auto t_end = v_end + static_cast<std::ptrdiff_t>(spec.test_count);
  out.validation.assign(perm.begin(), v_end);
  out.test.assign(v_end, t_end);
  out.train.assign(t_end, perm.end());
  return out;
}

// ---- balanced batches ---------------------------------------------------------

BalancedBatcher::BalancedBatcher(std::span<const text::LabelVector> labels,
                                 std::vector<std::size_t> segment_counts, Rng rng)
    : segment_counts_(std::move(segment_counts)), drawn_(labels.size(), 0), rng_(rng) {
  if (segment_counts_.size() != labels.size()) {
    throw DimensionError(fmt::format("{} segment counts for {} instances", segment_counts_.size(), labels.size()));
  }
  const std::size_t k = labels.empty() ? 0 : labels.front().size();
  by_class_.resize(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].size() != k) throw DimensionError("label vectors of differing length");
    for (std::size_t j = 0; j < k; ++j) {
      if (labels[i][j]) by_class_[j].push_back(i);
    }
  }
  for (std::size_t j = 0; j < k; ++j) (by_class_[j].empty() ? skipped_ : active_).push_back(j);
}

void BalancedBatcher::new_epoch() { std::fill(drawn_.begin(), drawn_.end(), 0); }

std::size_t BalancedBatcher::next_class() {
  if (cycle_pos_ == cycle_.size()) {
    cycle_ = active_;
    rng_.shuffle(std::span(cycle_));
    cycle_pos_ = 0;
  }
  return cycle_[cycle_pos_++];
}

std::vector<BatchItem> BalancedBatcher::next_batch(std::size_t batch_size) {
  if (batch_size < 1) throw ContractError("batch size must be at least 1");
  if (active_.empty()) throw DataError("no class has a training instance");
  std::vector<BatchItem> batch;
  batch.reserve(batch_size);
  for (std::size_t s = 0; s < batch_size; ++s) {
    BatchItem item;
    item.drawn_class = next_class();
    const auto& pool = by_class_[item.drawn_class];
    item.instance = pool[rng_.below(pool.size())];
    const std::size_t nseg = segment_counts_[item.instance];
    item.segment_order.resize(nseg);
    std::iota(item.segment_order.begin(), item.segment_order.end(), std::size_t{0});
    if (drawn_[item.instance] && nseg >= 2) {
      // Redraw until the order differs from the original.
      do {
        rng_.shuffle(std::span(item.segment_order));
      } while (std::is_sorted(item.segment_order.begin(), item.segment_order.end()));
    }
    drawn_[item.instance] = 1;
    batch.push_back(std::move(item));
  }
  return batch;
}

}  // namespace meshgen::dataio
