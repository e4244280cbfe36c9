#pragma once

// Versioned, self-describing model checkpoints.
//
//   "MGCKPT" | u32 version | u32 meta_len | meta JSON
//   | u32 tensor_count | tensor_count x ( u16 name_len | name | u32 ndim
//   | ndim x u32 extent | extent-product x f64 ) | u32 CRC-32 of all preceding bytes
//
// All integers and floats little-endian.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "meshgen/seqgen.hpp"
#include "meshgen/text.hpp"
#include "meshgen/textcnn.hpp"

namespace meshgen::dataio {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<StoredTensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// FormatError on a foreign file or version mismatch (naming both versions),
// CorruptionError on checksum failure, truncation or trailing bytes.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const textcnn::TextCnnConfig& c);
textcnn::TextCnnConfig textcnn_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const seqgen::SeqGenConfig& c);
seqgen::SeqGenConfig seqgen_config_from_json(const nlohmann::json& j);

struct TextCnnBundle {
  textcnn::TextCnnModel model;
  text::Vocabulary vocab;
  text::TermIndex terms;
  nlohmann::json extra;
};

void save_textcnn(const std::filesystem::path& path, const textcnn::TextCnnModel& model,
                  const text::Vocabulary& vocab, const text::TermIndex& terms,
                  const nlohmann::json& extra = nlohmann::json::object());
// FormatError when the file holds another kind of model, or when `expected`
// is given and differs from the stored config.
TextCnnBundle load_textcnn(const std::filesystem::path& path,
                           const textcnn::TextCnnConfig* expected = nullptr);

struct SeqGenBundle {
  seqgen::SeqGenModel model;
  text::Vocabulary vocab;
  nlohmann::json extra;
};

void save_seqgen(const std::filesystem::path& path, const seqgen::SeqGenModel& model,
                 const text::Vocabulary& vocab,
                 const nlohmann::json& extra = nlohmann::json::object());
SeqGenBundle load_seqgen(const std::filesystem::path& path,
                         const seqgen::SeqGenConfig* expected = nullptr);

}  // namespace meshgen::dataio
