#include "meshgen/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>
#include <zlib.h>

#include "meshgen/dataio.hpp"
#include "meshgen/error.hpp"

namespace meshgen::dataio {

using nlohmann::json;

namespace {

constexpr char kMagic[6] = {'M', 'G', 'C', 'K', 'P', 'T'};

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t crc(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) {
      throw CorruptionError(fmt::format("checkpoint truncated at byte offset {}", pos_));
    }
  }
  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> b(std::begin(kMagic), std::end(kMagic));
  put_u32(b, kCheckpointVersion);
  json meta = ckpt.meta;
  meta["kind"] = ckpt.kind;
  const std::string m = meta.dump();
  put_u32(b, static_cast<std::uint32_t>(m.size()));
  b.insert(b.end(), m.begin(), m.end());
  put_u32(b, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_u16(b, static_cast<std::uint16_t>(t.name.size()));
    b.insert(b.end(), t.name.begin(), t.name.end());
    put_u32(b, static_cast<std::uint32_t>(t.shape.size()));
    std::size_t n = 1;
    for (auto e : t.shape) {
      put_u32(b, e);
      n *= e;
    }
    if (n != t.values.size()) {
      throw DimensionError(fmt::format("tensor '{}' has {} values for its shape", t.name, t.values.size()));
    }
    for (double v : t.values) put_u64(b, std::bit_cast<std::uint64_t>(v));
  }
  put_u32(b, crc(b));
  return b;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  if (bytes.size() < sizeof(kMagic) + 4) throw FormatError("checkpoint header truncated");
  Reader hdr(bytes.subspan(sizeof(kMagic)));
  const auto version = static_cast<std::uint32_t>(hdr.uint(4));
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("checkpoint version {} but this build reads version {}", version,
                                  kCheckpointVersion));
  }
  if (bytes.size() < sizeof(kMagic) + 8) throw CorruptionError("checkpoint truncated before checksum");
  const auto body = bytes.first(bytes.size() - 4);
  const auto stored = static_cast<std::uint32_t>(Reader(bytes.last(4)).uint(4));
  if (crc(body) != stored) throw CorruptionError("checkpoint checksum mismatch (file corrupt or truncated)");

  Reader r(body);
  r.str(sizeof(kMagic));
  r.uint(4);
  Checkpoint ck;
  const auto meta_len = static_cast<std::size_t>(r.uint(4));
  try {
    ck.meta = json::parse(r.str(meta_len));
    ck.kind = ck.meta.at("kind").get<std::string>();
  } catch (const json::exception& e) {
    throw CorruptionError(fmt::format("checkpoint metadata unreadable: {}", e.what()));
  }
  const auto count = r.uint(4);
  for (std::uint64_t k = 0; k < count; ++k) {
    StoredTensor t;
    t.name = r.str(static_cast<std::size_t>(r.uint(2)));
    const auto ndim = r.uint(4);
    if (ndim == 0 || ndim > 2) throw CorruptionError(fmt::format("tensor '{}' has rank {}", t.name, ndim));
    std::size_t n = 1;
    for (std::uint64_t d = 0; d < ndim; ++d) {
      t.shape.push_back(static_cast<std::uint32_t>(r.uint(4)));
      n *= t.shape.back();
    }
    r.need(n * 8);
    t.values.resize(n);
    for (auto& v : t.values) v = std::bit_cast<double>(r.uint(8));
    ck.tensors.push_back(std::move(t));
  }
  if (r.pos() != body.size()) {
    throw CorruptionError(fmt::format("checkpoint has trailing bytes at offset {}", r.pos()));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

// ---- configs ------------------------------------------------------------------

json to_json(const textcnn::TextCnnConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"embed_dim", c.embed_dim},
              {"filter_widths", c.filter_widths},
              {"maps_per_width", c.maps_per_width},
              {"branch_units", c.branch_units},
              {"dropout", c.dropout},
              {"classes", c.classes},
              {"loss_weights", {c.loss.bce, c.loss.soft_recall, c.loss.soft_tnr}},
              {"seq_len", c.seq_len}};
}

textcnn::TextCnnConfig textcnn_config_from_json(const json& j) {
  try {
    textcnn::TextCnnConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.filter_widths = j.at("filter_widths").get<std::vector<std::size_t>>();
    c.maps_per_width = j.at("maps_per_width").get<std::size_t>();
    c.branch_units = j.at("branch_units").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.classes = j.at("classes").get<std::size_t>();
    auto w = j.at("loss_weights").get<std::vector<double>>();
    if (w.size() != 3) throw FormatError("loss_weights must have 3 entries");
    c.loss = {w[0], w[1], w[2]};
    c.seq_len = j.at("seq_len").get<std::size_t>();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("text CNN config: {}", e.what()));
  }
}

json to_json(const seqgen::SeqGenConfig& c) {
  return json{{"variant", seqgen::to_string(c.variant)},
              {"combine", seqgen::to_string(c.combine)},
              {"image_dim", c.image_dim},
              {"transition_dim", c.transition_dim},
              {"word_dim", c.word_dim},
              {"hidden", c.hidden},
              {"caption_length", c.caption_length},
              {"vocab_size", c.vocab_size},
              {"image_before_start", c.image_before_start}};
}

seqgen::SeqGenConfig seqgen_config_from_json(const json& j) {
  try {
    seqgen::SeqGenConfig c;
    c.variant = seqgen::parse_variant(j.at("variant").get<std::string>());
    c.combine = seqgen::parse_combine(j.at("combine").get<std::string>());
    c.image_dim = j.at("image_dim").get<std::size_t>();
    c.transition_dim = j.at("transition_dim").get<std::size_t>();
    c.word_dim = j.at("word_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.caption_length = j.at("caption_length").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.image_before_start = j.at("image_before_start").get<bool>();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("sequence model config: {}", e.what()));
  } catch (const ConfigError& e) {
    throw FormatError(fmt::format("sequence model config: {}", e.what()));
  }
}

// ---- models -------------------------------------------------------------------

namespace {

std::vector<StoredTensor> store(const std::vector<NamedTensor>& params) {
  std::vector<StoredTensor> out;
  for (const auto& p : params) {
    StoredTensor t{p.name, {}, {p.tensor.values().begin(), p.tensor.values().end()}};
    for (auto e : p.tensor.shape()) t.shape.push_back(static_cast<std::uint32_t>(e));
    out.push_back(std::move(t));
  }
  return out;
}

void assign(const std::vector<NamedTensor>& params, const std::vector<StoredTensor>& stored) {
  if (params.size() != stored.size()) {
    throw FormatError(fmt::format("checkpoint holds {} tensors, model has {}", stored.size(), params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto& s = stored[i];
    std::vector<std::size_t> shape(s.shape.begin(), s.shape.end());
    if (p.name != s.name || shape != p.tensor.shape()) {
      throw FormatError(fmt::format("checkpoint tensor '{}' {} does not match model tensor '{}' {}", s.name,
                                    ag::shape_str(shape), p.name, ag::shape_str(p.tensor.shape())));
    }
    auto dst = p.tensor;
    std::copy(s.values.begin(), s.values.end(), dst.mutable_values().begin());
  }
}

text::Vocabulary vocab_from(const json& meta, std::size_t expected_size) {
  try {
    auto v = text::Vocabulary::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
    if (v.size() != expected_size) {
      throw FormatError(fmt::format("vocabulary of {} tokens but config says {}", v.size(), expected_size));
    }
    return v;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("checkpoint vocabulary: {}", e.what()));
  }
}

void require_kind(const Checkpoint& ck, std::string_view kind) {
  if (ck.kind != kind) {
    throw FormatError(fmt::format("checkpoint holds a '{}' model, expected '{}'", ck.kind, kind));
  }
}

}  // namespace

void save_textcnn(const std::filesystem::path& path, const textcnn::TextCnnModel& model,
                  const text::Vocabulary& vocab, const text::TermIndex& terms, const json& extra) {
  Checkpoint ck;
  ck.kind = "textcnn";
  ck.meta["config"] = to_json(model.config());
  ck.meta["vocab"] = vocab.tokens();
  ck.meta["terms"] = terms.terms();
  ck.meta["extra"] = extra;
  ck.tensors = store(model.parameters());
  save_checkpoint(path, ck);
}

TextCnnBundle load_textcnn(const std::filesystem::path& path, const textcnn::TextCnnConfig* expected) {
  auto ck = load_checkpoint(path);
  require_kind(ck, "textcnn");
  auto config = textcnn_config_from_json(ck.meta.at("config"));
  if (expected && !(*expected == config)) {
    throw FormatError("checkpoint was written with a different text CNN config");
  }
  Rng rng(0);
  TextCnnBundle b{textcnn::TextCnnModel(config, rng), vocab_from(ck.meta, config.vocab_size), {}, {}};
  try {
    b.terms = text::TermIndex(ck.meta.at("terms").get<std::vector<std::string>>());
    b.extra = ck.meta.value("extra", json::object());
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("checkpoint term list: {}", e.what()));
  }
  if (b.terms.size() != config.classes) {
    throw FormatError(fmt::format("{} terms for {} classes", b.terms.size(), config.classes));
  }
  assign(b.model.parameters(), ck.tensors);
  return b;
}

void save_seqgen(const std::filesystem::path& path, const seqgen::SeqGenModel& model,
                 const text::Vocabulary& vocab, const json& extra) {
  Checkpoint ck;
  ck.kind = "seqgen";
  ck.meta["config"] = to_json(model.config());
  ck.meta["vocab"] = vocab.tokens();
  ck.meta["extra"] = extra;
  ck.tensors = store(model.parameters());
  save_checkpoint(path, ck);
}

SeqGenBundle load_seqgen(const std::filesystem::path& path, const seqgen::SeqGenConfig* expected) {
  auto ck = load_checkpoint(path);
  require_kind(ck, "seqgen");
  auto config = seqgen_config_from_json(ck.meta.at("config"));
  if (expected && !(expected->resolved() == config)) {
    throw FormatError("checkpoint was written with a different sequence model config");
  }
  Rng rng(0);
  SeqGenBundle b{seqgen::SeqGenModel(config, rng), vocab_from(ck.meta, config.vocab_size),
                 ck.meta.value("extra", json::object())};
  assign(b.model.parameters(), ck.tensors);
  return b;
}

}  // namespace meshgen::dataio
