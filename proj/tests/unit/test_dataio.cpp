#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <unistd.h>

#include <gtest/gtest.h>

#include "meshgen/checkpoint.hpp"
#include "meshgen/dataio.hpp"
#include "meshgen/error.hpp"

using namespace meshgen;
using namespace meshgen::dataio;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("meshgen-dataio-" + std::to_string(::getpid()) + "-" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path path(const std::string& name) const { return dir_ / name; }
  void write(const std::string& name, const std::string& content) const {
    std::ofstream(path(name), std::ios::binary) << content;
  }
  fs::path dir_;
};

using CorpusTest = TempDir;
using EmbeddingTest = TempDir;
using CheckpointTest = TempDir;

EmbeddingFile sample_embeddings(std::size_t n, std::uint32_t dim, Rng& rng) {
  EmbeddingFile f{dim, {}};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-10, 10));
    f.records.push_back({"img-" + std::to_string(i), v});
  }
  return f;
}

text::Vocabulary small_vocab() {
  std::map<std::string, std::size_t> counts{{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}, {"e", 1}, {"f", 1}};
  return text::Vocabulary::build(counts);
}

textcnn::TextCnnConfig tiny_textcnn() {
  textcnn::TextCnnConfig c;
  c.vocab_size = 10;
  c.embed_dim = 3;
  c.filter_widths = {2, 3};
  c.maps_per_width = 2;
  c.branch_units = 2;
  c.classes = 3;
  c.seq_len = 6;
  return c;
}

}  // namespace

TEST_F(CorpusTest, ReadsValidFile) {
  write("c.tsv", "meshgen-corpus v1\n"
                 "e1\tNo effusion. Mild cardiomegaly.\tCardiomegaly/mild\ti1,i2\n"
                 "e2\tNormal chest.\tnormal\ti3\n"
                 "e3\tOpacity.\tOpacity/lung\t\n");
  auto c = load_corpus(path("c.tsv"));
  ASSERT_EQ(c.records.size(), 3u);
  EXPECT_EQ(c.records[0].image_refs, (std::vector<std::string>{"i1", "i2"}));
  EXPECT_TRUE(c.records[2].image_refs.empty());
  EXPECT_TRUE(c.skipped.empty());
}

TEST_F(CorpusTest, MalformedLineIsSkippedAndReported) {
  write("c.tsv", "meshgen-corpus v1\ne1\treport\tnormal\ti1\ne2\tno mesh field\n");
  auto c = load_corpus(path("c.tsv"));
  EXPECT_EQ(c.records.size(), 1u);
  ASSERT_EQ(c.skipped.size(), 1u);
  EXPECT_EQ(c.skipped[0].line, 3u);
}

TEST_F(CorpusTest, DuplicateIdIsFormatErrorNamingTheId) {
  write("c.tsv", "meshgen-corpus v1\nabc\tr\tnormal\ti1\nabc\tr2\tnormal\ti2\n");
  try {
    load_corpus(path("c.tsv"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
  }
}

TEST_F(CorpusTest, HeaderAndMissingFile) {
  write("c.tsv", "something else\n");
  EXPECT_THROW(load_corpus(path("c.tsv")), FormatError);
  EXPECT_THROW(load_corpus(path("nope.tsv")), IoError);
}

TEST_F(CorpusTest, WriteReadRoundTrip) {
  std::vector<CorpusRecord> recs{{"x1", "Heart normal.", "normal", {"a", "b"}}, {"x2", "Effusion", "Effusion/left", {}}};
  write_corpus(path("c.tsv"), recs);
  auto back = load_corpus(path("c.tsv")).records;
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].mesh_raw, "Effusion/left");
  EXPECT_EQ(back[0].image_refs, recs[0].image_refs);
}

TEST_F(EmbeddingTest, RoundTripIsBitwise) {
  EmbeddingFile f{4, {{"one", {1, 2, 3, 4}}}};
  write_embeddings(path("e.bin"), f);
  auto back = read_embeddings(path("e.bin"));
  EXPECT_EQ(back.dim, 4u);
  EXPECT_EQ(back.records, f.records);
  Rng rng(1);
  auto big = sample_embeddings(20, 2048, rng);
  big.records[3].values[7] = -0.0f;
  write_embeddings(path("b.bin"), big);
  auto b2 = read_embeddings(path("b.bin"));
  for (std::size_t i = 0; i < big.records.size(); ++i) {
    EXPECT_EQ(std::memcmp(b2.records[i].values.data(), big.records[i].values.data(), 2048 * sizeof(float)), 0);
  }
}

TEST_F(EmbeddingTest, ExactByteLayout) {
  EmbeddingFile f{2, {{"ab", {1.0f, -2.0f}}}};
  const auto bytes = encode_embeddings(f);
  ASSERT_EQ(bytes.size(), 6u + 12u + 2u + 2u + 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "IMEMB1");
  auto u32 = [&](std::size_t at) {
    return std::uint32_t(bytes[at]) | std::uint32_t(bytes[at + 1]) << 8 | std::uint32_t(bytes[at + 2]) << 16 |
           std::uint32_t(bytes[at + 3]) << 24;
  };
  EXPECT_EQ(u32(6), 1u);   // version
  EXPECT_EQ(u32(10), 1u);  // count
  EXPECT_EQ(u32(14), 2u);  // dim
  EXPECT_EQ(bytes[18], 2);
  EXPECT_EQ(bytes[19], 0);
  EXPECT_EQ(bytes[20], 'a');
  EXPECT_EQ(u32(22), std::bit_cast<std::uint32_t>(1.0f));
  EXPECT_EQ(u32(26), std::bit_cast<std::uint32_t>(-2.0f));
}

TEST_F(EmbeddingTest, EmptyFileIsValid) {
  write_embeddings(path("e.bin"), EmbeddingFile{2048, {}});
  auto back = read_embeddings(path("e.bin"));
  EXPECT_EQ(back.dim, 2048u);
  EXPECT_TRUE(back.records.empty());
}

TEST_F(EmbeddingTest, RejectsBadInput) {
  EmbeddingFile ragged{3, {{"a", {1, 2, 3}}, {"b", {1, 2}}}};
  EXPECT_THROW(encode_embeddings(ragged), DimensionError);
  EmbeddingFile dup{1, {{"a", {1}}, {"a", {2}}}};
  EXPECT_THROW(encode_embeddings(dup), ContractError);
  EmbeddingFile long_id{1, {{std::string(70000, 'x'), {1}}}};
  EXPECT_THROW(encode_embeddings(long_id), ContractError);

  auto bytes = encode_embeddings(EmbeddingFile{2, {{"a", {1, 2}}}});
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_embeddings(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[6] = 2;
  EXPECT_THROW(decode_embeddings(bad_version), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_embeddings(trailing), CorruptionError);
  EXPECT_FALSE(is_standard_embedding_dim(2));
  EXPECT_TRUE(is_standard_embedding_dim(4096));
}

TEST_F(EmbeddingTest, TruncationIsCorruptionWithOffset) {
  Rng rng(2);
  const auto bytes = encode_embeddings(sample_embeddings(3, 5, rng));
  try {
    decode_embeddings(std::span(bytes.data(), bytes.size() - 3));
    FAIL();
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    try {
      decode_embeddings(std::span(bytes.data(), len));
      ADD_FAILURE() << "accepted " << len << " bytes";
    } catch (const Error& e) {
      EXPECT_TRUE(e.kind() == ErrorKind::Format || e.kind() == ErrorKind::Corruption) << len;
    }
  }
}

TEST(Split, CountsAndDisjointness) {
  auto s = split_dataset(1000, {42, 300, 300});
  EXPECT_EQ(s.train.size(), 400u);
  EXPECT_EQ(s.validation.size(), 300u);
  EXPECT_EQ(s.test.size(), 300u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 1000u);
  EXPECT_EQ(*all.rbegin(), 999u);
}

TEST(Split, SeedBehaviour) {
  auto a = split_dataset(20, {7, 5, 5}), b = split_dataset(20, {7, 5, 5}), c = split_dataset(20, {8, 5, 5});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_NE(a.validation, c.validation);
  EXPECT_THROW(split_dataset(10, {1, 6, 5}), ContractError);
  const std::vector<int> items{1, 2, 3, 4};
  auto t = split_dataset(std::span<const int>(items), {1, 1, 1});
  EXPECT_EQ(t.train.size() + t.validation.size() + t.test.size(), 4u);
}

TEST(BalancedBatcher, UniformCyclingOverTwoSingletons) {
  std::vector<text::LabelVector> labels{{1, 0}, {0, 1}};
  BalancedBatcher b(labels, {1, 1}, Rng(1));
  for (int i = 0; i < 5; ++i) {
    auto batch = b.next_batch(4);
    ASSERT_EQ(batch.size(), 4u);
    std::size_t c0 = 0;
    for (const auto& it : batch) c0 += it.drawn_class == 0 ? 1 : 0;
    EXPECT_EQ(c0, 2u);
  }
  EXPECT_THROW(b.next_batch(0), ContractError);
}

TEST(BalancedBatcher, RepeatedInstancesAreShuffled) {
  std::vector<text::LabelVector> labels{{1}};
  BalancedBatcher b(labels, {4}, Rng(2));
  auto batch = b.next_batch(3);
  EXPECT_EQ(batch[0].segment_order, (std::vector<std::size_t>{0, 1, 2, 3}));
  for (std::size_t i = 1; i < 3; ++i) EXPECT_NE(batch[i].segment_order, batch[0].segment_order);
  b.new_epoch();
  EXPECT_EQ(b.next_batch(1)[0].segment_order, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(BalancedBatcher, ItemsBearTheirClassAndEmptyClassesAreSkipped) {
  std::vector<text::LabelVector> labels{{1, 0, 0}, {1, 1, 0}, {1, 0, 0}};
  BalancedBatcher b(labels, {1, 1, 1}, Rng(3));
  EXPECT_EQ(b.skipped_classes(), std::vector<std::size_t>{2});
  for (const auto& it : b.next_batch(64)) EXPECT_EQ(labels[it.instance][it.drawn_class], 1);
}

TEST(BalancedBatcher, SameSeedSameStream) {
  std::vector<text::LabelVector> labels{{1, 0, 1}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}};
  BalancedBatcher a(labels, {2, 3, 1, 2}, Rng(9)), b(labels, {2, 3, 1, 2}, Rng(9));
  for (int i = 0; i < 20; ++i) {
    auto x = a.next_batch(5), y = b.next_batch(5);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_EQ(x[k].instance, y[k].instance);
      EXPECT_EQ(x[k].segment_order, y[k].segment_order);
    }
  }
}

TEST(BalancedBatcher, EmpiricalClassFrequencyIsUniform) {
  Rng rng(4);
  std::vector<text::LabelVector> labels(60, text::LabelVector(5));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i][i % 5] = 1;  // every class present
    if (i < 40) labels[i][0] = 1;  // class 0 is heavily over-represented
  }
  BalancedBatcher b(labels, std::vector<std::size_t>(60, 2), Rng(5));
  std::vector<std::size_t> counts(5);
  const std::size_t batches = 1000, size = 16;
  for (std::size_t i = 0; i < batches; ++i) {
    for (const auto& it : b.next_batch(size)) ++counts[it.drawn_class];
  }
  for (auto c : counts) EXPECT_NEAR(static_cast<double>(c) / (batches * size), 0.2, 0.05 * 0.2);
}

TEST_F(CheckpointTest, TextCnnRoundTripReproducesForward) {
  Rng init(1);
  textcnn::TextCnnModel m(tiny_textcnn(), init);
  const auto vocab = small_vocab();
  const text::TermIndex terms({"x", "y", "z"});
  save_textcnn(path("m.ckpt"), m, vocab, terms, {{"note", "hello"}});
  auto b = load_textcnn(path("m.ckpt"));
  EXPECT_EQ(b.model.config(), m.config());
  EXPECT_EQ(b.vocab, vocab);
  EXPECT_EQ(b.terms.terms(), terms.terms());
  EXPECT_EQ(b.extra["note"], "hello");
  const std::vector<std::vector<int>> probe{{4, 5, 6, 7, 8, 9}, {1, 0, 0, 0, 0, 0}};
  EXPECT_EQ(b.model.predict_scores(probe), m.predict_scores(probe));
}

TEST_F(CheckpointTest, SeqGenRoundTripReproducesForward) {
  seqgen::SeqGenConfig c;
  c.variant = seqgen::Variant::Rnn2;
  c.image_dim = 5;
  c.hidden = 4;
  c.word_dim = 3;
  c.transition_dim = 4;
  c.vocab_size = 10;
  Rng init(2);
  seqgen::SeqGenModel m(c, init);
  save_seqgen(path("s.ckpt"), m, small_vocab());
  auto b = load_seqgen(path("s.ckpt"));
  const std::vector<double> img{0.1, -0.4, 0.9, 0.3, -0.2};
  auto g1 = seqgen::greedy_generate(m, img), g2 = seqgen::greedy_generate(b.model, img);
  EXPECT_EQ(g1.tokens, g2.tokens);
  EXPECT_EQ(g1.distributions, g2.distributions);
  EXPECT_THROW(load_textcnn(path("s.ckpt")), FormatError);
}

TEST_F(CheckpointTest, DifferentConfigIsFormatError) {
  Rng init(1);
  textcnn::TextCnnModel m(tiny_textcnn(), init);
  save_textcnn(path("m.ckpt"), m, small_vocab(), text::TermIndex({"x", "y", "z"}));
  auto other = tiny_textcnn();
  other.maps_per_width = 3;
  EXPECT_THROW(load_textcnn(path("m.ckpt"), &other), FormatError);
  auto same = tiny_textcnn();
  EXPECT_NO_THROW(load_textcnn(path("m.ckpt"), &same));
}

TEST_F(CheckpointTest, VersionMismatchNamesBothVersions) {
  Checkpoint c{"test", {}, {{"w", {2}, {1.0, 2.0}}}};
  auto bytes = encode_checkpoint(c);
  bytes[6] = 9;
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('9'), std::string::npos) << msg;
    EXPECT_NE(msg.find('1'), std::string::npos) << msg;
  }
}

TEST_F(CheckpointTest, AnyFlippedByteOrTruncationIsRejected) {
  Checkpoint c{"test", {{"k", 1}}, {{"w", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"b", {3}, {0.5, 0.25, 0.125}}}};
  const auto bytes = encode_checkpoint(c);
  auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.tensors[0].values, c.tensors[0].values);
  EXPECT_EQ(back.meta["k"], 1);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x20;
    try {
      decode_checkpoint(bad);
      ADD_FAILURE() << "flip at " << i << " accepted";
    } catch (const Error& e) {
      EXPECT_TRUE(e.kind() == ErrorKind::Format || e.kind() == ErrorKind::Corruption);
    }
  }
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    EXPECT_ANY_THROW(decode_checkpoint(std::span(bytes.data(), len)));
  }
}

TEST_F(CheckpointTest, WritesAreAtomic) {
  write_text_atomic(path("t.txt"), "first");
  write_text_atomic(path("t.txt"), "second");
  EXPECT_FALSE(fs::exists(path("t.txt.tmp")));
  const auto bytes = read_file(path("t.txt"));
  EXPECT_EQ(std::string(bytes.begin(), bytes.end()), "second");
  EXPECT_THROW(read_file(path("absent")), IoError);
}
