#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <gtest/gtest.h>

#include "meshgen/error.hpp"
#include "meshgen/pipeline.hpp"

using namespace meshgen;
using namespace meshgen::pipeline;
namespace fs = std::filesystem;

namespace {

class PipelineFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("meshgen-pipeline-" + std::to_string(::getpid()) + "-" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path path(const std::string& n) const { return dir_ / n; }
  void write(const std::string& n, const std::string& s) const { std::ofstream(path(n)) << s; }
  fs::path dir_;
};

}  // namespace

TEST(PrepareCorpus, DedupDropsEmptyAndRepeatedPairs) {
  std::vector<dataio::CorpusRecord> recs{
      {"e1", "Mild cardiomegaly. No effusion.", "Cardiomegaly/mild", {"i1"}},
      {"e2", "MILD cardiomegaly!", "cardiomegaly/Mild", {"i2"}},  // same normalized pair
      {"e3", "Mild cardiomegaly.", "Cardiomegaly/severe", {"i3"}},  // same report, other MeSH
      {"e4", "No acute disease.", "normal", {"i4"}},               // empty after negation removal
  };
  auto kept = prepare_corpus(recs, {}, true);
  ASSERT_EQ(kept.examples.size(), 2u);
  EXPECT_EQ(kept.examples[0].exam_id, "e1");
  EXPECT_EQ(kept.examples[1].exam_id, "e3");
  EXPECT_EQ(kept.duplicates, 1u);
  EXPECT_EQ(kept.empty_reports, 1u);
  EXPECT_EQ(kept.examples[0].report.joined(), "mild cardiomegaly");
  EXPECT_EQ(kept.examples[0].captions[0].descriptors, std::vector<std::string>{"mild"});

  auto all = prepare_corpus(recs, {}, false);
  EXPECT_EQ(all.examples.size(), 4u);
}

TEST_F(PipelineFiles, ListFiles) {
  write("l.txt", "# comment\nNegative For\n\n  Effusion  \n");
  EXPECT_EQ(read_list_file(path("l.txt")), (std::vector<std::string>{"negative for", "effusion"}));
  write("ids.txt", "# ids\nCXR1_1_IM-0001\n  x.y \n");
  EXPECT_EQ(read_id_list(path("ids.txt")), (std::vector<std::string>{"CXR1_1_IM-0001", "x.y"}));
}

TEST_F(PipelineFiles, AnnotationsRoundTrip) {
  std::vector<AnnotationRow> rows{{"e1", Source::Gold, "cardiomegaly/mild", {"cardiomegaly", "mild"}, {"i1", "i2"}},
                                  {"e2", Source::Predicted, "", {}, {}}};
  write_annotations(path("a.tsv"), rows);
  EXPECT_EQ(read_header(path("a.tsv")), kAnnotationsHeader);
  auto back = read_annotations(path("a.tsv"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].image_refs, rows[0].image_refs);
  EXPECT_EQ(back[0].labels, rows[0].labels);
  EXPECT_EQ(back[1].source, Source::Predicted);
  EXPECT_TRUE(back[1].labels.empty());
}

TEST_F(PipelineFiles, AnnotationsRejectMalformedRows) {
  write("a.tsv", std::string(kAnnotationsHeader) + "\ne1\tgold\tx\tx\ti1\ne2\tmaybe\tx\tx\ti2\n");
  try {
    read_annotations(path("a.tsv"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  write("b.tsv", std::string(kAnnotationsHeader) + "\ne1\tgold\tx\tx\ti1\ne1\tpred\tx\tx\ti2\n");
  EXPECT_THROW(read_annotations(path("b.tsv")), FormatError);
  write("c.tsv", "meshgen-captions v1\n");
  EXPECT_THROW(read_annotations(path("c.tsv")), FormatError);
}

TEST_F(PipelineFiles, CaptionsAndLabelsRoundTrip) {
  std::vector<CaptionRow> caps{{"i1", {"opacity", "lung", "base"}}, {"i2", {}}};
  write_captions(path("c.tsv"), caps);
  auto cb = read_captions(path("c.tsv"));
  ASSERT_EQ(cb.size(), 2u);
  EXPECT_EQ(cb[0].terms, caps[0].terms);
  EXPECT_TRUE(cb[1].terms.empty());

  LabelFile lf{{"a", "b", "c"}, {{"e1", {"a", "c"}}, {"e2", {}}}};
  write_labels(path("l.tsv"), lf);
  auto lb = read_labels(path("l.tsv"));
  EXPECT_EQ(lb.classes, lf.classes);
  ASSERT_EQ(lb.rows.size(), 2u);
  EXPECT_EQ(lb.rows[0].terms, lf.rows[0].terms);

  EXPECT_THROW(read_header(path("missing")), IoError);
}

TEST(TermRoles, CountsAndPositions) {
  std::vector<dataio::CorpusRecord> recs{{"e1", "a", "Opacity/lung/base, Effusion/left", {}},
                                         {"e2", "b", "Opacity/base", {}},
                                         {"e3", "c", "Lung", {}}};
  auto ex = prepare_corpus(recs, {}, false).examples;
  text::TermIndex idx({"base", "effusion", "left", "lung", "opacity"});
  auto roles = term_roles(ex, idx);
  EXPECT_EQ(roles[4].as_pathology, 2u);
  EXPECT_TRUE(roles[4].is_pathology());
  EXPECT_EQ(roles[0].as_descriptor, 2u);
  EXPECT_DOUBLE_EQ(roles[0].mean_position, 0.5);
  EXPECT_EQ(roles[3].as_pathology, 1u);  // "lung": one pathology use, one descriptor use
  EXPECT_TRUE(roles[3].is_pathology());
}

TEST(CaptionFromScores, PicksPathologyThenOrderedDescriptors) {
  text::TermIndex idx({"base", "effusion", "left", "lung", "opacity"});
  std::vector<TermRole> roles(5);
  roles[0] = {0, 4, 1.0};
  roles[1] = {5, 0, 0.0};
  roles[2] = {0, 3, 2.0};
  roles[3] = {0, 6, 0.0};
  roles[4] = {9, 0, 0.0};
  const std::vector<double> scores{0.9, 0.6, 0.7, 0.8, 0.55};
  const text::LabelVector pred{1, 1, 1, 1, 1};
  auto a = caption_from_scores(scores, pred, idx, roles);
  EXPECT_EQ(a.pathology, "effusion");
  EXPECT_EQ(a.descriptors, (std::vector<std::string>{"lung", "base", "left"}));
  EXPECT_EQ(caption_from_scores(scores, pred, idx, roles, 1).descriptors, std::vector<std::string>{"lung"});

  // nothing predicted: fall back to the best-scoring pathology, no descriptors
  const text::LabelVector none(5, 0);
  auto b = caption_from_scores(scores, none, idx, roles);
  EXPECT_EQ(b.pathology, "effusion");
  EXPECT_TRUE(b.descriptors.empty());
  EXPECT_THROW(caption_from_scores(std::vector<double>{0.1}, none, idx, roles), DimensionError);
  EXPECT_EQ(label_terms({1, 0, 0, 1, 0}, idx), (std::vector<std::string>{"base", "lung"}));
}
