#pragma once

// Synthetic corpora with known structure, for overfit oracles and the
// end-to-end smoke test.

#include <cstdint>
#include <string>
#include <vector>

#include "meshgen/dataio.hpp"
#include "meshgen/seqgen.hpp"
#include "meshgen/text.hpp"
#include "meshgen/textcnn.hpp"

namespace meshgen::synth {

// Reports whose label set is exactly the set of keyword tokens k0..k{classes-1}
// they contain; the remaining tokens are filler.
struct KeywordCorpus {
  text::Vocabulary vocab;
  std::vector<textcnn::LabeledReport> reports;
  std::vector<std::string> texts;
};
KeywordCorpus keyword_corpus(std::size_t reports, std::size_t classes, std::uint64_t seed);

// Random embeddings in [-1, 1]^dim whose caption is a function of the sign
// pattern of the first five coordinates.
struct SignCaptionSet {
  text::Vocabulary vocab;
  std::vector<seqgen::CaptionedImage> pairs;
};
std::vector<std::string> sign_caption(const std::vector<double>& embedding);
SignCaptionSet sign_caption_set(std::size_t pairs, std::size_t dim, std::uint64_t seed);

// Radiology-flavoured corpus: each exam has a primary finding (plus an
// occasional second caption), a report mentioning it with negated filler
// sentences, and one or two images whose embeddings encode the primary
// caption plus noise.
struct ExamCorpus {
  std::vector<dataio::CorpusRecord> records;
  dataio::EmbeddingFile embeddings;
};
ExamCorpus exam_corpus(std::size_t exams, std::uint32_t dim, std::uint64_t seed);

}  // namespace meshgen::synth
