#include "synth.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>

#include <fmt/format.h>

namespace meshgen::synth {

KeywordCorpus keyword_corpus(std::size_t reports, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> filler;
  for (int i = 0; i < 24; ++i) filler.push_back(fmt::format("w{}", i));

  KeywordCorpus out;
  std::map<std::string, std::size_t> counts;
  std::vector<std::vector<std::vector<std::string>>> segmented;
  for (std::size_t r = 0; r < reports; ++r) {
    text::LabelVector labels(classes, 0);
    // cycle the first keyword so every class is present
    labels[r % classes] = 1;
    const std::size_t extra = rng.below(3);
    for (std::size_t e = 0; e < extra; ++e) labels[rng.below(classes)] = 1;

    std::vector<std::string> tokens;
    for (std::size_t k = 0; k < classes; ++k) {
      if (labels[k]) tokens.push_back(fmt::format("k{}", k));
    }
    const std::size_t n_fill = 4 + rng.below(10);
    for (std::size_t i = 0; i < n_fill; ++i) tokens.push_back(filler[rng.below(filler.size())]);
    rng.shuffle(std::span<std::string>(tokens));

    std::vector<std::vector<std::string>> segs;
    std::string text;
    for (std::size_t i = 0; i < tokens.size();) {
      const std::size_t len = std::min(tokens.size() - i, 2 + rng.below(4));
      segs.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                        tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
      for (std::size_t j = 0; j < len; ++j) text += (j ? " " : "") + tokens[i + j];
      text += ". ";
      i += len;
    }
    for (const auto& t : tokens) ++counts[t];
    segmented.push_back(std::move(segs));
    out.texts.push_back(text);
    out.reports.push_back({{}, std::move(labels)});
  }
  out.vocab = text::Vocabulary::build(counts);
  for (std::size_t r = 0; r < reports; ++r) {
    for (const auto& seg : segmented[r]) {
      std::vector<int> ids;
      for (const auto& t : seg) ids.push_back(out.vocab.id(t));
      out.reports[r].segments.push_back(std::move(ids));
    }
  }
  return out;
}

std::vector<std::string> sign_caption(const std::vector<double>& e) {
  static const std::array<std::string, 4> pathologies{"cardiomegaly", "effusion", "nodule", "opacity"};
  std::vector<std::string> c;
  c.push_back(pathologies[(e[0] > 0 ? 2U : 0U) + (e[1] > 0 ? 1U : 0U)]);
  c.push_back(e[2] > 0 ? "left" : "right");
  c.push_back(e[3] > 0 ? "upper" : "base");
  if (e[4] > 0) c.push_back("mild");
  return c;
}

SignCaptionSet sign_caption_set(std::size_t pairs, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  SignCaptionSet out;
  std::vector<std::vector<std::string>> captions;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < pairs; ++i) {
    std::vector<double> e(dim);
    for (auto& v : e) {
      // keep away from zero so the sign pattern is unambiguous
      v = rng.uniform(0.2, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    }
    captions.push_back(sign_caption(e));
    for (const auto& t : captions.back()) ++counts[t];
    out.pairs.push_back({fmt::format("img{:03}", i), std::move(e), {}});
  }
  out.vocab = text::Vocabulary::build(counts);
  for (std::size_t i = 0; i < pairs; ++i) {
    text::MeshAnnotation a{captions[i][0], {captions[i].begin() + 1, captions[i].end()}};
    out.pairs[i].caption = text::flatten(a, out.vocab);
  }
  return out;
}

namespace {

struct Finding {
  std::string pathology;
  std::vector<std::string> descriptors;
};

const std::vector<std::string>& pathology_names() {
  static const std::vector<std::string> p{"Cardiomegaly", "Opacity", "Pleural Effusion",
                                          "Atelectasis", "Nodule", "Emphysema"};
  return p;
}

Finding draw_finding(Rng& rng) {
  static const std::vector<std::string> severity{"mild", "moderate", "severe"};
  static const std::vector<std::string> side{"left", "right", "bilateral"};
  static const std::vector<std::string> region{"base", "upper lobe", "apex"};
  Finding f;
  const std::size_t p = rng.below(pathology_names().size());
  f.pathology = pathology_names()[p];
  // cardiomegaly/emphysema only take a severity; the others a location too
  f.descriptors.push_back(severity[rng.below(severity.size())]);
  if (p != 0 && p != 5) {
    f.descriptors.push_back(side[rng.below(side.size())]);
    f.descriptors.push_back(region[rng.below(region.size())]);
  }
  return f;
}

std::string sentence(const Finding& f) {
  if (f.descriptors.size() == 1) {
    return fmt::format("There is {} {}.", f.descriptors[0], f.pathology);
  }
  return fmt::format("{} {} noted in the {} {}.", f.descriptors[0], f.pathology, f.descriptors[1],
                     f.descriptors[2]);
}

std::string mesh(const Finding& f) {
  std::string s = f.pathology;
  for (const auto& d : f.descriptors) s += "/" + d;
  return s;
}

}  // namespace

ExamCorpus exam_corpus(std::size_t exams, std::uint32_t dim, std::uint64_t seed) {
  static const std::vector<std::string> filler{
      "Bony structures are intact.", "Comparison made with prior study.",
      "Heart size is stable", "Trachea is midline.", "Visualized osseous structures appear stable."};
  static const std::vector<std::string> negated{
      "No pneumothorax.", "There is no focal consolidation.", "Negative for acute fracture.",
      "Lungs are clear of edema.", "Without pleural thickening."};

  Rng rng(seed);
  // class prototypes in embedding space: one per pathology and descriptor
  std::map<std::string, std::vector<float>> proto;
  auto prototype = [&](const std::string& key) -> const std::vector<float>& {
    auto it = proto.find(key);
    if (it == proto.end()) {
      std::vector<float> v(dim);
      for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
      it = proto.emplace(key, std::move(v)).first;
    }
    return it->second;
  };
  for (const auto& p : pathology_names()) prototype(p);
  for (const auto& d : {"mild", "moderate", "severe", "left", "right", "bilateral", "base", "upper lobe", "apex"}) {
    prototype(d);
  }

  ExamCorpus out;
  out.embeddings.dim = dim;
  for (std::size_t e = 0; e < exams; ++e) {
    const Finding primary = draw_finding(rng);
    std::vector<std::string> sentences{sentence(primary)};
    std::string mesh_raw = mesh(primary);
    if (rng.bernoulli(0.2)) {
      Finding second = draw_finding(rng);
      if (second.pathology != primary.pathology) {
        sentences.push_back(sentence(second));
        mesh_raw += ", " + mesh(second);
      }
    }
    sentences.push_back(negated[rng.below(negated.size())]);
    sentences.push_back(filler[rng.below(filler.size())]);
    rng.shuffle(std::span<std::string>(sentences));
    std::string report;
    for (const auto& s : sentences) report += (report.empty() ? "" : " ") + s;

    dataio::CorpusRecord rec{fmt::format("exam{:04}", e), report, mesh_raw, {}};
    const std::size_t views = 1 + rng.below(2);
    for (std::size_t v = 0; v < views; ++v) {
      const std::string id = fmt::format("exam{:04}_{}", e, v == 0 ? "pa" : "lat");
      rec.image_refs.push_back(id);
      std::vector<float> emb(dim, 0.0F);
      for (std::size_t i = 0; i < dim; ++i) {
        float x = 2.0F * prototype(primary.pathology)[i];
        for (const auto& d : primary.descriptors) x += prototype(d)[i];
        emb[i] = x + static_cast<float>(rng.uniform(-0.1, 0.1));
      }
      out.embeddings.records.push_back({id, std::move(emb)});
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace meshgen::synth
