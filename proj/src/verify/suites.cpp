#include <algorithm>

#include <fmt/format.h>

#include "meshgen/error.hpp"
#include "meshgen/textcnn.hpp"
#include "meshgen/verify.hpp"

namespace meshgen::verify {

double SuiteResult::max_error() const {
  double m = 0.0;
  for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
  return m;
}

SuiteResult gradcheck_textcnn(std::uint64_t seed) {
  textcnn::TextCnnConfig c;
  c.vocab_size = 12;
  c.embed_dim = 4;
  c.filter_widths = {2, 3};
  c.maps_per_width = 3;
  c.branch_units = 4;
  c.classes = 5;
  c.seq_len = 7;
  c.dropout = 0.5;
  Rng rng(seed);
  textcnn::TextCnnModel model(c, rng);
  // biases start at zero; move them off the relu kinks
  for (auto& p : model.parameters()) {
    if (p.name.ends_with("bias") || p.name.ends_with("_b")) ag::init::uniform(p.tensor, -0.3, 0.3, rng);
  }

  std::vector<std::vector<int>> batch(2, std::vector<int>(c.seq_len));
  for (auto& ids : batch) {
    for (auto& id : ids) id = static_cast<int>(rng.below(c.vocab_size));
  }
  std::vector<text::LabelVector> labels{{1, 0, 0, 1, 0}, {0, 1, 1, 0, 1}};
  const std::uint64_t mask_seed = rng.next();

  auto loss = [&] {
    Rng mask(mask_seed);  // same dropout mask on every evaluation
    auto scores = model.forward(batch, textcnn::Mode::Train, mask);
    return textcnn::modified_sce_loss(scores, labels, c.loss);
  };
  return {"textcnn", check_blocks(loss, model.parameters())};
}

SuiteResult gradcheck_seqgen(seqgen::Variant variant, seqgen::Combine combine,
                             bool image_before_start, std::uint64_t seed) {
  seqgen::SeqGenConfig c;
  c.variant = variant;
  c.combine = combine;
  c.image_dim = 6;
  c.hidden = 5;
  c.word_dim = 4;
  c.transition_dim = variant == seqgen::Variant::Rnn0 ? 4 : 3;
  c.caption_length = 3;
  c.vocab_size = 9;
  c.image_before_start = image_before_start;
  Rng rng(seed);
  seqgen::SeqGenModel model(c, rng);
  for (auto& p : model.parameters()) {
    if (p.tensor.shape().size() == 1) ag::init::uniform(p.tensor, -0.3, 0.3, rng);
  }

  auto images = ag::Tensor::zeros({2, c.image_dim});
  ag::init::uniform(images, -1.0, 1.0, rng);
  const std::vector<std::vector<int>> captions{{4, 5, 6}, {7, 8, 0}};
  std::vector<std::vector<int>> targets;
  for (const auto& cap : captions) targets.push_back(seqgen::make_targets(cap, model.config().steps()));

  auto loss = [&] { return seqgen::sequence_loss(model.forward(images, captions), targets); };
  std::string name = fmt::format("seqgen.{}", seqgen::to_string(variant));
  if (variant != seqgen::Variant::Rnn0) name += "." + seqgen::to_string(combine);
  if (image_before_start) name += ".image_before_start";
  return {name, check_blocks(loss, model.parameters())};
}

std::vector<SuiteResult> gradcheck_module(std::string_view module, std::uint64_t seed) {
  using seqgen::Combine;
  using seqgen::Variant;
  if (module != "all" && module != "textcnn" && module != "seqgen") {
    throw ConfigError(fmt::format("unknown gradcheck module '{}' (all, textcnn, seqgen)", module));
  }
  std::vector<SuiteResult> out;
  if (module != "seqgen") out.push_back(gradcheck_textcnn(seed));
  if (module != "textcnn") {
    out.push_back(gradcheck_seqgen(Variant::Rnn0, Combine::Concat, false, seed));
    out.push_back(gradcheck_seqgen(Variant::Rnn0, Combine::Concat, true, seed));
    for (auto v : {Variant::Rnn1, Variant::Rnn2}) {
      for (auto cm : {Combine::Concat, Combine::Sum}) out.push_back(gradcheck_seqgen(v, cm, false, seed));
    }
  }
  return out;
}

}  // namespace meshgen::verify
