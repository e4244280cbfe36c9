// train-generator and generate.

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "commands.hpp"
#include "common.hpp"
#include "meshgen/checkpoint.hpp"
#include "meshgen/cli.hpp"
#include "meshgen/error.hpp"
#include "meshgen/log.hpp"
#include "meshgen/metrics.hpp"
#include "meshgen/pipeline.hpp"
#include "meshgen/seqgen.hpp"

namespace meshgen::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

seqgen::SeqGenConfig config_from(const TrainGeneratorOptions& o) {
  seqgen::SeqGenConfig c;
  c.variant = seqgen::parse_variant(o.variant);
  c.combine = seqgen::parse_combine(o.combine);
  c.hidden = o.hidden;
  c.word_dim = o.word_dim;
  c.transition_dim = o.transition_dim;
  c.caption_length = o.caption_length;
  c.image_before_start = o.image_before_start;
  return c;
}

struct Exam {
  std::string id;
  std::vector<std::string> image_ids;
  std::vector<text::MeshAnnotation> captions;
};

struct Stage2Pair {
  std::string image_id;
  std::vector<double> embedding;
  text::MeshAnnotation caption;
};

std::vector<std::string> truncated_terms(const text::MeshAnnotation& a, std::size_t len) {
  auto t = a.terms();
  if (t.size() > len) t.resize(len);
  return t;
}

std::vector<std::string> decode(std::span<const int> ids, const text::Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

std::unordered_map<std::string, const dataio::EmbeddingRecord*> index_embeddings(const dataio::EmbeddingFile& f) {
  std::unordered_map<std::string, const dataio::EmbeddingRecord*> m;
  for (const auto& r : f.records) m.emplace(r.id, &r);
  return m;
}

std::array<double, 4> bleu_of(const seqgen::SeqGenModel& model, const text::Vocabulary& vocab,
                              std::span<const Stage2Pair> pairs) {
  std::vector<metrics::BleuPair> bp;
  for (const auto& p : pairs) {
    auto gen = seqgen::greedy_generate(model, p.embedding);
    bp.push_back({decode(gen.tokens, vocab), {truncated_terms(p.caption, model.config().caption_length)}});
  }
  return metrics::corpus_bleu_report(bp).bleu;
}

}  // namespace

int train_generator(const TrainGeneratorOptions& o, const std::string& config_echo, std::ostream& out) {
  {
    auto probe = config_from(o);  // config errors before touching data
    probe.vocab_size = text::kReservedIds + 1;
    probe.resolved().validate();
    if (o.epochs == 0 || o.batch_size == 0) throw ConfigError("--epochs and --batch-size must be positive");
  }
  const auto rows = pipeline::read_annotations(o.annotations);
  const auto emb = dataio::read_embeddings(o.embeddings);
  const auto by_id = index_embeddings(emb);

  std::vector<Exam> exams;
  std::size_t unannotated = 0;
  for (const auto& r : rows) {
    if (o.sources == "gold" && r.source != pipeline::Source::Gold) continue;
    Exam e{r.exam_id, r.image_refs.empty() ? std::vector<std::string>{r.exam_id} : r.image_refs,
           text::parse_mesh(r.mesh)};
    if (e.captions.empty()) {
      ++unannotated;
      continue;
    }
    for (const auto& img : e.image_ids) {
      if (!by_id.count(img)) {
        throw DataError(fmt::format("no embedding for image '{}' (exam '{}') in {}", img, e.id, o.embeddings));
      }
    }
    exams.push_back(std::move(e));
  }
  if (unannotated) log::warn("{} exams without a usable annotation skipped", unannotated);

  const auto split = dataio::split_dataset(exams.size(), {o.seed, o.validation_count, o.test_count});
  text::PathologyCounts counts;
  for (auto i : split.train) text::count_pathologies(exams[i].captions, counts);
  std::map<std::string, std::size_t> term_counts;
  for (auto i : split.train) {
    const auto& primary = text::select_primary_annotation(exams[i].captions, counts);
    for (const auto& t : truncated_terms(primary, o.caption_length)) ++term_counts[t];
  }
  const auto vocab = text::Vocabulary::build(term_counts, o.min_count);

  auto pairs_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<Stage2Pair> v;
    for (auto i : idx) {
      const auto& primary = text::select_primary_annotation(exams[i].captions, counts);
      for (const auto& img : exams[i].image_ids) {
        const auto& vals = by_id.at(img)->values;
        v.push_back({img, std::vector<double>(vals.begin(), vals.end()), primary});
      }
    }
    return v;
  };
  const auto train = pairs_of(split.train), val = pairs_of(split.validation), test = pairs_of(split.test);
  auto to_model = [&](const std::vector<Stage2Pair>& v) {
    std::vector<seqgen::CaptionedImage> d;
    for (const auto& p : v) d.push_back({p.image_id, p.embedding, text::flatten(p.caption, vocab, o.caption_length)});
    return d;
  };

  auto config = config_from(o);
  config.image_dim = emb.dim;
  config.vocab_size = vocab.size();
  config = config.resolved();
  config.validate();
  seqgen::TrainSchedule sched{o.epochs, o.batch_size, o.learning_rate, o.patience, o.bleu_every, std::nullopt};
  if (o.target_train_bleu1 > 0.0) sched.target_train_bleu1 = o.target_train_bleu1;
  log::info("training {} ({}): {} train / {} validation images, {} caption terms", o.variant, o.combine,
            train.size(), val.size(), vocab.size());
  auto result = seqgen::train_seqgen(to_model(train), to_model(val), config, sched, o.seed);

  const auto dir = make_out_dir(o.out);
  dataio::save_seqgen(dir / "seqgen.ckpt", result.model, vocab, json{{"seed", o.seed}});

  std::string hist = "epoch\ttrain_loss\tval_loss\ttrain_bleu1\n";
  for (const auto& h : result.history) {
    hist += fmt::format("{}\t{}\t{}\t{}\n", h.epoch, format_value(h.train_loss), format_value(h.val_loss),
                        h.train_bleu1 ? format_value(*h.train_bleu1) : "-");
  }
  dataio::write_text_atomic(dir / "history.tsv", hist);

  std::string bleu = "split\tpairs\tbleu1\tbleu2\tbleu3\tbleu4\n";
  out << fmt::format("{} ({}): best epoch {} of {}\n", o.variant, o.combine, result.best_epoch, result.history.size());
  out << fmt::format("  {:<10} {:>6} {:>8} {:>8} {:>8} {:>8}\n", "split", "pairs", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4");
  const std::array<std::pair<const char*, const std::vector<Stage2Pair>*>, 3> splits{
      {{"train", &train}, {"validation", &val}, {"test", &test}}};
  for (const auto& [name, pairs] : splits) {
    std::vector<pipeline::CaptionRow> truth;
    for (const auto& p : *pairs) truth.push_back({p.image_id, truncated_terms(p.caption, o.caption_length)});
    pipeline::write_captions(dir / fmt::format("captions_{}.tsv", name), truth);
    if (pairs->empty()) continue;
    const auto b = bleu_of(result.model, vocab, *pairs);
    bleu += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", name, pairs->size(), format_value(b[0]), format_value(b[1]),
                        format_value(b[2]), format_value(b[3]));
    out << fmt::format("  {:<10} {:>6} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f}\n", name, pairs->size(), b[0], b[1], b[2],
                       b[3]);
  }
  dataio::write_text_atomic(dir / "bleu.tsv", bleu);
  dataio::write_text_atomic(dir / "config.toml", config_echo);
  return kExitOk;
}

int generate(const GenerateOptions& o, std::ostream& out) {
  if (o.temperature < 0.0) throw ConfigError("--temperature must be non-negative");
  const auto bundle = dataio::load_seqgen(o.model);
  const auto emb = dataio::read_embeddings(o.embeddings);
  const auto& cfg = bundle.model.config();
  if (emb.dim != cfg.image_dim) {
    throw DataError(fmt::format("{} holds {}-wide embeddings, the model expects {}", o.embeddings, emb.dim,
                                cfg.image_dim));
  }
  std::vector<const dataio::EmbeddingRecord*> todo;
  if (o.ids.empty()) {
    for (const auto& r : emb.records) todo.push_back(&r);
  } else {
    const auto by_id = index_embeddings(emb);
    std::vector<std::string> wanted;
    if (pipeline::read_header(o.ids) == pipeline::kCaptionsHeader) {
      for (const auto& r : pipeline::read_captions(o.ids)) wanted.push_back(r.id);
    } else {
      wanted = pipeline::read_id_list(o.ids);
    }
    for (const auto& id : wanted) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError(fmt::format("no embedding for id '{}' in {}", id, o.embeddings));
      todo.push_back(it->second);
    }
  }

  Rng rng(o.seed);
  seqgen::GenerateOptions gopt{o.temperature, &rng};
  std::vector<pipeline::CaptionRow> rows;
  std::size_t empty = 0;
  for (const auto* r : todo) {
    const std::vector<double> image(r->values.begin(), r->values.end());
    const auto gen = seqgen::greedy_generate(bundle.model, image, gopt);
    rows.push_back({r->id, decode(gen.tokens, bundle.vocab)});
    empty += gen.tokens.empty() ? 1 : 0;
  }
  pipeline::write_captions(o.out, rows);
  out << fmt::format("{} captions written ({} empty)\n", rows.size(), empty);
  return kExitOk;
}

}  // namespace meshgen::cli
