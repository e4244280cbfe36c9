// train-concepts and predict-concepts.

#include <algorithm>
#include <map>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "commands.hpp"
#include "common.hpp"
#include "meshgen/checkpoint.hpp"
#include "meshgen/cli.hpp"
#include "meshgen/error.hpp"
#include "meshgen/log.hpp"
#include "meshgen/pipeline.hpp"
#include "meshgen/textcnn.hpp"

namespace meshgen::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using pipeline::Example;

namespace {

textcnn::TextCnnConfig config_from(const TrainConceptsOptions& o) {
  if (o.lambda.size() != 3) throw ConfigError("--lambda takes three weights");
  textcnn::TextCnnConfig c;
  c.embed_dim = o.embed_dim;
  c.filter_widths = o.filter_widths;
  c.maps_per_width = o.maps_per_width;
  c.branch_units = o.branch_units;
  c.dropout = o.dropout;
  c.loss = {o.lambda[0], o.lambda[1], o.lambda[2]};
  c.seq_len = o.seq_len;
  return c;
}

void check_options(const TrainConceptsOptions& o) {
  auto c = config_from(o);
  c.vocab_size = text::kReservedIds + 1;  // placeholders until the data is read
  c.classes = 1;
  c.validate();
  if (o.gold_subset_size == 0) throw ConfigError("--gold-subset-size must be positive");
  if (o.epochs == 0 || o.batch_size == 0) throw ConfigError("--epochs and --batch-size must be positive");
  if (!(o.threshold > 0.0 && o.threshold < 1.0)) throw ConfigError("--threshold must lie in (0, 1)");
}

// Stratified: round-robin over primary-pathology groups (sorted by name),
// each group in seeded random order.
std::vector<std::size_t> sample_gold(const std::vector<Example>& examples, std::vector<std::size_t> pool,
                                     std::size_t size, const std::string& method, Rng& rng) {
  if (size > pool.size()) {
    throw ConfigError(fmt::format("--gold-subset-size {} exceeds the {} reports left after the validation/test splits",
                                  size, pool.size()));
  }
  rng.shuffle(std::span<std::size_t>(pool));
  if (method == "random") {
    pool.resize(size);
  } else {
    text::PathologyCounts counts;
    for (auto i : pool) text::count_pathologies(examples[i].captions, counts);
    std::map<std::string, std::vector<std::size_t>> groups;
    for (auto i : pool) {
      const auto& caps = examples[i].captions;
      groups[caps.empty() ? std::string() : text::select_primary_annotation(caps, counts).pathology].push_back(i);
    }
    std::vector<std::size_t> out;
    for (std::size_t round = 0; out.size() < size; ++round) {
      for (auto& [name, members] : groups) {
        if (round < members.size() && out.size() < size) out.push_back(members[round]);
      }
    }
    pool = std::move(out);
  }
  std::sort(pool.begin(), pool.end());
  return pool;
}

textcnn::LabeledReport labeled(const Example& e, const text::Vocabulary& vocab, const text::TermIndex& terms) {
  textcnn::LabeledReport r;
  for (const auto& seg : e.report.segments) {
    std::vector<int> ids;
    for (const auto& t : seg) ids.push_back(vocab.id(t));
    r.segments.push_back(std::move(ids));
  }
  r.labels = text::to_label_vector(e.captions, terms);
  return r;
}

std::vector<std::vector<int>> padded_ids(std::span<const textcnn::LabeledReport> data, std::size_t len) {
  std::vector<std::vector<int>> out;
  for (const auto& r : data) out.push_back(textcnn::assemble_ids(r, {}, len));
  return out;
}

std::vector<std::vector<double>> predict_all(const textcnn::TextCnnModel& m,
                                             const std::vector<std::vector<int>>& ids, std::size_t batch) {
  std::vector<std::vector<double>> out;
  for (std::size_t s = 0; s < ids.size(); s += batch) {
    const std::size_t e = std::min(ids.size(), s + batch);
    auto part = m.predict_scores(std::span(ids).subspan(s, e - s));
    for (auto& row : part) out.push_back(std::move(row));
  }
  return out;
}

json roles_json(const std::vector<pipeline::TermRole>& roles) {
  json a = json::array();
  for (const auto& r : roles) a.push_back({r.as_pathology, r.as_descriptor, r.mean_position});
  return a;
}

std::vector<pipeline::TermRole> roles_from(const json& a, std::size_t expected) {
  std::vector<pipeline::TermRole> out;
  try {
    for (const auto& r : a) out.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(), r.at(2).get<double>()});
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("checkpoint term roles: {}", e.what()));
  }
  if (out.size() != expected) throw FormatError("checkpoint term roles do not cover the term index");
  return out;
}

}  // namespace

int train_concepts(const TrainConceptsOptions& o, const std::string& config_echo, std::ostream& out) {
  check_options(o);
  const auto rules = load_negation_rules(o.negation_cues);
  std::vector<std::string> pathology_terms;
  if (!o.pathology_classes.empty()) pathology_terms = pipeline::read_list_file(o.pathology_classes);

  auto corpus = dataio::load_corpus(o.corpus);
  for (const auto& s : corpus.skipped) log::warn("{}:{}: skipped: {}", o.corpus, s.line, s.message);
  auto prepared = pipeline::prepare_corpus(corpus.records, rules, true);
  const auto& ex = prepared.examples;
  log::info("{} records, {} empty after negation removal, {} duplicates, {} kept", corpus.records.size(),
            prepared.empty_reports, prepared.duplicates, ex.size());

  const auto split = dataio::split_dataset(ex.size(), {o.seed, o.validation_count, o.test_count});
  Rng gold_rng = Rng(o.seed).fork();
  const auto gold = sample_gold(ex, split.train, o.gold_subset_size, o.gold_sampling, gold_rng);

  // vocabulary and label space come from the gold subset only
  std::map<std::string, std::size_t> counts;
  std::set<std::string> term_set;
  std::vector<Example> gold_examples;
  for (auto i : gold) {
    for (const auto& t : ex[i].report.tokens()) ++counts[t];
    for (const auto& c : ex[i].captions) {
      for (const auto& t : c.terms()) term_set.insert(t);
    }
    gold_examples.push_back(ex[i]);
  }
  if (term_set.empty()) throw DataError("the gold subset carries no MeSH terms");
  const auto vocab = text::Vocabulary::build(counts, o.min_count);
  const text::TermIndex terms(std::vector<std::string>(term_set.begin(), term_set.end()));
  const auto roles = pipeline::term_roles(gold_examples, terms);

  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<textcnn::LabeledReport> v;
    for (auto i : idx) v.push_back(labeled(ex[i], vocab, terms));
    return v;
  };
  const auto train = gather(gold), val = gather(split.validation), test = gather(split.test);

  auto config = config_from(o);
  config.vocab_size = vocab.size();
  config.classes = terms.size();
  config.validate();
  textcnn::TrainSchedule sched{o.epochs, o.batch_size, o.learning_rate, o.patience,
                               o.loss == "bce" ? textcnn::LossKind::PlainBce : textcnn::LossKind::Modified};
  log::info("training text CNN: {} gold reports, {} validation, vocabulary {}, {} classes", train.size(), val.size(),
            vocab.size(), terms.size());
  auto result = textcnn::train_textcnn(train, val, config, sched, o.seed);

  // held-out metrics (test split, or validation when there is no test split)
  const bool on_test = !test.empty();
  const auto& eval_set = on_test ? test : val;
  const auto& eval_idx = on_test ? split.test : split.validation;
  const auto scores = predict_all(result.model, padded_ids(eval_set, config.seq_len), 256);
  std::vector<text::LabelVector> pred, truth;
  pipeline::LabelFile pred_file{terms.terms(), {}}, truth_file{terms.terms(), {}};
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    pred.push_back(textcnn::predict_labels(scores[i], o.threshold));
    truth.push_back(eval_set[i].labels);
    pred_file.rows.push_back({ex[eval_idx[i]].exam_id, pipeline::label_terms(pred.back(), terms)});
    truth_file.rows.push_back({ex[eval_idx[i]].exam_id, pipeline::label_terms(truth.back(), terms)});
  }
  const auto policy = parse_policy(o.undefined);
  KeyValues kv{{"split", on_test ? "test" : "validation"}, {"samples", std::to_string(eval_set.size())}};
  append_report(kv, "all", metrics::classification_report(pred, truth, policy));
  if (!pathology_terms.empty()) {
    const auto cols = term_columns(pathology_terms, terms);
    append_report(kv, "pathology", metrics::classification_report(pred, truth, cols, policy));
  }

  const auto dir = make_out_dir(o.out);
  std::vector<std::string> gold_ids;
  for (auto i : gold) gold_ids.push_back(ex[i].exam_id);
  json extra{{"gold_ids", gold_ids},
             {"term_roles", roles_json(roles)},
             {"negation_cues", rules.cues()},
             {"threshold", o.threshold},
             {"seed", o.seed}};
  dataio::save_textcnn(dir / "textcnn.ckpt", result.model, vocab, terms, extra);
  write_key_values(dir / "metrics.tsv", kv);
  std::string hist = "epoch\ttrain_loss\tval_loss\n";
  for (const auto& h : result.history) {
    hist += fmt::format("{}\t{}\t{}\n", h.epoch, format_value(h.train_loss), format_value(h.val_loss));
  }
  dataio::write_text_atomic(dir / "history.tsv", hist);
  std::string gold_txt;
  for (const auto& id : gold_ids) gold_txt += id + "\n";
  dataio::write_text_atomic(dir / "gold_ids.txt", gold_txt);
  pipeline::write_labels(dir / "labels_pred.tsv", pred_file);
  pipeline::write_labels(dir / "labels_truth.tsv", truth_file);
  dataio::write_text_atomic(dir / "config.toml", config_echo);

  out << fmt::format("text CNN: best epoch {} of {}, {} classes, vocabulary {}\n", result.best_epoch,
                     result.history.size(), terms.size(), vocab.size());
  out << render_table(kv);
  return kExitOk;
}

int predict_concepts(const PredictConceptsOptions& o, std::ostream& out) {
  if (!(o.threshold > 0.0 && o.threshold < 1.0)) throw ConfigError("--threshold must lie in (0, 1)");
  if (o.batch_size == 0) throw ConfigError("--batch-size must be positive");
  auto bundle = dataio::load_textcnn(o.model);
  const auto& extra = bundle.extra;
  std::vector<std::string> gold_ids, cues;
  std::vector<pipeline::TermRole> roles;
  try {
    gold_ids = extra.at("gold_ids").get<std::vector<std::string>>();
    cues = extra.at("negation_cues").get<std::vector<std::string>>();
    roles = roles_from(extra.at("term_roles"), bundle.terms.size());
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: not a train-concepts checkpoint ({})", o.model, e.what()));
  }
  const text::NegationRules rules(cues);

  auto corpus = dataio::load_corpus(o.corpus);
  for (const auto& s : corpus.skipped) log::warn("{}:{}: skipped: {}", o.corpus, s.line, s.message);
  const auto prepared = pipeline::prepare_corpus(corpus.records, rules, false);
  const auto& ex = prepared.examples;

  std::set<std::string> corpus_ids;
  for (const auto& e : ex) corpus_ids.insert(e.exam_id);
  for (const auto& id : gold_ids) {
    if (!corpus_ids.count(id)) {
      throw DataError(fmt::format("model/corpus mismatch: gold exam '{}' of the model is not in {}", id, o.corpus));
    }
  }
  std::size_t known = 0, total = 0;
  for (const auto& e : ex) {
    for (const auto& t : e.report.tokens()) {
      ++total;
      known += bundle.vocab.contains(t) ? 1 : 0;
    }
  }
  const double coverage = total ? static_cast<double>(known) / static_cast<double>(total) : 1.0;
  if (coverage < o.min_vocab_coverage) {
    throw DataError(fmt::format("model/corpus vocabulary mismatch: only {:.1f}% of corpus tokens are known to the model",
                                100.0 * coverage));
  }

  const std::set<std::string> gold(gold_ids.begin(), gold_ids.end());
  const auto& cfg = bundle.model.config();
  std::vector<std::size_t> todo;
  std::vector<std::vector<int>> ids;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    if (gold.count(ex[i].exam_id)) continue;
    todo.push_back(i);
    ids.push_back(text::tokenize_and_pad(ex[i].report.tokens(), bundle.vocab, cfg.seq_len).ids);
  }
  const auto scores = predict_all(bundle.model, ids, o.batch_size);

  std::vector<pipeline::AnnotationRow> rows(ex.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    rows[i].exam_id = ex[i].exam_id;
    rows[i].image_refs = ex[i].image_refs;
    if (gold.count(ex[i].exam_id)) {
      rows[i].source = pipeline::Source::Gold;
      rows[i].mesh = ex[i].mesh_raw;
      rows[i].labels = pipeline::label_terms(text::to_label_vector(ex[i].captions, bundle.terms), bundle.terms);
    }
  }
  std::size_t empty = 0;
  for (std::size_t j = 0; j < todo.size(); ++j) {
    auto& row = rows[todo[j]];
    const auto labels = textcnn::predict_labels(scores[j], o.threshold);
    const auto caption = pipeline::caption_from_scores(scores[j], labels, bundle.terms, roles);
    row.source = pipeline::Source::Predicted;
    row.mesh = caption.pathology.empty() ? std::string() : caption.serialize();
    row.labels = pipeline::label_terms(labels, bundle.terms);
    empty += row.labels.empty() ? 1 : 0;
  }
  pipeline::write_annotations(o.out, rows);
  out << fmt::format("{} rows: {} gold, {} predicted ({} with no label over threshold {}), vocabulary coverage {:.1f}%\n",
                     rows.size(), rows.size() - todo.size(), todo.size(), empty, o.threshold, 100.0 * coverage);
  return kExitOk;
}

}  // namespace meshgen::cli
