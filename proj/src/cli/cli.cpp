#include "meshgen/cli.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "meshgen/error.hpp"

namespace meshgen::cli {

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::Contract:
      return kExitConfig;
    case ErrorKind::Divergence:
      return kExitDivergence;
    default:
      return kExitData;
  }
}

// Resolved options of the chosen subcommand as a config file section that
// `--config` reads back.
std::string echo_config(const CLI::App& sub) {
  std::istringstream in(sub.config_to_str(true, false));
  std::string out = "[" + sub.get_name() + "]\n";
  for (std::string line; std::getline(in, line);) {
    if (line.ends_with("=\"\"")) continue;  // unset optional paths
    out += line + "\n";
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MeSH concept extraction and image-conditioned caption generation"};
  app.set_config("--config", "", "Read options from a TOML file (flags override it)");
  app.fallthrough();
  app.require_subcommand(1);

  TrainConceptsOptions tc;
  auto* c1 = app.add_subcommand("train-concepts", "Train the text CNN concept extractor on a gold subset");
  c1->option_defaults()->always_capture_default();
  c1->add_option("--corpus", tc.corpus, "Corpus file")->required();
  c1->add_option("--out", tc.out, "Output directory")->required();
  c1->add_option("--gold-subset-size", tc.gold_subset_size, "Annotated reports used for training");
  c1->add_option("--gold-sampling", tc.gold_sampling, "random or stratified (by primary pathology)")
      ->check(CLI::IsMember({"random", "stratified"}));
  c1->add_option("--seed", tc.seed);
  c1->add_option("--validation-count", tc.validation_count);
  c1->add_option("--test-count", tc.test_count);
  c1->add_option("--min-count", tc.min_count, "Vocabulary frequency floor");
  c1->add_option("--negation-cues", tc.negation_cues, "File with one negation cue per line");
  c1->add_option("--pathology-classes", tc.pathology_classes, "File listing the pathology terms");
  c1->add_option("--embed-dim", tc.embed_dim);
  c1->add_option("--filter-widths", tc.filter_widths);
  c1->add_option("--maps-per-width", tc.maps_per_width);
  c1->add_option("--branch-units", tc.branch_units);
  c1->add_option("--dropout", tc.dropout);
  c1->add_option("--lambda", tc.lambda, "Loss weights: BCE, soft recall, soft TNR")->expected(3);
  c1->add_option("--seq-len", tc.seq_len);
  c1->add_option("--epochs", tc.epochs);
  c1->add_option("--batch-size", tc.batch_size);
  c1->add_option("--lr", tc.learning_rate);
  c1->add_option("--patience", tc.patience);
  c1->add_option("--loss", tc.loss, "modified or bce")->check(CLI::IsMember({"modified", "bce"}));
  c1->add_option("--threshold", tc.threshold);
  c1->add_option("--undefined", tc.undefined, "exclude or zero")->check(CLI::IsMember({"exclude", "zero"}));

  PredictConceptsOptions pc;
  auto* c2 = app.add_subcommand("predict-concepts", "Annotate the non-gold reports with predicted MeSH captions");
  c2->option_defaults()->always_capture_default();
  c2->add_option("--model", pc.model, "textcnn.ckpt from train-concepts")->required();
  c2->add_option("--corpus", pc.corpus)->required();
  c2->add_option("--out", pc.out, "Annotations file")->required();
  c2->add_option("--threshold", pc.threshold);
  c2->add_option("--min-vocab-coverage", pc.min_vocab_coverage,
                 "Fail when fewer corpus tokens than this are in the model vocabulary");
  c2->add_option("--batch-size", pc.batch_size);

  TrainGeneratorOptions tg;
  auto* c3 = app.add_subcommand("train-generator", "Train the image-conditioned caption LSTM");
  c3->option_defaults()->always_capture_default();
  c3->add_option("--annotations", tg.annotations)->required();
  c3->add_option("--embeddings", tg.embeddings)->required();
  c3->add_option("--out", tg.out, "Output directory")->required();
  c3->add_option("--variant", tg.variant)->check(CLI::IsMember({"rnn0", "rnn1", "rnn2"}));
  c3->add_option("--combine", tg.combine)->check(CLI::IsMember({"concat", "sum"}));
  c3->add_option("--sources", tg.sources, "all or gold")->check(CLI::IsMember({"all", "gold"}));
  c3->add_option("--seed", tg.seed);
  c3->add_option("--validation-count", tg.validation_count);
  c3->add_option("--test-count", tg.test_count);
  c3->add_option("--min-count", tg.min_count);
  c3->add_option("--hidden", tg.hidden);
  c3->add_option("--word-dim", tg.word_dim, "0 selects the default");
  c3->add_option("--transition-dim", tg.transition_dim, "0 selects the default");
  c3->add_option("--caption-length", tg.caption_length);
  c3->add_flag("--image-before-start", tg.image_before_start, "rnn0: image step precedes START");
  c3->add_option("--epochs", tg.epochs);
  c3->add_option("--batch-size", tg.batch_size);
  c3->add_option("--lr", tg.learning_rate);
  c3->add_option("--patience", tg.patience);
  c3->add_option("--bleu-every", tg.bleu_every, "Train BLEU-1 in the history every N epochs (0: never)");
  c3->add_option("--target-train-bleu1", tg.target_train_bleu1, "Stop once reached (0: off)");

  GenerateOptions ge;
  auto* c4 = app.add_subcommand("generate", "Decode one caption per image embedding");
  c4->option_defaults()->always_capture_default();
  c4->add_option("--model", ge.model)->required();
  c4->add_option("--embeddings", ge.embeddings)->required();
  c4->add_option("--out", ge.out, "Captions file")->required();
  c4->add_option("--ids", ge.ids, "Restrict to these ids (captions file or one id per line)");
  c4->add_option("--temperature", ge.temperature, "0: argmax decoding");
  c4->add_option("--seed", ge.seed);

  EvaluateOptions ev;
  auto* c5 = app.add_subcommand("evaluate", "Score captions (BLEU) or label sets (classification)");
  c5->option_defaults()->always_capture_default();
  c5->add_option("--pred", ev.pred)->required();
  c5->add_option("--truth", ev.truth)->required();
  c5->add_option("--out", ev.out, "Metrics file")->required();
  c5->add_option("--bleu-mode", ev.bleu_mode)->check(CLI::IsMember({"sentence", "pooled"}));
  c5->add_option("--undefined", ev.undefined)->check(CLI::IsMember({"exclude", "zero"}));
  c5->add_option("--pathology-classes", ev.pathology_classes);

  GradcheckOptions gc;
  auto* c6 = app.add_subcommand("gradcheck", "Finite-difference check of every parameter block");
  c6->option_defaults()->always_capture_default();
  c6->add_option("--module", gc.module)->check(CLI::IsMember({"all", "textcnn", "seqgen"}));
  c6->add_option("--seed", gc.seed);
  c6->add_option("--fault-op", gc.fault_op)->group("");  // test fixture: corrupt one backward rule
  c6->add_option("--fault-factor", gc.fault_factor)->group("");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (c1->parsed()) return train_concepts(tc, echo_config(*c1), out);
    if (c2->parsed()) return predict_concepts(pc, out);
    if (c3->parsed()) return train_generator(tg, echo_config(*c3), out);
    if (c4->parsed()) return generate(ge, out);
    if (c5->parsed()) return evaluate(ev, out);
    if (c6->parsed()) return gradcheck(gc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace meshgen::cli
