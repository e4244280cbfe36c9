#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace meshgen::cli {

struct TrainConceptsOptions {
  std::string corpus;
  std::string out;
  std::size_t gold_subset_size = 1000;
  std::string gold_sampling = "random";
  std::uint64_t seed = 42;
  std::size_t validation_count = 300;
  std::size_t test_count = 300;
  std::size_t min_count = 1;
  std::string negation_cues;
  std::string pathology_classes;
  std::size_t embed_dim = 128;
  std::vector<std::size_t> filter_widths{3, 4, 5};
  std::size_t maps_per_width = 512;
  std::size_t branch_units = 254;
  double dropout = 0.5;
  std::vector<double> lambda{0.5, 0.2, 0.3};
  std::size_t seq_len = 32;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t patience = 10;
  std::string loss = "modified";
  double threshold = 0.5;
  std::string undefined = "exclude";
};

struct PredictConceptsOptions {
  std::string model;
  std::string corpus;
  std::string out;
  double threshold = 0.5;
  double min_vocab_coverage = 0.5;
  std::size_t batch_size = 256;
};

struct TrainGeneratorOptions {
  std::string annotations;
  std::string embeddings;
  std::string out;
  std::string variant = "rnn1";
  std::string combine = "concat";
  std::string sources = "all";
  std::uint64_t seed = 42;
  std::size_t validation_count = 300;
  std::size_t test_count = 300;
  std::size_t min_count = 1;
  std::size_t hidden = 512;
  std::size_t word_dim = 0;
  std::size_t transition_dim = 0;
  std::size_t caption_length = 5;
  bool image_before_start = false;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t patience = 10;
  std::size_t bleu_every = 1;
  double target_train_bleu1 = 0.0;
};

struct GenerateOptions {
  std::string model;
  std::string embeddings;
  std::string out;
  std::string ids;
  double temperature = 0.0;
  std::uint64_t seed = 42;
};

struct EvaluateOptions {
  std::string pred;
  std::string truth;
  std::string out;
  std::string bleu_mode = "sentence";
  std::string undefined = "exclude";
  std::string pathology_classes;
};

struct GradcheckOptions {
  std::string module = "all";
  std::uint64_t seed = 42;
  std::string fault_op;
  double fault_factor = 1.5;
};

// Each returns an exit code; library errors propagate as exceptions.
int train_concepts(const TrainConceptsOptions& o, const std::string& config_echo, std::ostream& out);
int predict_concepts(const PredictConceptsOptions& o, std::ostream& out);
int train_generator(const TrainGeneratorOptions& o, const std::string& config_echo, std::ostream& out);
int generate(const GenerateOptions& o, std::ostream& out);
int evaluate(const EvaluateOptions& o, std::ostream& out);
int gradcheck(const GradcheckOptions& o, std::ostream& out);

}  // namespace meshgen::cli
