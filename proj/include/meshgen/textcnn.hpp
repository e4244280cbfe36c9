#pragma once

// Multi-label MeSH concept classifier over tokenized reports:
// embeddings -> parallel multi-width valid convolutions + relu -> max over
// time -> per-branch dropout and relu dense layer -> concatenation -> linear
// -> sigmoid.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "meshgen/gradcheck.hpp"
#include "meshgen/rng.hpp"
#include "meshgen/tensor.hpp"
#include "meshgen/text.hpp"

namespace meshgen::textcnn {

// Weights of the three loss terms: summed binary cross-entropy, soft recall
// and soft true-negative rate. Non-negative, summing to 1.
struct LossWeights {
  double bce = 0.5;
  double soft_recall = 0.2;
  double soft_tnr = 0.3;
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct TextCnnConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 128;
  std::vector<std::size_t> filter_widths{3, 4, 5};
  std::size_t maps_per_width = 512;
  std::size_t branch_units = 254;
  double dropout = 0.5;
  std::size_t classes = 102;
  LossWeights loss;
  std::size_t seq_len = text::kDefaultReportLength;

  // ConfigError when an invariant fails.
  void validate() const;
  bool operator==(const TextCnnConfig&) const = default;
};

enum class Mode { Train, Eval };

class TextCnnModel {
 public:
  struct Branch {
    std::size_t width = 0;
    ag::Tensor filters;  // maps x (width*embed_dim)
    ag::Tensor bias;     // maps
    ag::Tensor dense_w;  // maps x branch_units
    ag::Tensor dense_b;  // branch_units
  };

  // Fan-based uniform weights, zero biases, embeddings in [-0.05, 0.05].
  TextCnnModel(TextCnnConfig config, Rng& init_rng);

  const TextCnnConfig& config() const { return config_; }

  // Logits [B x K] for a batch of id sequences of length seq_len. Dropout
  // draws from `rng` in train mode only.
  ag::Tensor logits(std::span<const std::vector<int>> batch, Mode mode, Rng& rng) const;
  // Sigmoid scores [B x K].
  ag::Tensor forward(std::span<const std::vector<int>> batch, Mode mode, Rng& rng) const;
  // Eval-mode scores without recording a graph.
  std::vector<std::vector<double>> predict_scores(std::span<const std::vector<int>> batch) const;

  // Fixed order; names are stable and used by checkpoints.
  std::vector<NamedTensor> parameters() const;

  ag::Tensor embedding;
  std::vector<Branch> branches;
  ag::Tensor out_w;  // (branches*branch_units) x K
  ag::Tensor out_b;

 private:
  TextCnnConfig config_;
};

// Batch mean of  bce*BCE_i - soft_recall*R_i - soft_tnr*TNR_i  where, per
// instance, BCE_i is the binary cross-entropy summed over classes, R_i the
// score mass on positive labels over (#positives + 1e-8) and TNR_i the
// complementary mass on negatives over (#negatives + 1e-8). Scores are
// clamped to [1e-12, 1 - 1e-12] inside the logarithms.
ag::Tensor modified_sce_loss(const ag::Tensor& scores, std::span<const text::LabelVector> labels,
                             const LossWeights& weights);

// Plain batch-mean of summed binary cross-entropy.
ag::Tensor bce_loss(const ag::Tensor& scores, std::span<const text::LabelVector> labels);

// 1 where score >= threshold.
text::LabelVector predict_labels(std::span<const double> scores, double threshold = 0.5);

// A training instance keeps its sentence segments (as token ids) so the
// batch sampler can reorder them.
struct LabeledReport {
  std::vector<std::vector<int>> segments;
  text::LabelVector labels;
};

// Concatenates segments in `order` (all segments when empty), then crops or
// pads with PAD to `length`.
std::vector<int> assemble_ids(const LabeledReport& r, std::span<const std::size_t> order,
                              std::size_t length);

enum class LossKind { Modified, PlainBce };

struct TrainSchedule {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t patience = 10;
  LossKind loss = LossKind::Modified;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  TextCnnModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

// Mini-batch Adam over class-balanced batches with sentence-shuffle
// augmentation; stops after `patience` epochs without validation
// improvement and returns the best-validation parameters. ContractError on
// an empty split, DivergenceError on a non-finite loss.
TrainResult train_textcnn(std::span<const LabeledReport> train, std::span<const LabeledReport> val,
                          const TextCnnConfig& config, const TrainSchedule& schedule,
                          std::uint64_t seed);

// Mean loss over a dataset in eval mode.
double evaluate_loss(const TextCnnModel& model, std::span<const LabeledReport> data,
                     const LossWeights& weights, LossKind kind, std::size_t batch_size);

}  // namespace meshgen::textcnn
