#pragma once

// Image-conditioned MeSH caption generation with an LSTM.
//
// The recurrent update keeps an additive memory h and a gated output m:
//   i, f, o = sigmoid(x W_x + m_prev W_m + b)   (one block each)
//   h = f * h_prev + i * tanh(x W_x + m_prev W_m + b)   (candidate block)
//   m = o * tanh(h)
// Three ways of conditioning on the projected image p = relu(img W_dg + b_dg):
//   Rnn0: p is the input of the first step (in place of START).
//   Rnn1: every step's output is decoded as relu((m (+) p) W_z + b_z).
//   Rnn2: every step's input is encoded as relu((x (+) p) W_a + b_a).
// (+) is concatenation or elementwise sum. Distributions come from a softmax
// over the decoder output.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "meshgen/gradcheck.hpp"
#include "meshgen/rng.hpp"
#include "meshgen/tensor.hpp"
#include "meshgen/text.hpp"

namespace meshgen::seqgen {

enum class Variant { Rnn0, Rnn1, Rnn2 };
enum class Combine { Concat, Sum };

std::string to_string(Variant v);
std::string to_string(Combine c);
Variant parse_variant(std::string_view s);  // ConfigError on unknown names
Combine parse_combine(std::string_view s);

struct SeqGenConfig {
  Variant variant = Variant::Rnn1;
  Combine combine = Combine::Concat;
  std::size_t image_dim = 2048;
  // 0 selects the default: Rnn0 2048 for 4096-wide images and 1024
  // otherwise; Rnn1/Rnn2 1024 for concat and the partner width for sum.
  std::size_t transition_dim = 0;
  // 0 selects the default: transition_dim for Rnn0, 256 otherwise.
  std::size_t word_dim = 0;
  std::size_t hidden = 512;
  std::size_t caption_length = text::kDefaultCaptionLength;
  std::size_t vocab_size = 0;
  // Rnn0 only: feed the image as an extra step before START instead of
  // replacing START.
  bool image_before_start = false;

  // Copy with defaults filled in.
  SeqGenConfig resolved() const;
  // ConfigError when a resolved config breaks an invariant.
  void validate() const;
  // Predicting steps: 1 + caption_length.
  std::size_t steps() const { return caption_length + 1; }
  bool operator==(const SeqGenConfig&) const = default;
};

struct LstmCell {
  ag::Tensor w_input;      // in x 4H, blocks [input, forget, output, candidate]
  ag::Tensor w_recurrent;  // H x 4H
  ag::Tensor bias;         // 4H
  std::size_t hidden() const { return w_recurrent.rows(); }
};

struct LstmState {
  ag::Tensor memory;  // h, additive
  ag::Tensor output;  // m, gated
};

LstmState zero_state(std::size_t batch, std::size_t hidden);
// DimensionError when x or the state disagree with the cell.
LstmState lstm_step(const ag::Tensor& x, const LstmState& prev, const LstmCell& cell);

// relu(images W + b)
ag::Tensor image_transition(const ag::Tensor& images, const ag::Tensor& w, const ag::Tensor& b);
// relu((recurrent_out (+) image_proj) W + b)
ag::Tensor rnn1_decode_step(const ag::Tensor& recurrent_out, const ag::Tensor& image_proj,
                            const ag::Tensor& w, const ag::Tensor& b, Combine combine);
// relu((x (+) image_proj) W + b)
ag::Tensor rnn2_encode_step(const ag::Tensor& x, const ag::Tensor& image_proj,
                            const ag::Tensor& w, const ag::Tensor& b, Combine combine);

class SeqGenModel {
 public:
  SeqGenModel(SeqGenConfig config, Rng& init_rng);

  const SeqGenConfig& config() const { return config_; }

  // Teacher-forced step distributions ([B x V] each, steps() of them) for
  // images [B x g] and captions flattened to caption_length ids. With
  // `condition` false, Rnn1/Rnn2 skip the image term entirely (an
  // unconditioned LSTM with the same weights).
  std::vector<ag::Tensor> forward(const ag::Tensor& images,
                                  std::span<const std::vector<int>> captions,
                                  bool condition = true) const;

  // Per-step LSTM inputs before any Rnn2 encoding: for Rnn0 the projected
  // image followed by the caption word embeddings.
  std::vector<ag::Tensor> build_rnn0_inputs(const ag::Tensor& images,
                                            std::span<const std::vector<int>> captions) const;

  std::vector<NamedTensor> parameters() const;

  ag::Tensor word_embedding;  // V x D
  ag::Tensor transition_w;    // g x transition
  ag::Tensor transition_b;
  LstmCell cell;
  ag::Tensor cond_w;  // Rnn1: W_z, Rnn2: W_a; undefined for Rnn0
  ag::Tensor cond_b;
  ag::Tensor out_w;  // H x V
  ag::Tensor out_b;

  // One recurrent step from the raw step input; returns the new state and
  // the output distribution.
  std::pair<LstmState, ag::Tensor> advance(const ag::Tensor& input, const ag::Tensor& image_proj,
                                           const LstmState& prev, bool condition) const;
  ag::Tensor embed(std::span<const int> ids) const;
  ag::Tensor project(const ag::Tensor& images) const;

 private:
  SeqGenConfig config_;
};

// Targets for the steps() predicting positions: the caption's non-PAD
// prefix, then END, then PAD.
std::vector<int> make_targets(std::span<const int> caption, std::size_t steps);

// -sum_t log p_t[target_t] summed over steps and averaged over the batch;
// PAD targets are masked. ContractError when a distribution row is not
// normalized within 1e-6.
ag::Tensor sequence_loss(std::span<const ag::Tensor> distributions,
                         std::span<const std::vector<int>> targets);

struct GenerationResult {
  std::vector<int> tokens;  // END/PAD stripped, at most caption_length
  std::vector<std::vector<double>> distributions;
};

struct GenerateOptions {
  // 0 selects argmax decoding; otherwise sample from p^(1/temperature).
  double temperature = 0.0;
  Rng* rng = nullptr;
};

GenerationResult greedy_generate(const SeqGenModel& model, std::span<const double> image,
                                 const GenerateOptions& options = {});

struct CaptionedImage {
  std::string id;
  std::vector<double> embedding;
  std::vector<int> caption;  // caption_length ids
};

struct TrainSchedule {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t patience = 10;
  // Compute train BLEU-1 every this many epochs (0 disables).
  std::size_t bleu_every = 1;
  // Stop once train BLEU-1 reaches this value.
  std::optional<double> target_train_bleu1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> train_bleu1;
};

struct TrainResult {
  SeqGenModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

// Teacher-forced Adam training minimizing sequence_loss with early stopping
// on validation loss; the best-validation parameters are returned.
// DataError on inconsistent embedding widths, DivergenceError on a
// non-finite loss.
TrainResult train_seqgen(std::span<const CaptionedImage> train,
                         std::span<const CaptionedImage> val, const SeqGenConfig& config,
                         const TrainSchedule& schedule, std::uint64_t seed);

double evaluate_loss(const SeqGenModel& model, std::span<const CaptionedImage> data,
                     std::size_t batch_size);

// Mean sentence BLEU-1 of greedy captions against the stored captions.
double caption_bleu1(const SeqGenModel& model, std::span<const CaptionedImage> data);

// Non-PAD prefix of a flattened caption (stops at END or PAD).
std::vector<int> caption_tokens(std::span<const int> caption);

}  // namespace meshgen::seqgen
