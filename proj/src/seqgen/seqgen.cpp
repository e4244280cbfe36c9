#include "meshgen/seqgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "meshgen/adam.hpp"
#include "meshgen/error.hpp"
#include "meshgen/log.hpp"
#include "meshgen/metrics.hpp"

namespace meshgen::seqgen {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Rnn0: return "rnn0";
    case Variant::Rnn1: return "rnn1";
    case Variant::Rnn2: return "rnn2";
  }
  return "?";
}

std::string to_string(Combine c) { return c == Combine::Concat ? "concat" : "sum"; }

Variant parse_variant(std::string_view s) {
  if (s == "rnn0") return Variant::Rnn0;
  if (s == "rnn1") return Variant::Rnn1;
  if (s == "rnn2") return Variant::Rnn2;
  throw ConfigError(fmt::format("unknown variant '{}' (rnn0, rnn1, rnn2)", s));
}

Combine parse_combine(std::string_view s) {
  if (s == "concat") return Combine::Concat;
  if (s == "sum") return Combine::Sum;
  throw ConfigError(fmt::format("unknown combine mode '{}' (concat, sum)", s));
}

SeqGenConfig SeqGenConfig::resolved() const {
  SeqGenConfig c = *this;
  switch (c.variant) {
    case Variant::Rnn0:
      if (c.transition_dim == 0) c.transition_dim = c.image_dim == 4096 ? 2048 : 1024;
      if (c.word_dim == 0) c.word_dim = c.transition_dim;
      break;
    case Variant::Rnn1:
      if (c.word_dim == 0) c.word_dim = 256;
      if (c.combine == Combine::Sum) c.transition_dim = c.hidden;
      else if (c.transition_dim == 0) c.transition_dim = 1024;
      break;
    case Variant::Rnn2:
      if (c.word_dim == 0) c.word_dim = 256;
      if (c.combine == Combine::Sum) c.transition_dim = c.word_dim;
      else if (c.transition_dim == 0) c.transition_dim = 1024;
      break;
  }
  return c;
}

void SeqGenConfig::validate() const {
  if (vocab_size <= text::kReservedIds) throw ConfigError("caption vocabulary is empty");
  if (image_dim == 0 || hidden == 0 || caption_length == 0 || transition_dim == 0 || word_dim == 0) {
    throw ConfigError("sequence model extents must be positive (resolve defaults first)");
  }
  if (variant == Variant::Rnn0 && word_dim != transition_dim) {
    throw ConfigError(fmt::format("rnn0 feeds the projected image as a word: word dim {} must equal transition dim {}",
                                  word_dim, transition_dim));
  }
  if (variant != Variant::Rnn0 && image_before_start) {
    throw ConfigError("image_before_start only applies to rnn0");
  }
  if (variant == Variant::Rnn0 && combine == Combine::Sum) {
    throw ConfigError("combine=sum is meaningless for rnn0 (the image is a step input, not combined)");
  }
  if (combine == Combine::Sum) {
    if (variant == Variant::Rnn1 && transition_dim != hidden) {
      throw ConfigError(fmt::format("rnn1 sum needs transition dim {} == hidden {}", transition_dim, hidden));
    }
    if (variant == Variant::Rnn2 && transition_dim != word_dim) {
      throw ConfigError(fmt::format("rnn2 sum needs transition dim {} == word dim {}", transition_dim, word_dim));
    }
  }
}

// ---- building blocks ------------------------------------------------------------

LstmState zero_state(std::size_t batch, std::size_t hidden) {
  return {ag::Tensor::zeros({batch, hidden}), ag::Tensor::zeros({batch, hidden})};
}

LstmState lstm_step(const ag::Tensor& x, const LstmState& prev, const LstmCell& cell) {
  const std::size_t h = cell.hidden();
  if (x.cols() != cell.w_input.rows()) {
    throw DimensionError(fmt::format("lstm input width {} but cell expects {}", x.cols(), cell.w_input.rows()));
  }
  if (prev.memory.cols() != h || prev.output.cols() != h || prev.memory.rows() != x.rows() ||
      prev.output.rows() != x.rows()) {
    throw DimensionError(fmt::format("lstm state {} / {} does not match batch {} and hidden {}",
                                     ag::shape_str(prev.memory.shape()), ag::shape_str(prev.output.shape()),
                                     x.rows(), h));
  }
  auto pre = ag::add_bias(ag::add(ag::matmul(x, cell.w_input), ag::matmul(prev.output, cell.w_recurrent)),
                          cell.bias);
  auto in_gate = ag::sigmoid(ag::slice_cols(pre, 0, h));
  auto forget_gate = ag::sigmoid(ag::slice_cols(pre, h, h));
  auto out_gate = ag::sigmoid(ag::slice_cols(pre, 2 * h, h));
  auto candidate = ag::tanh(ag::slice_cols(pre, 3 * h, h));
  auto memory = ag::add(ag::mul(forget_gate, prev.memory), ag::mul(in_gate, candidate));
  auto output = ag::mul(out_gate, ag::tanh(memory));
  return {memory, output};
}

ag::Tensor image_transition(const ag::Tensor& images, const ag::Tensor& w, const ag::Tensor& b) {
  return ag::relu(ag::linear(images, w, b));
}

namespace {

ag::Tensor combine_with(const ag::Tensor& a, const ag::Tensor& image_proj, Combine combine) {
  if (combine == Combine::Sum) {
    if (a.cols() != image_proj.cols() || a.rows() != image_proj.rows()) {
      throw DimensionError(fmt::format("sum combine needs equal shapes, got {} and {}",
                                       ag::shape_str(a.shape()), ag::shape_str(image_proj.shape())));
    }
    return ag::add(a, image_proj);
  }
  const ag::Tensor parts[] = {a, image_proj};
  return ag::concat_cols(parts);
}

}  // namespace

ag::Tensor rnn1_decode_step(const ag::Tensor& recurrent_out, const ag::Tensor& image_proj,
                            const ag::Tensor& w, const ag::Tensor& b, Combine combine) {
  return ag::relu(ag::linear(combine_with(recurrent_out, image_proj, combine), w, b));
}

ag::Tensor rnn2_encode_step(const ag::Tensor& x, const ag::Tensor& image_proj, const ag::Tensor& w,
                            const ag::Tensor& b, Combine combine) {
  return ag::relu(ag::linear(combine_with(x, image_proj, combine), w, b));
}

// ---- model ------------------------------------------------------------------------

SeqGenModel::SeqGenModel(SeqGenConfig config, Rng& rng) : config_(config.resolved()) {
  config_.validate();
  const auto& c = config_;
  const std::size_t h = c.hidden, d = c.word_dim, t = c.transition_dim, v = c.vocab_size;
  word_embedding = ag::Tensor::zeros({v, d}, true);
  ag::init::uniform(word_embedding, -0.05, 0.05, rng);
  transition_w = ag::Tensor::zeros({c.image_dim, t}, true);
  ag::init::glorot_uniform(transition_w, c.image_dim, t, rng);
  transition_b = ag::Tensor::zeros({t}, true);
  cell.w_input = ag::Tensor::zeros({d, 4 * h}, true);
  ag::init::glorot_uniform(cell.w_input, d, 4 * h, rng);
  cell.w_recurrent = ag::Tensor::zeros({h, 4 * h}, true);
  ag::init::glorot_uniform(cell.w_recurrent, h, 4 * h, rng);
  cell.bias = ag::Tensor::zeros({4 * h}, true);
  if (c.variant == Variant::Rnn1) {
    const std::size_t in = c.combine == Combine::Concat ? h + t : h;
    cond_w = ag::Tensor::zeros({in, h}, true);
    ag::init::glorot_uniform(cond_w, in, h, rng);
    cond_b = ag::Tensor::zeros({h}, true);
  } else if (c.variant == Variant::Rnn2) {
    const std::size_t in = c.combine == Combine::Concat ? d + t : d;
    cond_w = ag::Tensor::zeros({in, d}, true);
    ag::init::glorot_uniform(cond_w, in, d, rng);
    cond_b = ag::Tensor::zeros({d}, true);
  }
  out_w = ag::Tensor::zeros({h, v}, true);
  ag::init::glorot_uniform(out_w, h, v, rng);
  out_b = ag::Tensor::zeros({v}, true);
}

std::vector<NamedTensor> SeqGenModel::parameters() const {
  std::vector<NamedTensor> out{{"word_embedding", word_embedding},
                               {"transition_w", transition_w},
                               {"transition_b", transition_b},
                               {"lstm.w_input", cell.w_input},
                               {"lstm.w_recurrent", cell.w_recurrent},
                               {"lstm.bias", cell.bias}};
  if (cond_w.defined()) {
    const char* tag = config_.variant == Variant::Rnn1 ? "decoder" : "encoder";
    out.push_back({fmt::format("{}.w", tag), cond_w});
    out.push_back({fmt::format("{}.b", tag), cond_b});
  }
  out.push_back({"out_w", out_w});
  out.push_back({"out_b", out_b});
  return out;
}

ag::Tensor SeqGenModel::embed(std::span<const int> ids) const {
  return ag::embedding(word_embedding, ids);
}

ag::Tensor SeqGenModel::project(const ag::Tensor& images) const {
  if (images.cols() != config_.image_dim) {
    throw DimensionError(fmt::format("image embedding width {} but model expects {}", images.cols(),
                                     config_.image_dim));
  }
  return image_transition(images, transition_w, transition_b);
}

std::pair<LstmState, ag::Tensor> SeqGenModel::advance(const ag::Tensor& input,
                                                      const ag::Tensor& image_proj,
                                                      const LstmState& prev, bool condition) const {
  const auto& c = config_;
  auto conditioned = [&](const ag::Tensor& a) {
    if (condition) return image_proj;
    // Unconditioned: sum drops the term, concat sees a zero image.
    return ag::Tensor::zeros({a.rows(), c.transition_dim});
  };
  ag::Tensor x = input;
  if (c.variant == Variant::Rnn2) {
    x = (!condition && c.combine == Combine::Sum)
            ? ag::relu(ag::linear(x, cond_w, cond_b))
            : rnn2_encode_step(x, conditioned(x), cond_w, cond_b, c.combine);
  }
  auto state = lstm_step(x, prev, cell);
  ag::Tensor dec = state.output;
  if (c.variant == Variant::Rnn1) {
    dec = (!condition && c.combine == Combine::Sum)
              ? ag::relu(ag::linear(dec, cond_w, cond_b))
              : rnn1_decode_step(dec, conditioned(dec), cond_w, cond_b, c.combine);
  }
  return {state, ag::softmax(ag::linear(dec, out_w, out_b))};
}

namespace {

void check_captions(std::span<const std::vector<int>> captions, std::size_t batch, std::size_t length) {
  if (captions.size() != batch) {
    throw DimensionError(fmt::format("{} captions for {} images", captions.size(), batch));
  }
  for (const auto& c : captions) {
    if (c.size() != length) {
      throw DimensionError(fmt::format("caption of {} ids, model expects {}", c.size(), length));
    }
  }
}

std::vector<int> column(std::span<const std::vector<int>> captions, std::size_t t) {
  std::vector<int> ids;
  ids.reserve(captions.size());
  for (const auto& c : captions) ids.push_back(c[t]);
  return ids;
}

}  // namespace

std::vector<ag::Tensor> SeqGenModel::build_rnn0_inputs(const ag::Tensor& images,
                                                       std::span<const std::vector<int>> captions) const {
  check_captions(captions, images.rows(), config_.caption_length);
  std::vector<ag::Tensor> inputs{project(images)};
  if (config_.image_before_start) {
    inputs.push_back(embed(std::vector<int>(images.rows(), text::kStart)));
  }
  for (std::size_t t = 0; t < config_.caption_length; ++t) inputs.push_back(embed(column(captions, t)));
  return inputs;
}

std::vector<ag::Tensor> SeqGenModel::forward(const ag::Tensor& images,
                                             std::span<const std::vector<int>> captions,
                                             bool condition) const {
  const std::size_t b = images.rows();
  check_captions(captions, b, config_.caption_length);
  std::vector<ag::Tensor> inputs;
  ag::Tensor proj;
  if (config_.variant == Variant::Rnn0) {
    inputs = build_rnn0_inputs(images, captions);
  } else {
    if (condition) proj = project(images);
    else if (images.cols() != config_.image_dim) project(images);  // width check only
    inputs.push_back(embed(std::vector<int>(b, text::kStart)));
    for (std::size_t t = 0; t < config_.caption_length; ++t) inputs.push_back(embed(column(captions, t)));
  }
  auto state = zero_state(b, config_.hidden);
  std::vector<ag::Tensor> dists;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto [next, dist] = advance(inputs[t], proj, state, condition);
    state = next;
    if (config_.image_before_start && t == 0) continue;
    dists.push_back(dist);
  }
  return dists;
}

// ---- loss -------------------------------------------------------------------------

std::vector<int> caption_tokens(std::span<const int> caption) {
  std::vector<int> out;
  for (int id : caption) {
    if (id == text::kPad || id == text::kEnd) break;
    out.push_back(id);
  }
  return out;
}

std::vector<int> make_targets(std::span<const int> caption, std::size_t steps) {
  auto toks = caption_tokens(caption);
  if (toks.size() >= steps) toks.resize(steps - 1);
  toks.push_back(text::kEnd);
  toks.resize(steps, text::kPad);
  return toks;
}

ag::Tensor sequence_loss(std::span<const ag::Tensor> distributions,
                         std::span<const std::vector<int>> targets) {
  if (distributions.empty()) throw ContractError("sequence_loss: no steps");
  const std::size_t b = distributions.front().rows();
  const std::size_t v = distributions.front().cols();
  if (targets.size() != b) throw DimensionError(fmt::format("{} target rows for batch {}", targets.size(), b));
  for (const auto& t : targets) {
    if (t.size() != distributions.size()) {
      throw DimensionError(fmt::format("target of {} steps for {} distributions", t.size(), distributions.size()));
    }
  }
  for (const auto& d : distributions) {
    if (d.rows() != b || d.cols() != v) throw DimensionError("step distributions differ in shape");
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < v; ++j) s += d.values()[i * v + j];
      if (std::abs(s - 1.0) > 1e-6) {
        throw ContractError(fmt::format("step distribution row sums to {}, not 1", s));
      }
    }
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  static constexpr double kFloor = 1e-300;
  double total = 0.0;
  for (std::size_t t = 0; t < distributions.size(); ++t) {
    for (std::size_t i = 0; i < b; ++i) {
      const int y = targets[i][t];
      if (y == text::kPad) continue;
      if (y < 0 || static_cast<std::size_t>(y) >= v) {
        throw IndexError(fmt::format("target id {} outside vocabulary of {}", y, v));
      }
      total -= std::log(std::max(distributions[t].values()[i * v + static_cast<std::size_t>(y)], kFloor));
    }
  }
  std::vector<ag::Tensor> parents(distributions.begin(), distributions.end());
  std::vector<std::shared_ptr<ag::Node>> nodes;
  for (auto& p : parents) nodes.push_back(p.handle());
  std::vector<std::vector<int>> tg(targets.begin(), targets.end());
  return ag::make_result("sequence_loss", {1}, {total * inv_b}, parents,
                         [nodes, tg = std::move(tg), inv_b, v](ag::Node& self) {
                           for (std::size_t t = 0; t < nodes.size(); ++t) {
                             auto& n = *nodes[t];
                             if (!n.requires_grad) continue;
                             auto& g = n.ensure_grad();
                             for (std::size_t i = 0; i < tg.size(); ++i) {
                               const int y = tg[i][t];
                               if (y == text::kPad) continue;
                               const std::size_t k = i * v + static_cast<std::size_t>(y);
                               const double p = std::max(n.value[k], kFloor);
                               g[k] -= self.grad[0] * inv_b / p;
                             }
                           }
                         });
}

// ---- generation ---------------------------------------------------------------------

GenerationResult greedy_generate(const SeqGenModel& model, std::span<const double> image,
                                 const GenerateOptions& options) {
  const auto& c = model.config();
  if (image.size() != c.image_dim) {
    throw DimensionError(fmt::format("image embedding width {} but model expects {}", image.size(), c.image_dim));
  }
  if (options.temperature > 0.0 && options.rng == nullptr) {
    throw ContractError("temperature sampling needs a generator");
  }
  ag::NoGradGuard no_grad;
  auto img = ag::Tensor::from({1, c.image_dim}, std::vector<double>(image.begin(), image.end()));
  auto proj = model.project(img);
  auto state = zero_state(1, c.hidden);
  const int start[] = {text::kStart};
  ag::Tensor input;
  if (c.variant == Variant::Rnn0) {
    input = proj;
    if (c.image_before_start) {
      state = model.advance(proj, proj, state, true).first;
      input = model.embed(start);
    }
  } else {
    input = model.embed(start);
  }
  GenerationResult out;
  for (std::size_t step = 0; step <= c.caption_length; ++step) {
    auto [next, dist] = model.advance(input, proj, state, true);
    state = next;
    out.distributions.emplace_back(dist.values().begin(), dist.values().end());
    const auto& p = out.distributions.back();
    int token = 0;
    if (options.temperature > 0.0) {
      std::vector<double> w(p.size());
      double z = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) z += (w[j] = std::pow(p[j], 1.0 / options.temperature));
      double u = options.rng->uniform() * z;
      token = static_cast<int>(p.size() - 1);
      for (std::size_t j = 0; j < p.size(); ++j) {
        if ((u -= w[j]) < 0.0) {
          token = static_cast<int>(j);
          break;
        }
      }
    } else {
      token = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }
    if (token == text::kEnd || token == text::kPad) break;
    out.tokens.push_back(token);
    if (out.tokens.size() == c.caption_length) break;
    const int next_id[] = {token};
    input = model.embed(next_id);
  }
  return out;
}

// ---- training -----------------------------------------------------------------------

namespace {

struct Batch {
  ag::Tensor images;
  std::vector<std::vector<int>> captions;
  std::vector<std::vector<int>> targets;
};

Batch make_batch(std::span<const CaptionedImage> data, std::span<const std::size_t> idx,
                 const SeqGenConfig& c) {
  Batch b;
  std::vector<double> flat;
  flat.reserve(idx.size() * c.image_dim);
  for (auto i : idx) {
    flat.insert(flat.end(), data[i].embedding.begin(), data[i].embedding.end());
    b.captions.push_back(data[i].caption);
    b.targets.push_back(make_targets(data[i].caption, c.steps()));
  }
  b.images = ag::Tensor::from({idx.size(), c.image_dim}, std::move(flat));
  return b;
}

void check_dataset(std::span<const CaptionedImage> data, const SeqGenConfig& c, const char* name) {
  for (const auto& d : data) {
    if (d.embedding.size() != c.image_dim) {
      throw DataError(fmt::format("{} item '{}' has embedding width {}, expected {}", name, d.id,
                                  d.embedding.size(), c.image_dim));
    }
    if (d.caption.size() != c.caption_length) {
      throw DataError(fmt::format("{} item '{}' has caption of {} ids, expected {}", name, d.id,
                                  d.caption.size(), c.caption_length));
    }
  }
}

std::vector<std::vector<double>> snapshot(const SeqGenModel& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void restore(SeqGenModel& m, const std::vector<std::vector<double>>& snap) {
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(snap[i].begin(), snap[i].end(), params[i].tensor.mutable_values().begin());
  }
}

std::vector<std::string> as_strings(std::span<const int> ids) {
  std::vector<std::string> out;
  for (int id : ids) out.push_back(std::to_string(id));
  return out;
}

}  // namespace

double evaluate_loss(const SeqGenModel& model, std::span<const CaptionedImage> data,
                     std::size_t batch_size) {
  if (data.empty()) throw ContractError("evaluate_loss: empty dataset");
  ag::NoGradGuard no_grad;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    auto b = make_batch(data, idx, model.config());
    auto loss = sequence_loss(model.forward(b.images, b.captions), b.targets);
    total += loss.item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

double caption_bleu1(const SeqGenModel& model, std::span<const CaptionedImage> data) {
  if (data.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& d : data) {
    auto gen = greedy_generate(model, d.embedding);
    const auto ref = as_strings(caption_tokens(d.caption));
    if (gen.tokens.empty() || ref.empty()) continue;
    sum += metrics::bleu_n(as_strings(gen.tokens), ref, 1);
  }
  return sum / static_cast<double>(data.size());
}

TrainResult train_seqgen(std::span<const CaptionedImage> train, std::span<const CaptionedImage> val,
                         const SeqGenConfig& config, const TrainSchedule& schedule, std::uint64_t seed) {
  if (train.empty() || val.empty()) throw ContractError("train_seqgen needs non-empty train and validation splits");
  if (schedule.batch_size == 0) throw ContractError("batch size must be at least 1");
  const auto cfg = config.resolved();
  check_dataset(train, cfg, "train");
  check_dataset(val, cfg, "validation");

  Rng root(seed);
  Rng init_rng = root.fork();
  Rng order_rng = root.fork();
  TrainResult result{SeqGenModel(cfg, init_rng), {}, 0};
  auto& model = result.model;
  std::vector<ag::Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  Adam adam(params, AdamConfig{schedule.learning_rate});

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  auto best_params = snapshot(model);

  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      auto b = make_batch(train, std::span(order).subspan(start, end - start), cfg);
      adam.zero_grad();
      auto loss = sequence_loss(model.forward(b.images, b.captions), b.targets);
      if (!std::isfinite(loss.item())) {
        throw DivergenceError(fmt::format("sequence loss became {} at epoch {}", loss.item(), epoch));
      }
      loss.backward();
      adam.step();
      train_sum += loss.item() * static_cast<double>(end - start);
    }
    EpochRecord rec{epoch, train_sum / static_cast<double>(train.size()),
                    evaluate_loss(model, val, schedule.batch_size), std::nullopt};
    if (!std::isfinite(rec.val_loss)) {
      throw DivergenceError(fmt::format("validation loss became {} at epoch {}", rec.val_loss, epoch));
    }
    if (schedule.bleu_every > 0 && epoch % schedule.bleu_every == 0) {
      rec.train_bleu1 = caption_bleu1(model, train);
    }
    result.history.push_back(rec);
    log::debug("seqgen epoch {} train {:.6f} val {:.6f}", epoch, rec.train_loss, rec.val_loss);
    if (rec.val_loss < best) {
      best = rec.val_loss;
      since_best = 0;
      result.best_epoch = epoch;
      best_params = snapshot(model);
    } else {
      ++since_best;
    }
    if (schedule.target_train_bleu1 && rec.train_bleu1 && *rec.train_bleu1 >= *schedule.target_train_bleu1) {
      best_params = snapshot(model);
      result.best_epoch = epoch;
      break;
    }
    if (since_best >= schedule.patience) break;
  }
  restore(model, best_params);
  return result;
}

}  // namespace meshgen::seqgen
