#include "meshgen/textcnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "meshgen/adam.hpp"
#include "meshgen/dataio.hpp"
#include "meshgen/error.hpp"
#include "meshgen/log.hpp"

namespace meshgen::textcnn {

namespace {
constexpr double kClamp = 1e-12;
constexpr double kRatioEps = 1e-8;
}  // namespace

void LossWeights::validate() const {
  if (bce < 0 || soft_recall < 0 || soft_tnr < 0) {
    throw ConfigError(fmt::format("loss weights must be non-negative, got ({}, {}, {})", bce,
                                  soft_recall, soft_tnr));
  }
  const double s = bce + soft_recall + soft_tnr;
  if (std::abs(s - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("loss weights must sum to 1, got ({}, {}, {}) = {}", bce,
                                  soft_recall, soft_tnr, s));
  }
}

void TextCnnConfig::validate() const {
  loss.validate();
  if (vocab_size <= text::kReservedIds) throw ConfigError("text CNN vocabulary is empty");
  if (embed_dim == 0 || maps_per_width == 0 || branch_units == 0 || classes == 0 || seq_len == 0) {
    throw ConfigError("text CNN extents must be positive");
  }
  if (filter_widths.empty()) throw ConfigError("text CNN needs at least one filter width");
  for (auto w : filter_widths) {
    if (w == 0 || w > seq_len) {
      throw ConfigError(fmt::format("filter width {} does not fit sequence length {}", w, seq_len));
    }
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError(fmt::format("dropout {} outside [0, 1)", dropout));
  }
}

TextCnnModel::TextCnnModel(TextCnnConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  embedding = ag::Tensor::zeros({c.vocab_size, c.embed_dim}, true);
  ag::init::uniform(embedding, -0.05, 0.05, rng);
  for (auto w : c.filter_widths) {
    Branch b;
    b.width = w;
    b.filters = ag::Tensor::zeros({c.maps_per_width, w * c.embed_dim}, true);
    ag::init::glorot_uniform(b.filters, w * c.embed_dim, c.maps_per_width, rng);
    b.bias = ag::Tensor::zeros({c.maps_per_width}, true);
    b.dense_w = ag::Tensor::zeros({c.maps_per_width, c.branch_units}, true);
    ag::init::glorot_uniform(b.dense_w, c.maps_per_width, c.branch_units, rng);
    b.dense_b = ag::Tensor::zeros({c.branch_units}, true);
    branches.push_back(std::move(b));
  }
  const std::size_t concat = c.branch_units * c.filter_widths.size();
  out_w = ag::Tensor::zeros({concat, c.classes}, true);
  ag::init::glorot_uniform(out_w, concat, c.classes, rng);
  out_b = ag::Tensor::zeros({c.classes}, true);
}

ag::Tensor TextCnnModel::logits(std::span<const std::vector<int>> batch, Mode mode,
                                Rng& rng) const {
  if (batch.empty()) throw ContractError("text CNN forward on an empty batch");
  std::vector<std::vector<ag::Tensor>> pooled(branches.size());
  for (const auto& ids : batch) {
    if (ids.size() != config_.seq_len) {
      throw DimensionError(fmt::format("report has {} ids, model expects {}", ids.size(),
                                       config_.seq_len));
    }
    auto x = ag::embedding(embedding, ids);
    for (std::size_t b = 0; b < branches.size(); ++b) {
      const auto& br = branches[b];
      auto map = ag::relu(ag::conv1d_valid(x, br.filters, br.bias, br.width));
      pooled[b].push_back(ag::max_over_time(map).values);
    }
  }
  const bool train = mode == Mode::Train;
  std::vector<ag::Tensor> heads;
  for (std::size_t b = 0; b < branches.size(); ++b) {
    auto p = ag::dropout(ag::stack_rows(pooled[b]), config_.dropout, train, rng);
    heads.push_back(ag::relu(ag::linear(p, branches[b].dense_w, branches[b].dense_b)));
  }
  return ag::linear(ag::concat_cols(heads), out_w, out_b);
}

ag::Tensor TextCnnModel::forward(std::span<const std::vector<int>> batch, Mode mode,
                                 Rng& rng) const {
  return ag::sigmoid(logits(batch, mode, rng));
}

std::vector<std::vector<double>> TextCnnModel::predict_scores(
    std::span<const std::vector<int>> batch) const {
  ag::NoGradGuard no_grad;
  Rng unused(0);
  auto s = forward(batch, Mode::Eval, unused);
  std::vector<std::vector<double>> out(batch.size());
  const std::size_t k = s.cols();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out[i].assign(s.values().begin() + static_cast<std::ptrdiff_t>(i * k),
                  s.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
  }
  return out;
}

std::vector<NamedTensor> TextCnnModel::parameters() const {
  std::vector<NamedTensor> out{{"embedding", embedding}};
  for (const auto& b : branches) {
    const auto tag = fmt::format("branch{}", b.width);
    out.push_back({tag + ".filters", b.filters});
    out.push_back({tag + ".bias", b.bias});
    out.push_back({tag + ".dense_w", b.dense_w});
    out.push_back({tag + ".dense_b", b.dense_b});
  }
  out.push_back({"out_w", out_w});
  out.push_back({"out_b", out_b});
  return out;
}

// ---- losses -------------------------------------------------------------------

namespace {

void check_labels(const ag::Tensor& scores, std::span<const text::LabelVector> labels) {
  if (labels.size() != scores.rows()) {
    throw DimensionError(fmt::format("{} label vectors for {} score rows", labels.size(), scores.rows()));
  }
  for (const auto& y : labels) {
    if (y.size() != scores.cols()) {
      throw DimensionError(fmt::format("label vector of {} for {} classes", y.size(), scores.cols()));
    }
  }
}

double clamp_score(double p) { return std::clamp(p, kClamp, 1.0 - kClamp); }

// Summed binary cross-entropy of one row and its derivative per score.
double row_bce(const double* f, const text::LabelVector& y, double* dterm) {
  double t = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double p = clamp_score(f[j]);
    const bool clamped = p != f[j];
    if (y[j]) {
      t -= std::log(p);
      if (dterm) dterm[j] = clamped ? 0.0 : -1.0 / p;
    } else {
      t -= std::log(1.0 - p);
      if (dterm) dterm[j] = clamped ? 0.0 : 1.0 / (1.0 - p);
    }
  }
  return t;
}

}  // namespace

ag::Tensor modified_sce_loss(const ag::Tensor& scores, std::span<const text::LabelVector> labels,
                             const LossWeights& weights) {
  check_labels(scores, labels);
  const std::size_t b = scores.rows(), k = scores.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  std::vector<double> dscore(b * k, 0.0);
  std::vector<double> dbce(k);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* f = scores.values().data() + i * k;
    const auto& y = labels[i];
    const double term1 = row_bce(f, y, dbce.data());
    double pos = 0.0, neg = 0.0, recall_num = 0.0, tnr_num = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (y[j]) {
        pos += 1.0;
        recall_num += f[j];
      } else {
        neg += 1.0;
        tnr_num += 1.0 - f[j];
      }
    }
    const double term2 = recall_num / (pos + kRatioEps);
    const double term3 = tnr_num / (neg + kRatioEps);
    total += weights.bce * term1 - weights.soft_recall * term2 - weights.soft_tnr * term3;
    for (std::size_t j = 0; j < k; ++j) {
      const double d2 = y[j] ? 1.0 / (pos + kRatioEps) : 0.0;
      const double d3 = y[j] ? 0.0 : -1.0 / (neg + kRatioEps);
      dscore[i * k + j] =
          (weights.bce * dbce[j] - weights.soft_recall * d2 - weights.soft_tnr * d3) * inv_b;
    }
  }
  auto sn = scores.handle();
  return ag::make_result("modified_sce", {1}, {total / static_cast<double>(b)}, {scores},
                         [sn, dscore = std::move(dscore)](ag::Node& self) {
                           auto& g = sn->ensure_grad();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * dscore[i];
                         });
}

ag::Tensor bce_loss(const ag::Tensor& scores, std::span<const text::LabelVector> labels) {
  check_labels(scores, labels);
  const std::size_t b = scores.rows(), k = scores.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  std::vector<double> dscore(b * k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    total += row_bce(scores.values().data() + i * k, labels[i], dscore.data() + i * k);
    for (std::size_t j = 0; j < k; ++j) dscore[i * k + j] *= inv_b;
  }
  auto sn = scores.handle();
  return ag::make_result("bce", {1}, {total / static_cast<double>(b)}, {scores},
                         [sn, dscore = std::move(dscore)](ag::Node& self) {
                           auto& g = sn->ensure_grad();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * dscore[i];
                         });
}

text::LabelVector predict_labels(std::span<const double> scores, double threshold) {
  text::LabelVector y(scores.size(), 0);
  for (std::size_t j = 0; j < scores.size(); ++j) y[j] = scores[j] >= threshold ? 1 : 0;
  return y;
}

std::vector<int> assemble_ids(const LabeledReport& r, std::span<const std::size_t> order,
                              std::size_t length) {
  std::vector<int> ids;
  ids.reserve(length);
  auto append = [&](const std::vector<int>& seg) {
    for (int id : seg) {
      if (ids.size() == length) return;
      ids.push_back(id);
    }
  };
  if (order.empty()) {
    for (const auto& s : r.segments) append(s);
  } else {
    for (auto i : order) append(r.segments.at(i));
  }
  ids.resize(length, text::kPad);
  return ids;
}

// ---- training -----------------------------------------------------------------

namespace {

ag::Tensor batch_loss(const ag::Tensor& scores, std::span<const text::LabelVector> labels,
                      const LossWeights& w, LossKind kind) {
  return kind == LossKind::Modified ? modified_sce_loss(scores, labels, w)
                                    : bce_loss(scores, labels);
}

std::vector<std::vector<double>> snapshot(const TextCnnModel& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void restore(TextCnnModel& m, const std::vector<std::vector<double>>& snap) {
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(snap[i].begin(), snap[i].end(), params[i].tensor.mutable_values().begin());
  }
}

}  // namespace

double evaluate_loss(const TextCnnModel& model, std::span<const LabeledReport> data,
                     const LossWeights& weights, LossKind kind, std::size_t batch_size) {
  if (data.empty()) throw ContractError("evaluate_loss: empty dataset");
  ag::NoGradGuard no_grad;
  Rng unused(0);
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<std::vector<int>> ids;
    std::vector<text::LabelVector> labels;
    for (std::size_t i = start; i < end; ++i) {
      ids.push_back(assemble_ids(data[i], {}, model.config().seq_len));
      labels.push_back(data[i].labels);
    }
    auto scores = model.forward(ids, Mode::Eval, unused);
    total += batch_loss(scores, labels, weights, kind).item() * static_cast<double>(end - start);
  }
  return total / static_cast<double>(data.size());
}

TrainResult train_textcnn(std::span<const LabeledReport> train, std::span<const LabeledReport> val,
                          const TextCnnConfig& config, const TrainSchedule& schedule,
                          std::uint64_t seed) {
  if (train.empty() || val.empty()) throw ContractError("train_textcnn needs non-empty train and validation splits");
  if (schedule.batch_size == 0) throw ContractError("batch size must be at least 1");
  Rng root(seed);
  Rng init_rng = root.fork();
  Rng sample_rng = root.fork();
  Rng dropout_rng = root.fork();

  TrainResult result{TextCnnModel(config, init_rng), {}, 0};
  auto& model = result.model;
  std::vector<ag::Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  Adam adam(params, AdamConfig{schedule.learning_rate});

  std::vector<text::LabelVector> labels;
  std::vector<std::size_t> seg_counts;
  for (const auto& r : train) {
    labels.push_back(r.labels);
    seg_counts.push_back(r.segments.size());
  }
  dataio::BalancedBatcher batcher(labels, seg_counts, sample_rng);
  if (!batcher.skipped_classes().empty()) {
    log::info("{} classes have no training instance and are skipped by the sampler",
              batcher.skipped_classes().size());
  }
  if (batcher.active_classes().empty()) throw DataError("no training instance carries a label");

  const std::size_t batches = (train.size() + schedule.batch_size - 1) / schedule.batch_size;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  auto best_params = snapshot(model);

  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    batcher.new_epoch();
    double train_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      auto items = batcher.next_batch(schedule.batch_size);
      std::vector<std::vector<int>> ids;
      std::vector<text::LabelVector> ys;
      for (const auto& it : items) {
        ids.push_back(assemble_ids(train[it.instance], it.segment_order, config.seq_len));
        ys.push_back(train[it.instance].labels);
      }
      adam.zero_grad();
      auto loss = batch_loss(model.forward(ids, Mode::Train, dropout_rng), ys, config.loss,
                             schedule.loss);
      if (!std::isfinite(loss.item())) {
        throw DivergenceError(fmt::format("text CNN loss became {} at epoch {}", loss.item(), epoch));
      }
      loss.backward();
      adam.step();
      train_sum += loss.item();
    }
    const double val_loss =
        evaluate_loss(model, val, config.loss, schedule.loss, schedule.batch_size);
    if (!std::isfinite(val_loss)) {
      throw DivergenceError(fmt::format("validation loss became {} at epoch {}", val_loss, epoch));
    }
    result.history.push_back({epoch, train_sum / static_cast<double>(batches), val_loss});
    log::debug("textcnn epoch {} train {:.6f} val {:.6f}", epoch, result.history.back().train_loss,
               val_loss);
    if (val_loss < best) {
      best = val_loss;
      since_best = 0;
      result.best_epoch = epoch;
      best_params = snapshot(model);
    } else if (++since_best >= schedule.patience) {
      break;
    }
  }
  restore(model, best_params);
  return result;
}

}  // namespace meshgen::textcnn
