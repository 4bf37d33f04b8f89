#include "flusense/pretrain/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "flusense/common/errors.hpp"
#include "flusense/pretrain/losses.hpp"
#include "flusense/pretrain/pairs.hpp"
#include "flusense/tensor/adam.hpp"
#include "flusense/tensor/ops.hpp"

namespace flusense::pretrain {
namespace {

using model::ModelParams;
using tensor::AdamOptions;
using tensor::AdamState;

// One optimizer step on the loss built by `fn`; returns the loss value.
template <typename LossFn>
double Step(std::vector<Tensor>& trainable, AdamState<float>& adam, LossFn&& fn) {
  tensor::ZeroGrad(trainable);
  tensor::Tape tape;
  double value = 0.0;
  {
    tensor::TapeScope scope(tape);
    const Tensor loss = fn();
    value = loss.item();
    tape.Backward(loss);
  }
  tensor::AdamStep(trainable, adam);
  return value;
}

std::vector<std::vector<std::size_t>> Batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  return out;
}

std::vector<std::size_t> SampleEpoch(const std::vector<std::size_t>& pool, std::size_t budget, Rng& rng) {
  std::vector<std::size_t> out = pool;
  rng.Shuffle(out);
  if (budget > 0 && budget < out.size()) out.resize(budget);
  return out;
}

Tensor TargetBatch(const FeatureTargets& targets, std::span<const std::size_t> idx) {
  constexpr std::size_t kF = features::kDailyFeatureCount;
  auto out = Tensor::Zeros({idx.size(), kF});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    std::copy(targets.values[idx[b]].begin(), targets.values[idx[b]].end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(b * kF));
  }
  return out;
}

std::string JsonKeyError(const nlohmann::json& j, const std::set<std::string>& keys, const char* what) {
  if (!j.is_object()) return std::string(what) + " must be a JSON object";
  for (const auto& [key, value] : j.items()) {
    if (!keys.contains(key)) return std::string("unknown ") + what + " key: " + key;
  }
  return {};
}

double PositiveProbability(const Tensor& logits, std::size_t row) {
  const double l0 = logits.data()[row * 2], l1 = logits.data()[row * 2 + 1];
  return 1.0 / (1.0 + std::exp(l0 - l1));
}

void RequireBinaryHead(const ModelParams& params) {
  if (params.head.kind != model::HeadKind::kClassification || params.config.head_outputs != 2) {
    throw ConfigError("scoring needs a 2-way classification head");
  }
}

struct Holdout {
  std::vector<std::size_t> train_pos, train_neg, validation;
};

Holdout SplitHoldout(std::span<const int> labels, const FinetuneSpec& spec, Rng& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
    (labels[i] ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) throw DataError("finetuning needs both classes");
  Holdout h;
  const auto vp = static_cast<std::size_t>(std::round(spec.validation_fraction * static_cast<double>(pos.size())));
  const auto vn = static_cast<std::size_t>(std::round(spec.validation_fraction * static_cast<double>(neg.size())));
  // Early stopping only when both sides keep at least one positive.
  if (spec.early_stopping && vp >= 1 && vp < pos.size() && vn >= 1) {
    rng.Shuffle(pos);
    rng.Shuffle(neg);
    h.validation.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(vp));
    h.validation.insert(h.validation.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(vn));
    std::sort(h.validation.begin(), h.validation.end());
    pos.erase(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(vp));
    neg.erase(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(vn));
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
  }
  h.train_pos = std::move(pos);
  h.train_neg = std::move(neg);
  return h;
}

// Shared epoch loop: `step` trains on one batch and returns its loss,
// `validate` returns the held-out loss of the current params.
template <typename StepFn, typename ValidateFn>
FitResult FitLoop(ModelParams params, const Holdout& h, const FinetuneSpec& spec, Rng& rng, StepFn&& step,
                  ValidateFn&& validate) {
  FitResult result;
  double best = std::numeric_limits<double>::infinity();
  ModelParams best_params;
  int since_best = 0;
  Rng sample_rng = rng.Split("epochs");
  std::size_t steps = 0;
  for (int epoch = 0; epoch < spec.epochs || steps < spec.min_steps; ++epoch) {
    std::vector<std::size_t> order = h.train_pos;
    const auto negatives = SampleEpoch(h.train_neg, spec.negatives_per_epoch, sample_rng);
    order.insert(order.end(), negatives.begin(), negatives.end());
    sample_rng.Shuffle(order);
    double total = 0.0;
    const auto batches = Batches(order, spec.batch_size);
    for (const auto& b : batches) total += step(params, b);
    steps += batches.size();
    result.epoch_loss.push_back(total / static_cast<double>(batches.size()));
    if (h.validation.empty()) continue;
    const double v = validate(params);
    result.validation_loss.push_back(v);
    if (v < best) {
      best = v;
      best_params = params.Clone();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= spec.patience) {
      break;
    }
  }
  result.params = h.validation.empty() ? std::move(params) : std::move(best_params);
  return result;
}

// With balancing, positives are up-weighted by the ratio of negatives to
// positives seen per epoch.
std::vector<float> ClassWeights(const FinetuneSpec& spec, const Holdout& h) {
  double w = spec.positive_weight;
  if (spec.balance_classes && !h.train_pos.empty()) {
    std::size_t negatives = h.train_neg.size();
    if (spec.negatives_per_epoch > 0) negatives = std::min(negatives, spec.negatives_per_epoch);
    w *= static_cast<double>(negatives) / static_cast<double>(h.train_pos.size());
  }
  return {1.0f, static_cast<float>(w)};
}

}  // namespace

std::string_view PretrainTaskName(PretrainTask task) {
  switch (task) {
    case PretrainTask::kSameUser: return "same_user";
    case PretrainTask::kAutoencoder: return "autoencoder";
    case PretrainTask::kDomainFeatures: return "domain_features";
  }
  return "?";
}

PretrainTask ParsePretrainTask(std::string_view name) {
  for (auto t : {PretrainTask::kSameUser, PretrainTask::kAutoencoder, PretrainTask::kDomainFeatures}) {
    if (PretrainTaskName(t) == name) return t;
  }
  throw ConfigError("unknown pretraining task: " + std::string(name));
}

void PretrainSpec::Validate() const {
  if (epochs < 1) throw ConfigError("pretrain epochs must be positive");
  if (batch_size < 1) throw ConfigError("pretrain batch size must be positive");
  if (task == PretrainTask::kSameUser && pair_count < 2) throw ConfigError("pair count must be at least 2");
  if (!(learning_rate > 0)) throw ConfigError("pretrain learning rate must be positive");
}

nlohmann::json ToJson(const PretrainSpec& s) {
  return {{"task", PretrainTaskName(s.task)},   {"pair_count", s.pair_count}, {"windows_per_epoch", s.windows_per_epoch},
          {"epochs", s.epochs},                 {"batch_size", s.batch_size}, {"learning_rate", s.learning_rate}};
}

PretrainSpec PretrainSpecFromJson(const nlohmann::json& j) {
  if (auto e = JsonKeyError(j, {"task", "pair_count", "windows_per_epoch", "epochs", "batch_size", "learning_rate"},
                            "pretrain spec");
      !e.empty()) {
    throw ConfigError(e);
  }
  PretrainSpec s;
  try {
    if (j.contains("task")) s.task = ParsePretrainTask(j.at("task").get<std::string>());
    s.pair_count = j.value("pair_count", s.pair_count);
    s.windows_per_epoch = j.value("windows_per_epoch", s.windows_per_epoch);
    s.epochs = j.value("epochs", s.epochs);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pretrain spec: ") + e.what());
  }
  s.Validate();
  return s;
}

void FinetuneSpec::Validate() const {
  if (epochs < 1) throw ConfigError("finetune epochs must be positive");
  if (batch_size < 1) throw ConfigError("finetune batch size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("finetune learning rate must be positive");
  if (!(validation_fraction >= 0 && validation_fraction < 1)) throw ConfigError("validation fraction must be in [0, 1)");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (!(positive_weight > 0)) throw ConfigError("positive weight must be positive");
}

nlohmann::json ToJson(const FinetuneSpec& s) {
  return {{"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"learning_rate", s.learning_rate},
          {"validation_fraction", s.validation_fraction},
          {"early_stopping", s.early_stopping},
          {"patience", s.patience},
          {"positive_weight", s.positive_weight},
          {"negatives_per_epoch", s.negatives_per_epoch},
          {"balance_classes", s.balance_classes},
          {"min_steps", s.min_steps}};
}

FinetuneSpec FinetuneSpecFromJson(const nlohmann::json& j) {
  if (auto e = JsonKeyError(j,
                            {"epochs", "batch_size", "learning_rate", "validation_fraction", "early_stopping",
                             "patience", "positive_weight", "negatives_per_epoch", "balance_classes", "min_steps"},
                            "finetune spec");
      !e.empty()) {
    throw ConfigError(e);
  }
  FinetuneSpec s;
  try {
    s.epochs = j.value("epochs", s.epochs);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.validation_fraction = j.value("validation_fraction", s.validation_fraction);
    s.early_stopping = j.value("early_stopping", s.early_stopping);
    s.patience = j.value("patience", s.patience);
    s.min_steps = j.value("min_steps", s.min_steps);
    s.positive_weight = j.value("positive_weight", s.positive_weight);
    s.negatives_per_epoch = j.value("negatives_per_epoch", s.negatives_per_epoch);
    s.balance_classes = j.value("balance_classes", s.balance_classes);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("finetune spec: ") + e.what());
  }
  s.Validate();
  return s;
}

void PrepareForTask(ModelParams& params, PretrainTask task, Rng& rng) {
  switch (task) {
    case PretrainTask::kSameUser: model::ResetHead(params, model::HeadKind::kPairClassification, 2, rng); break;
    case PretrainTask::kAutoencoder:
      if (!params.has_decoder) model::AttachDecoder(params, rng);
      break;
    case PretrainTask::kDomainFeatures:
      model::ResetHead(params, model::HeadKind::kRegression, features::kDailyFeatureCount, rng);
      break;
  }
}

PretrainResult Pretrain(const WindowDataset& data, const PretrainSpec& spec, const model::ModelConfig& config,
                        Rng& rng) {
  Rng init = rng.Split("init");
  ModelParams params = model::InitParams(config, init);
  Rng head = rng.Split("task_head");
  PrepareForTask(params, spec.task, head);
  Rng train = rng.Split("train");
  return Pretrain(data, spec, std::move(params), train);
}

PretrainResult Pretrain(const WindowDataset& data, const PretrainSpec& spec, ModelParams params, Rng& rng) {
  spec.Validate();
  if (data.size() == 0) throw DataError("pretraining needs at least one window");
  PretrainResult result;
  std::vector<Tensor> trainable = params.BackboneParameters();
  const auto extra = spec.task == PretrainTask::kAutoencoder ? params.DecoderParameters() : params.HeadParameters();
  trainable.insert(trainable.end(), extra.begin(), extra.end());
  auto adam = AdamState<float>::Create(trainable, AdamOptions{.learning_rate = spec.learning_rate});
  Rng dropout = rng.Split("dropout");
  Rng sampler = rng.Split("sampler");
  const model::Mode mode{true, &dropout};

  if (spec.task == PretrainTask::kSameUser) {
    Rng pair_rng = rng.Split("pairs");
    const auto pairs = SamplePairs(data, spec.pair_count, pair_rng);
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
      auto order = AllIndices(pairs.size());
      sampler.Shuffle(order);
      double total = 0.0;
      const auto batches = Batches(order, spec.batch_size);
      for (const auto& b : batches) {
        std::vector<std::size_t> ia, ib;
        std::vector<int> same;
        for (std::size_t k : b) {
          ia.push_back(pairs[k].a);
          ib.push_back(pairs[k].b);
          same.push_back(pairs[k].same_user);
        }
        const Tensor xa = data.Batch(ia), xb = data.Batch(ib);
        total += Step(trainable, adam, [&] { return SameUserLoss(xa, xb, same, params, mode); });
      }
      result.epoch_loss.push_back(total / static_cast<double>(batches.size()));
    }
    result.params = std::move(params);
    return result;
  }

  FeatureTargets targets;
  std::vector<std::size_t> pool;
  if (spec.task == PretrainTask::kDomainFeatures) {
    targets = ComputeFeatureTargets(data);
    result.scaler = targets.scaler;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (targets.valid[i]) pool.push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.HasReadings(i)) pool.push_back(i);
    }
  }
  if (pool.empty()) throw DataError("no window carries a pretraining target");

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const auto order = SampleEpoch(pool, spec.windows_per_epoch, sampler);
    double total = 0.0;
    const auto batches = Batches(order, spec.batch_size);
    for (const auto& b : batches) {
      const Tensor x = data.Batch(b);
      if (spec.task == PretrainTask::kDomainFeatures) {
        const Tensor y = TargetBatch(targets, b);
        total += Step(trainable, adam, [&] { return DomainFeatureLoss(x, y, params, mode); });
      } else {
        const Tensor observed = data.ObservedMask(b);
        total += Step(trainable, adam, [&] { return AutoencodeLoss(x, observed, params, mode); });
      }
    }
    result.epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  result.params = std::move(params);
  return result;
}

Tensor GatherRows(const Tensor& matrix, std::span<const std::size_t> rows) {
  if (matrix.rank() != 2) throw DimensionError("GatherRows expects a matrix");
  const std::size_t width = matrix.dim(1);
  auto out = Tensor::Zeros({rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= matrix.dim(0)) throw DimensionError("GatherRows: row out of range");
    const auto src = matrix.data().subspan(rows[i] * width, width);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return out;
}

Tensor EmbedWindows(ModelParams& params, const WindowDataset& data, std::span<const std::size_t> indices,
                    std::size_t batch_size) {
  const std::size_t d = params.config.d_model;
  auto out = Tensor::Zeros({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); i += batch_size) {
    const auto chunk = indices.subspan(i, std::min(batch_size, indices.size() - i));
    const Tensor e = model::Embed(data.Batch(chunk), params, {});
    std::copy(e.data().begin(), e.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return out;
}

FitResult FinetuneHead(const ModelParams& pretrained, const Tensor& embeddings, std::span<const int> labels,
                       const FinetuneSpec& spec, Rng& rng) {
  spec.Validate();
  if (embeddings.rank() != 2 || embeddings.dim(0) != labels.size() ||
      embeddings.dim(1) != pretrained.config.d_model) {
    throw DimensionError("finetune: embeddings must be (N, d_model) with one label per row");
  }
  ModelParams params = pretrained.Clone();
  params.has_decoder = false;
  params.decoder = {};
  Rng head = rng.Split("head");
  model::ResetHead(params, model::HeadKind::kClassification, 2, head);
  Rng split = rng.Split("holdout");
  const Holdout h = SplitHoldout(labels, spec, split);
  std::vector<Tensor> trainable = params.HeadParameters();
  auto adam = AdamState<float>::Create(trainable, AdamOptions{.learning_rate = spec.learning_rate});
  Rng dropout = rng.Split("dropout");
  const auto weights = ClassWeights(spec, h);
  const Tensor validation = h.validation.empty() ? Tensor() : GatherRows(embeddings, h.validation);
  std::vector<int> validation_labels;
  for (std::size_t i : h.validation) validation_labels.push_back(labels[i]);

  return FitLoop(
      std::move(params), h, spec, rng,
      [&](ModelParams& p, const std::vector<std::size_t>& b) {
        const Tensor x = GatherRows(embeddings, b);
        std::vector<int> y;
        for (std::size_t i : b) y.push_back(labels[i]);
        return Step(trainable, adam, [&] {
          return tensor::CrossEntropyLoss(model::ApplyHead(x, p, {true, &dropout}), std::span<const int>(y),
                                          std::span<const float>(weights));
        });
      },
      [&](ModelParams& p) {
        return static_cast<double>(
            tensor::CrossEntropyLoss(model::ApplyHead(validation, p, {}), std::span<const int>(validation_labels),
                                     std::span<const float>(weights))
                .item());
      });
}

FitResult Finetune(const ModelParams& pretrained, const WindowDataset& data, std::span<const int> labels,
                   const FinetuneSpec& spec, Rng& rng) {
  ModelParams frozen = pretrained.Clone();
  const auto all = AllIndices(data.size());
  const Tensor embeddings = EmbedWindows(frozen, data, all);
  return FinetuneHead(pretrained, embeddings, labels, spec, rng);
}

FitResult TrainSupervised(ModelParams params, const WindowDataset& data, std::span<const int> labels,
                          const FinetuneSpec& spec, Rng& rng) {
  spec.Validate();
  if (labels.size() != data.size()) throw DimensionError("one label per window required");
  RequireBinaryHead(params);
  Rng split = rng.Split("holdout");
  const Holdout h = SplitHoldout(labels, spec, split);
  std::vector<Tensor> trainable = params.BackboneParameters();
  const auto head = params.HeadParameters();
  trainable.insert(trainable.end(), head.begin(), head.end());
  auto adam = AdamState<float>::Create(trainable, AdamOptions{.learning_rate = spec.learning_rate});
  Rng dropout = rng.Split("dropout");
  const auto weights = ClassWeights(spec, h);

  return FitLoop(
      std::move(params), h, spec, rng,
      [&](ModelParams& p, const std::vector<std::size_t>& b) {
        const Tensor x = data.Batch(b);
        std::vector<int> y;
        for (std::size_t i : b) y.push_back(labels[i]);
        return Step(trainable, adam, [&] {
          return tensor::CrossEntropyLoss(model::Predict(x, p, {true, &dropout}), std::span<const int>(y),
                                          std::span<const float>(weights));
        });
      },
      [&](ModelParams& p) {
        // Weighted mean over chunks: each chunk mean is scaled back by its weight sum.
        double total = 0.0, weight = 0.0;
        for (std::size_t i = 0; i < h.validation.size(); i += 64) {
          const auto chunk =
              std::span<const std::size_t>(h.validation).subspan(i, std::min<std::size_t>(64, h.validation.size() - i));
          std::vector<int> y;
          double chunk_weight = 0.0;
          for (std::size_t k : chunk) {
            y.push_back(labels[k]);
            chunk_weight += weights[static_cast<std::size_t>(labels[k])];
          }
          const double loss = tensor::CrossEntropyLoss(model::Predict(data.Batch(chunk), p, {}),
                                                       std::span<const int>(y), std::span<const float>(weights))
                                  .item();
          total += loss * chunk_weight;
          weight += chunk_weight;
        }
        return total / weight;
      });
}

std::vector<double> ScoreWindows(ModelParams& params, const WindowDataset& data,
                                 std::span<const std::size_t> indices, std::size_t batch_size) {
  RequireBinaryHead(params);
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); i += batch_size) {
    const auto chunk = indices.subspan(i, std::min(batch_size, indices.size() - i));
    const Tensor logits = model::Predict(data.Batch(chunk), params, {});
    for (std::size_t r = 0; r < chunk.size(); ++r) out.push_back(PositiveProbability(logits, r));
  }
  return out;
}

std::vector<double> ScoreEmbeddings(ModelParams& params, const Tensor& embeddings) {
  RequireBinaryHead(params);
  const Tensor logits = model::ApplyHead(embeddings, params, {});
  std::vector<double> out(embeddings.dim(0));
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = PositiveProbability(logits, r);
  return out;
}

void WriteLossCsv(const std::filesystem::path& path, std::span<const double> loss) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e + 1, loss[e]);
    out << buf;
  }
}

}  // namespace flusense::pretrain
