#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "flusense/common/errors.hpp"
#include "flusense/datagen/cohort.hpp"
#include "flusense/datagen/splits.hpp"
#include "flusense/pretrain/dataset.hpp"
#include "flusense/pretrain/losses.hpp"
#include "flusense/pretrain/pairs.hpp"
#include "flusense/pretrain/train.hpp"
#include "flusense/tensor/checkpoint.hpp"
#include "flusense/tensor/ops.hpp"

using namespace flusense;
using namespace flusense::pretrain;
using flusense::model::ModelParams;

namespace {

const datagen::Cohort& SmallCohort() {
  static const datagen::Cohort cohort = [] {
    datagen::CohortConfig c;
    c.name = "small";
    c.user_count = 6;
    c.days_per_user = 24;
    c.season_midpoint_day = 12;
    c.seed = 5;
    return datagen::GenerateCohort(c);
  }();
  return cohort;
}

model::ModelConfig Fast() { return model::FastProfileConfig(); }

WindowDataset FastData(std::vector<datagen::WindowRef> refs = {}) {
  const auto& cohort = SmallCohort();
  if (refs.empty()) refs = datagen::ExtractWindows(cohort, 1);
  auto stats = datagen::StatsOverWindows(cohort, refs, 1);
  return WindowDataset(cohort, std::move(refs), stats, Fast());
}

// Ten windows from two users, far enough apart for same-user pairs.
WindowDataset ProbeData() {
  std::vector<datagen::WindowRef> refs;
  for (std::size_t u = 0; u < 2; ++u) {
    for (int d : {3, 7, 11, 15, 19}) refs.push_back({u, SmallCohort().users[u].user_id, d});
  }
  return FastData(refs);
}

std::string Blob(const std::vector<tensor::NamedTensor>& named, bool head) {
  std::string out;
  for (const auto& t : named) {
    if ((t.name.rfind("head.", 0) == 0) == head) out += t.name + tensor::Float32Bytes(t.tensor);
  }
  return out;
}

}  // namespace

TEST_CASE("dataset batches, masks and labels") {
  const auto data = FastData();
  CHECK(data.size() == 6 * 23);
  const std::vector<std::size_t> idx{0, 5, 9};
  const auto x = data.Batch(idx);
  CHECK(x.shape() == tensor::Shape{3, 10, 1440});
  const auto mask = data.ObservedMask(idx);
  CHECK(mask.shape() == tensor::Shape{3, 5, 1440});
  // Flag channels are the complement of the observed mask.
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t s = 0; s < 5; ++s) {
      for (std::size_t t = 0; t < 1440; t += 37) {
        CHECK(x.data()[(b * 10 + 5 + s) * 1440 + t] == 1.0f - mask.data()[(b * 5 + s) * 1440 + t]);
      }
    }
  }
  const auto labels = TaskLabels(data, datagen::Task::kFluSymptoms);
  CHECK(labels.size() == data.size());

  AccessAudit audit;
  WindowDataset audited = data;
  audited.set_audit(&audit);
  audit.SetPhase("train");
  audited.Batch(idx);
  audit.SetPhase("score");
  audited.Batch(idx);
  audited.Batch(idx);
  CHECK(audit.Reads("small", "train") == 3);
  CHECK(audit.Reads("small", "score") == 6);
  CHECK(audit.Reads("other", "train") == 0);
}

TEST_CASE("feature targets are standardized") {
  const auto data = FastData();
  const auto t = ComputeFeatureTargets(data);
  for (std::size_t f = 0; f < features::kDailyFeatureCount; ++f) {
    double sum = 0, sq = 0, n = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!t.valid[i]) continue;
      sum += t.values[i][f];
      sq += t.values[i][f] * t.values[i][f];
      n += 1;
    }
    CHECK(std::abs(sum / n) < 1e-4);
    const double var = sq / n;
    CHECK((std::abs(var - 1.0) < 1e-3 || var == 0.0));
  }
  const auto again = ComputeFeatureTargets(data, &t.scaler);
  CHECK(again.values == t.values);
}

TEST_CASE("pair sampling") {
  const auto data = ProbeData();
  Rng rng(3);
  const auto pairs = SamplePairs(data, 4, rng);
  REQUIRE(pairs.size() == 4);
  int same = 0;
  for (const auto& p : pairs) {
    same += p.same_user;
    const auto& a = data.ref(p.a);
    const auto& b = data.ref(p.b);
    if (p.same_user) {
      CHECK(a.user_id == b.user_id);
      CHECK(std::abs(a.label_day - b.label_day) >= data.window_days());
    } else {
      CHECK(a.user_id != b.user_id);
    }
  }
  CHECK(same == 2);

  Rng r1(9), r2(9);
  const auto p1 = SamplePairs(data, 101, r1);
  const auto p2 = SamplePairs(data, 101, r2);
  CHECK(p1.size() == 101);
  bool equal = true;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    equal = equal && p1[i].a == p2[i].a && p1[i].b == p2[i].b && p1[i].same_user == p2[i].same_user;
  }
  CHECK(equal);

  std::vector<datagen::WindowRef> one_user;
  for (int d : {3, 9, 15}) one_user.push_back({0, SmallCohort().users[0].user_id, d});
  Rng r3(1);
  CHECK_THROWS_AS(SamplePairs(FastData(one_user), 4, r3), DataError);
}

TEST_CASE("same-user loss") {
  const auto data = ProbeData();
  Rng rng(4);
  auto params = model::InitParams(Fast(), rng);
  const std::vector<std::size_t> a{0, 1, 2, 3}, b{2, 3, 5, 6};
  const std::vector<int> same{1, 1, 0, 0};
  CHECK_THROWS_AS(SameUserLoss(data.Batch(a), data.Batch(b), same, params, {}), ConfigError);
  PrepareForTask(params, PretrainTask::kSameUser, rng);
  const double loss = SameUserLoss(data.Batch(a), data.Batch(b), same, params, {}).item();
  CHECK(std::isfinite(loss));
  CHECK(std::abs(loss - std::log(2.0)) < 0.15);
  const double self = SameUserLoss(data.Batch(a), data.Batch(a), std::vector<int>(4, 1), params, {}).item();
  CHECK(std::isfinite(self));
}

TEST_CASE("autoencoder loss masks missing entries") {
  const auto data = FastData();
  Rng rng(6);
  auto params = model::InitParams(Fast(), rng);
  const std::vector<std::size_t> idx{1, 2};
  const auto x = data.Batch(idx);
  const auto observed = data.ObservedMask(idx);
  CHECK_THROWS_AS(AutoencodeLoss(x, observed, params, {}), ConfigError);
  PrepareForTask(params, PretrainTask::kAutoencoder, rng);
  CHECK(model::Reconstruct(x, params, {}).shape() == tensor::Shape{2, 5, 1440});

  auto target = tensor::Tensor::Zeros({2, 5, 1440});
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 5 * 1440; ++i) target.data()[b * 5 * 1440 + i] = x.data()[b * 10 * 1440 + i];
  }
  const float base = AutoencodeLoss(x, observed, params, {}).item();
  CHECK(AutoencodeLoss(x, target, observed, params, {}).item() == base);
  auto perturbed = target.Detach();
  std::size_t masked = 0;
  for (std::size_t i = 0; i < perturbed.size(); ++i) {
    if (observed.data()[i] == 0.0f) {
      perturbed.data()[i] += 100.0f;
      ++masked;
    }
  }
  CHECK(masked > 0);
  CHECK(AutoencodeLoss(x, perturbed, observed, params, {}).item() == base);
  CHECK_THROWS_AS(AutoencodeLoss(x, tensor::Tensor::Zeros({2, 5, 1440}), params, {}), DataError);
}

TEST_CASE("domain-feature loss") {
  const auto data = FastData();
  Rng rng(7);
  auto params = model::InitParams(Fast(), rng);
  std::vector<std::size_t> idx;
  const auto targets = ComputeFeatureTargets(data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (targets.valid[i]) idx.push_back(i);
  }
  auto y = tensor::Tensor::Zeros({idx.size(), features::kDailyFeatureCount});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    for (std::size_t f = 0; f < features::kDailyFeatureCount; ++f) {
      y.data()[b * features::kDailyFeatureCount + f] = targets.values[idx[b]][f];
    }
  }
  CHECK_THROWS_AS(DomainFeatureLoss(data.Batch(idx), y, params, {}), ConfigError);
  PrepareForTask(params, PretrainTask::kDomainFeatures, rng);
  CHECK(params.head.weight.shape() == tensor::Shape{32, 17});
  // Predicting the training mean scores the share of non-constant features.
  for (auto& v : params.head.weight.data()) v = 0.0f;
  double expected = 0;
  for (std::size_t f = 0; f < features::kDailyFeatureCount; ++f) {
    double sq = 0;
    for (std::size_t b = 0; b < idx.size(); ++b) sq += y.data()[b * 17 + f] * y.data()[b * 17 + f];
    expected += sq / static_cast<double>(idx.size());
  }
  expected /= 17.0;
  CHECK(expected > 0.5);
  CHECK(DomainFeatureLoss(data.Batch(idx), y, params, {}).item() == doctest::Approx(expected).epsilon(1e-4));
  CHECK(tensor::MseLoss(y, y).item() == 0.0f);
}

TEST_CASE("pretraining reduces loss and is deterministic") {
  const auto data = ProbeData();
  PretrainSpec spec;
  spec.task = PretrainTask::kAutoencoder;
  spec.epochs = 50;
  spec.batch_size = 10;
  spec.learning_rate = 3e-3;
  Rng rng(1);
  const auto r = Pretrain(data, spec, Fast(), rng);
  CHECK(r.epoch_loss.size() == 50);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());

  spec.task = PretrainTask::kDomainFeatures;
  spec.epochs = 3;
  Rng a(2), b(2);
  const auto ra = Pretrain(data, spec, Fast(), a);
  const auto rb = Pretrain(data, spec, Fast(), b);
  CHECK(Blob(ra.params.Named(), false) == Blob(rb.params.Named(), false));
  CHECK(Blob(ra.params.Named(), true) == Blob(rb.params.Named(), true));
  CHECK(ra.params.head.weight.shape() == tensor::Shape{32, 17});
  CHECK(ra.params.head.kind == model::HeadKind::kRegression);

  const auto path = std::filesystem::temp_directory_path() / "flusense_loss.csv";
  WriteLossCsv(path, ra.epoch_loss);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,loss");
}

TEST_CASE("every pretraining loss decreases on a 10-window probe") {
  const auto data = ProbeData();
  // Full-batch steps without dropout, so each epoch loss is deterministic.
  auto config = Fast();
  config.dropout = 0.0;
  for (auto task : {PretrainTask::kSameUser, PretrainTask::kAutoencoder, PretrainTask::kDomainFeatures}) {
    INFO(PretrainTaskName(task));
    PretrainSpec spec;
    spec.task = task;
    spec.epochs = 5;
    spec.batch_size = 10;
    spec.pair_count = 10;
    spec.learning_rate = 1e-3;
    Rng rng(11);
    const auto r = Pretrain(data, spec, config, rng);
    for (std::size_t e = 1; e < r.epoch_loss.size(); ++e) CHECK(r.epoch_loss[e] < r.epoch_loss[e - 1]);
  }
}

TEST_CASE("finetuning leaves the backbone untouched") {
  const auto data = FastData();
  PretrainSpec spec;
  spec.epochs = 1;
  Rng rng(21);
  const auto pre = Pretrain(data, spec, Fast(), rng);
  const auto before = pre.params.Named();
  const std::string backbone = Blob(before, false);

  auto labels = TaskLabels(data, datagen::Task::kFluSymptoms);
  labels[0] = 1;
  labels[1] = 0;
  FinetuneSpec ft;
  ft.epochs = 15;
  ft.batch_size = 16;
  ft.early_stopping = false;
  Rng frng(5);
  const auto fit = Finetune(pre.params, data, labels, ft, frng);
  // 138 windows in batches of 16 over 15 epochs.
  CHECK(fit.epoch_loss.size() * 9 >= 100);
  CHECK(Blob(pre.params.Named(), false) == backbone);
  CHECK(Blob(fit.params.Named(), false) == backbone);
  CHECK(Blob(fit.params.Named(), true) != Blob(before, true));
  CHECK(fit.params.head.kind == model::HeadKind::kClassification);
  CHECK(fit.params.head.weight.shape() == tensor::Shape{32, 2});

  auto params = fit.params.Clone();
  const auto all = AllIndices(data.size());
  const auto scores = ScoreWindows(params, data, all);
  const auto emb = EmbedWindows(params, data, all);
  const auto via_emb = ScoreEmbeddings(params, emb);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    CHECK(scores[i] > 0.0);
    CHECK(scores[i] < 1.0);
    CHECK(scores[i] == doctest::Approx(via_emb[i]).epsilon(1e-5));
  }
}

TEST_CASE("supervised training with early stopping") {
  const auto data = FastData();
  auto labels = TaskLabels(data, datagen::Task::kSevereFatigue);
  for (std::size_t i = 0; i < labels.size(); i += 5) labels[i] = 1;
  FinetuneSpec ft;
  ft.epochs = 4;
  ft.patience = 1;
  ft.negatives_per_epoch = 40;
  Rng rng(8);
  auto params = model::InitParams(model::Ablate(Fast(), "no_transformer"), rng);
  Rng fit_rng(3);
  const auto fit = TrainSupervised(params, data, labels, ft, fit_rng);
  CHECK(fit.best_epoch >= 0);
  CHECK(!fit.validation_loss.empty());
  CHECK(fit.epoch_loss.size() == fit.validation_loss.size());
  CHECK_THROWS_AS(TrainSupervised(params, data, std::vector<int>(data.size(), 0), ft, fit_rng), DataError);
}

TEST_CASE("spec json round trip and validation") {
  PretrainSpec p;
  p.task = PretrainTask::kSameUser;
  p.pair_count = 64;
  CHECK(PretrainSpecFromJson(ToJson(p)).pair_count == 64);
  CHECK(PretrainSpecFromJson(ToJson(p)).task == PretrainTask::kSameUser);
  CHECK_THROWS_AS(PretrainSpecFromJson({{"epochs", 0}}), ConfigError);
  CHECK_THROWS_AS(PretrainSpecFromJson({{"bogus", 1}}), ConfigError);
  FinetuneSpec f;
  f.negatives_per_epoch = 12;
  CHECK(FinetuneSpecFromJson(ToJson(f)).negatives_per_epoch == 12);
  CHECK_THROWS_AS(FinetuneSpecFromJson({{"validation_fraction", 1.5}}), ConfigError);
  CHECK_THROWS_AS(ParsePretrainTask("contrastive"), ConfigError);
}
