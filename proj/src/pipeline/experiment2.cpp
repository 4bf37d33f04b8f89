#include <string>
#include <vector>

#include "flusense/common/errors.hpp"
#include "flusense/pipeline/experiments.hpp"
#include "flusense/stats/tests.hpp"
#include "internal.hpp"

namespace flusense::pipeline {

ExperimentOutput RunExperiment2(const ExperimentConfig& config, const RunOptions& options) {
  config.Validate();
  const internal::Stopwatch clock;
  internal::Artifacts art(options.out_dir);
  const Rng root(config.seed);
  const int wd = config.window_days();
  const datagen::Task task = config.tasks.front();
  const auto cohort = ObtainCohort(config.cohort, options.data_dir, config.threads);
  const auto split = datagen::SplitTemporal(cohort, cohort.config.season_midpoint_day, wd);
  const pretrain::WindowDataset train(cohort, split.train, split.stats, config.model);
  const pretrain::WindowDataset test(cohort, split.test, split.stats, config.model);
  const auto train_labels = RefLabels(cohort, split.train, task);
  const auto test_labels = RefLabels(cohort, split.test, task);
  const auto train_all = pretrain::AllIndices(train.size());
  const auto test_all = pretrain::AllIndices(test.size());

  const std::vector<std::string> names = {"same_user", "autoencoder", "domain_features", "none"};
  std::vector<std::vector<double>> scores(names.size());
  std::vector<nlohmann::ordered_json> rows(names.size());

  ParallelFor(names.size(), config.threads, [&](std::size_t i) {
    const std::string& name = names[i];
    Rng rng = root.Split(name);
    nlohmann::ordered_json row;
    row["pretraining"] = name;
    if (name == "none") {
      Rng init = rng.Split("init");
      auto fit = pretrain::TrainSupervised(model::InitParams(config.model, init), train, train_labels,
                                           config.supervised, rng);
      scores[i] = pretrain::ScoreWindows(fit.params, test, test_all);
      row["fit"] = internal::FitJson(fit);
      art.Loss("loss/finetune_none.csv", fit.epoch_loss);
    } else {
      auto spec = config.pretrain;
      spec.task = pretrain::ParsePretrainTask(name);
      Rng pre_rng = rng.Split("pretrain");
      auto pre = pretrain::Pretrain(train, spec, config.model, pre_rng);
      art.Loss("loss/pretrain_" + name + ".csv", pre.epoch_loss);
      const std::string frozen = BackboneBlob(pre.params);
      const Tensor emb_train = pretrain::EmbedWindows(pre.params, train, train_all);
      const Tensor emb_test = pretrain::EmbedWindows(pre.params, test, test_all);
      Rng fit_rng = rng.Split("finetune");
      auto fit = pretrain::FinetuneHead(pre.params, emb_train, train_labels, config.finetune, fit_rng);
      scores[i] = pretrain::ScoreEmbeddings(fit.params, emb_test);
      // The encoder the head was trained on must be the pretrained one, bit for bit.
      if (BackboneBlob(pre.params) != frozen || BackboneBlob(fit.params) != frozen) {
        throw std::logic_error("finetuning modified the frozen encoder (" + name + ")");
      }
      row["freeze_verified"] = true;
      row["pretrain_final_loss"] = pre.epoch_loss.back();
      row["fit"] = internal::FitJson(fit);
      art.Loss("loss/finetune_" + name + ".csv", fit.epoch_loss);
      art.Params("checkpoints/pretrained_" + name, pre.params);
      art.Params("checkpoints/finetuned_" + name, fit.params);
    }
    rows[i] = row;
  });

  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  const std::size_t reference = 2;  // domain_features
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto row = rows[i];
    const Metrics m = Evaluate(scores[i], test_labels);
    const auto cell = ToJson(m);
    for (const auto& [k, v] : cell.items()) row[k] = v;
    if (i != reference) {
      const auto d = stats::DelongTest(scores[reference], scores[i], test_labels);
      row["delong_vs_domain_features"] = {{"z", d.z}, {"p", d.p}};
    }
    results.push_back(row);
    const auto roc = stats::RocCurve(scores[i], test_labels);
    const auto pr = stats::PrCurve(scores[i], test_labels);
    if (art.enabled()) {
      WriteCurveCsv(art.Path("curves/roc_" + names[i] + ".csv"), roc, "fpr", "tpr");
      WriteCurveCsv(art.Path("curves/pr_" + names[i] + ".csv"), pr, "recall", "precision");
    }
  }

  ExperimentOutput out;
  const auto digest = CohortDigest(cohort);
  auto& r = out.report;
  r["experiment"] = "exp2";
  r["config_hash"] = ConfigHash(config);
  r["input_digest"] = digest;
  r["task"] = datagen::TaskName(task);
  r["train_windows"] = split.train.size();
  r["train_positives"] = std::count(train_labels.begin(), train_labels.end(), 1);
  r["results"] = results;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& row : results) {
    metrics[row["pretraining"].get<std::string>()] = {{"roc_auc", row["roc_auc"]}, {"pr_auc", row["pr_auc"]}};
  }
  out.record = MakeRunRecord(config, digest, clock.Seconds(), art.checkpoints(), metrics);
  WriteOutputs(options, out);
  return out;
}

}  // namespace flusense::pipeline
