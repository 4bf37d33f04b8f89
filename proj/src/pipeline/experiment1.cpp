#include <string>
#include <vector>

#include "flusense/common/errors.hpp"
#include "flusense/pipeline/experiments.hpp"
#include "flusense/stats/critical_difference.hpp"
#include "flusense/stats/tests.hpp"
#include "internal.hpp"

namespace flusense::pipeline {
namespace {

using datagen::Task;
using internal::Artifacts;

std::string Cell(Task task, ModelKind kind) {
  return std::string(datagen::TaskName(task)) + "_" + std::string(ModelKindName(kind));
}

}  // namespace

ExperimentOutput RunExperiment1(const ExperimentConfig& config, const RunOptions& options) {
  config.Validate();
  const internal::Stopwatch clock;
  Artifacts art(options.out_dir);
  const Rng root(config.seed);
  const int wd = config.window_days();
  const auto cohort = ObtainCohort(config.cohort, options.data_dir, config.threads);
  const auto split = datagen::SplitTemporal(cohort, cohort.config.season_midpoint_day, wd);
  const std::size_t n_tasks = config.tasks.size();
  const std::size_t n_models = config.models.size();

  std::vector<std::vector<int>> train_labels, test_labels;
  for (auto task : config.tasks) {
    train_labels.push_back(RefLabels(cohort, split.train, task));
    test_labels.push_back(RefLabels(cohort, split.test, task));
  }
  // scores[task][model] over the test windows.
  std::vector<std::vector<std::vector<double>>> scores(n_tasks, std::vector<std::vector<double>>(n_models));
  std::vector<std::vector<nlohmann::ordered_json>> fits(n_tasks, std::vector<nlohmann::ordered_json>(n_models));

  for (std::size_t mi = 0; mi < n_models; ++mi) {
    const ModelKind kind = config.models[mi];
    const std::string name(ModelKindName(kind));
    const Rng model_rng = root.Split(name);

    if (kind == ModelKind::kGbdt) {
      const DailyFeatureTable table(cohort);
      const auto x_train = ConcatenatedFeatures(table, split.train, wd);
      const auto x_test = ConcatenatedFeatures(table, split.test, wd);
      std::vector<baseline::GbdtModel> fitted(n_tasks);
      ParallelFor(n_tasks, config.threads, [&](std::size_t t) {
        fitted[t] = baseline::GbdtFit(x_train, train_labels[t], config.gbdt);
        scores[t][mi] = baseline::GbdtPredictProba(fitted[t], x_test);
        fits[t][mi] = {{"rounds", fitted[t].trees.size()}};
      });
      for (std::size_t t = 0; t < n_tasks; ++t) {
        art.Json("checkpoints/" + Cell(config.tasks[t], kind) + ".json", baseline::ToJson(fitted[t]), true);
      }
      continue;
    }

    const auto model_config = internal::NeuralConfig(config, kind);
    const pretrain::WindowDataset train(cohort, split.train, split.stats, model_config);
    const pretrain::WindowDataset test(cohort, split.test, split.stats, model_config);

    if (kind == ModelKind::kFullModel) {
      Rng pre_rng = model_rng.Split("pretrain");
      auto pre = pretrain::Pretrain(train, config.pretrain, model_config, pre_rng);
      art.Loss("loss/pretrain_" + std::string(pretrain::PretrainTaskName(config.pretrain.task)) + ".csv",
               pre.epoch_loss);
      art.Params("checkpoints/full_model_pretrained", pre.params);
      const Tensor emb_train = pretrain::EmbedWindows(pre.params, train, pretrain::AllIndices(train.size()));
      const Tensor emb_test = pretrain::EmbedWindows(pre.params, test, pretrain::AllIndices(test.size()));
      ParallelFor(n_tasks, config.threads, [&](std::size_t t) {
        Rng rng = model_rng.Split(datagen::TaskName(config.tasks[t]));
        auto fit = pretrain::FinetuneHead(pre.params, emb_train, train_labels[t], config.finetune, rng);
        scores[t][mi] = pretrain::ScoreEmbeddings(fit.params, emb_test);
        fits[t][mi] = internal::FitJson(fit);
        art.Loss("loss/" + Cell(config.tasks[t], kind) + ".csv", fit.epoch_loss);
      });
      continue;
    }

    ParallelFor(n_tasks, config.threads, [&](std::size_t t) {
      Rng rng = model_rng.Split(datagen::TaskName(config.tasks[t]));
      Rng init = rng.Split("init");
      auto fit = pretrain::TrainSupervised(model::InitParams(model_config, init), train, train_labels[t],
                                           config.supervised, rng);
      scores[t][mi] = pretrain::ScoreWindows(fit.params, test, pretrain::AllIndices(test.size()));
      fits[t][mi] = internal::FitJson(fit);
      art.Loss("loss/" + Cell(config.tasks[t], kind) + ".csv", fit.epoch_loss);
    });
  }

  const bool have_full = internal::Contains(config.models, ModelKind::kFullModel);
  std::size_t full_index = 0;
  while (have_full && config.models[full_index] != ModelKind::kFullModel) ++full_index;

  stats::TaskResultMatrix roc, pr;
  roc.metric = "roc_auc";
  pr.metric = "pr_auc";
  for (auto kind : config.models) {
    roc.models.emplace_back(ModelKindName(kind));
    pr.models.emplace_back(ModelKindName(kind));
  }
  roc.values.assign(n_models, std::vector<double>(n_tasks));
  pr.values = roc.values;
  roc.positives.assign(n_models, std::vector<int>(n_tasks));
  pr.positives = roc.positives;

  nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const std::string task_name(datagen::TaskName(config.tasks[t]));
    roc.tasks.push_back(task_name);
    pr.tasks.push_back(task_name);
    nlohmann::ordered_json models = nlohmann::ordered_json::object();
    nlohmann::ordered_json delong = nlohmann::ordered_json::object();
    for (std::size_t mi = 0; mi < n_models; ++mi) {
      const std::string name(ModelKindName(config.models[mi]));
      const Metrics m = Evaluate(scores[t][mi], test_labels[t]);
      roc.values[mi][t] = m.roc_auc;
      pr.values[mi][t] = m.pr_auc;
      roc.positives[mi][t] = pr.positives[mi][t] = static_cast<int>(m.positives);
      auto cell = ToJson(m);
      cell["fit"] = fits[t][mi];
      models[name] = cell;
      art.Predictions("predictions/" + Cell(config.tasks[t], config.models[mi]) + ".csv",
                      MakePredictions(scores[t][mi], test_labels[t], split.test));
      if (have_full && mi != full_index) {
        const auto d = stats::DelongTest(scores[t][full_index], scores[t][mi], test_labels[t]);
        delong[name] = {{"auc_full_model", d.auc_a}, {"auc_other", d.auc_b}, {"z", d.z}, {"p", d.p}};
      }
    }
    nlohmann::ordered_json row;
    row["task"] = task_name;
    row["train_positives"] = std::count(train_labels[t].begin(), train_labels[t].end(), 1);
    row["models"] = models;
    if (have_full) row["delong_vs_full_model"] = delong;
    tasks.push_back(row);
  }

  nlohmann::ordered_json comparison = nlohmann::ordered_json::object();
  if (n_models >= 3 && n_tasks >= 2) {
    for (const auto* m : {&roc, &pr}) {
      const auto cd = stats::ComputeCriticalDifference(*m, config.alpha);
      comparison[m->metric] = stats::ToJson(*m, cd);
      art.Text("cd_" + m->metric + ".txt", stats::RenderText(*m, cd));
      art.Text("cd_" + m->metric + ".svg", stats::RenderSvg(*m, cd));
    }
  }

  ExperimentOutput out;
  const auto digest = CohortDigest(cohort);
  auto& r = out.report;
  r["experiment"] = "exp1";
  r["config_hash"] = ConfigHash(config);
  r["input_digest"] = digest;
  r["split"] = {{"midpoint_day", split.midpoint_day},
                {"window_days", wd},
                {"train_windows", split.train.size()},
                {"test_windows", split.test.size()}};
  r["tasks"] = tasks;
  r["comparison"] = comparison;

  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& row : tasks) metrics[row["task"].get<std::string>()] = row["models"];
  out.record = MakeRunRecord(config, digest, clock.Seconds(), art.checkpoints(), metrics);
  WriteOutputs(options, out);
  return out;
}

}  // namespace flusense::pipeline
