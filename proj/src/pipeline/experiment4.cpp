#include <map>
#include <string>
#include <utility>
#include <vector>

#include "flusense/common/errors.hpp"
#include "flusense/pipeline/experiments.hpp"
#include "flusense/stats/tests.hpp"
#include "internal.hpp"

namespace flusense::pipeline {

ExperimentOutput RunExperiment4(const ExperimentConfig& config, const RunOptions& options) {
  config.Validate();
  for (auto kind : config.models) {
    if (kind != ModelKind::kFullModel && kind != ModelKind::kGbdt) {
      throw ConfigError("zero-shot transfer supports full_model and gbdt only");
    }
  }
  const internal::Stopwatch clock;
  internal::Artifacts art(options.out_dir);
  const Rng root(config.seed);
  const int wd = config.window_days();
  const datagen::Task task = config.tasks.front();
  const auto primary = ObtainCohort(config.cohort, options.data_dir, config.threads);
  const auto transfer = ObtainCohort(config.transfer, options.transfer_dir, config.threads);
  if (primary.config.name == transfer.config.name) throw ConfigError("primary and transfer cohorts need distinct names");

  pretrain::AccessAudit audit;
  const auto source_refs = datagen::ExtractWindows(primary, wd);
  const auto target_refs = datagen::ExtractWindows(transfer, wd);
  // Normalization comes from the source cohort only.
  const auto stats = datagen::StatsOverWindows(primary, source_refs, wd);
  const auto source_labels = RefLabels(primary, source_refs, task);
  const auto target_labels = RefLabels(transfer, target_refs, task);

  pretrain::WindowDataset source(primary, source_refs, stats, config.model);
  pretrain::WindowDataset target(transfer, target_refs, stats, config.model);
  source.set_audit(&audit);
  target.set_audit(&audit);

  std::vector<std::vector<double>> scores(config.models.size());
  nlohmann::ordered_json fits = nlohmann::ordered_json::object();
  for (std::size_t mi = 0; mi < config.models.size(); ++mi) {
    const ModelKind kind = config.models[mi];
    const std::string name(ModelKindName(kind));
    Rng rng = root.Split(name);
    if (kind == ModelKind::kFullModel) {
      audit.SetPhase("pretrain");
      Rng pre_rng = rng.Split("pretrain");
      auto pre = pretrain::Pretrain(source, config.pretrain, config.model, pre_rng);
      art.Loss("loss/pretrain.csv", pre.epoch_loss);
      audit.SetPhase("finetune");
      const Tensor emb = pretrain::EmbedWindows(pre.params, source, pretrain::AllIndices(source.size()));
      Rng fit_rng = rng.Split("finetune");
      auto fit = pretrain::FinetuneHead(pre.params, emb, source_labels, config.finetune, fit_rng);
      art.Loss("loss/finetune.csv", fit.epoch_loss);
      art.Params("checkpoints/full_model", fit.params);
      fits[name] = internal::FitJson(fit);
      audit.SetPhase("score");
      scores[mi] = pretrain::ScoreWindows(fit.params, target, pretrain::AllIndices(target.size()));
    } else {
      audit.SetPhase("fit_gbdt");
      const auto x_source = ZeroShotMatrix(primary, source_refs, wd, &audit);
      const auto model = baseline::GbdtFit(x_source, source_labels, config.gbdt);
      art.Json("checkpoints/gbdt.json", baseline::ToJson(model), true);
      fits[name] = {{"rounds", model.trees.size()}};
      audit.SetPhase("score");
      scores[mi] = baseline::GbdtPredictProba(model, ZeroShotMatrix(transfer, target_refs, wd, &audit));
    }
    audit.SetPhase("none");
  }

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t mi = 0; mi < config.models.size(); ++mi) {
    const std::string name(ModelKindName(config.models[mi]));
    nlohmann::ordered_json row;
    row["model"] = name;
    const auto cell = ToJson(Evaluate(scores[mi], target_labels));
    for (const auto& [key, value] : cell.items()) row[key] = value;
    row["fit"] = fits[name];
    rows.push_back(row);
    art.Predictions("predictions/" + name + ".csv", MakePredictions(scores[mi], target_labels, target_refs));
  }

  // Reads per (cohort, phase), in first-seen order.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::size_t> reads;
  std::size_t leaked = 0;
  for (const auto& e : audit.entries()) {
    const auto key = std::make_pair(e.cohort, e.phase);
    if (!reads.contains(key)) keys.push_back(key);
    reads[key] += e.windows;
    if (e.cohort == transfer.config.name && e.phase != "score") leaked += e.windows;
  }
  nlohmann::ordered_json log = nlohmann::ordered_json::array();
  for (const auto& key : keys) log.push_back({{"cohort", key.first}, {"phase", key.second}, {"windows", reads[key]}});

  ExperimentOutput out;
  const auto digest = HexDigest(CohortDigest(primary) + CohortDigest(transfer));
  auto& r = out.report;
  r["experiment"] = "exp4";
  r["config_hash"] = ConfigHash(config);
  r["input_digest"] = digest;
  r["task"] = datagen::TaskName(task);
  r["source"] = {{"cohort", primary.config.name}, {"windows", source_refs.size()},
                 {"positives", std::count(source_labels.begin(), source_labels.end(), 1)}};
  r["target"] = {{"cohort", transfer.config.name}, {"windows", target_refs.size()},
                 {"positives", std::count(target_labels.begin(), target_labels.end(), 1)}};
  r["models"] = rows;
  if (config.models.size() == 2) {
    const auto d = stats::DelongTest(scores[0], scores[1], target_labels);
    r["delong"] = {{"a", ModelKindName(config.models[0])}, {"b", ModelKindName(config.models[1])},
                   {"z", d.z}, {"p", d.p}};
  }
  r["audit"] = {{"transfer_reads_outside_scoring", leaked}, {"log", log}};
  if (leaked != 0) throw std::logic_error("transfer cohort was read outside the scoring phase");

  out.record = MakeRunRecord(config, digest, clock.Seconds(), art.checkpoints(), rows);
  WriteOutputs(options, out);
  return out;
}

}  // namespace flusense::pipeline
