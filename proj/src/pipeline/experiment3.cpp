#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "flusense/common/errors.hpp"
#include "flusense/pipeline/experiments.hpp"
#include "flusense/stats/tests.hpp"
#include "internal.hpp"

namespace flusense::pipeline {
namespace {

baseline::FeatureMatrix GatherMatrix(const baseline::FeatureMatrix& x, std::span<const std::size_t> rows) {
  baseline::FeatureMatrix out(rows.size(), x.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  return out;
}

nlohmann::ordered_json Summary(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {{"mean", mean}, {"sd", sd}, {"min", *std::min_element(v.begin(), v.end())},
          {"max", *std::max_element(v.begin(), v.end())}};
}

}  // namespace

ExperimentOutput RunExperiment3(const ExperimentConfig& config, const RunOptions& options) {
  config.Validate();
  const internal::Stopwatch clock;
  internal::Artifacts art(options.out_dir);
  const Rng root(config.seed);
  const int wd = config.window_days();
  const datagen::Task task = config.tasks.front();
  const auto cohort = ObtainCohort(config.cohort, options.data_dir, config.threads);
  const auto k = static_cast<std::size_t>(config.folds);
  const auto split = datagen::FoldSplitPositiveUsers(cohort, k, root.Split("folds"));

  // Source and target users must be disjoint, and so must the folds.
  const std::set<std::int64_t> pool(split.pretrain_pool.begin(), split.pretrain_pool.end());
  std::map<std::int64_t, std::size_t> fold_of_user;
  for (std::size_t f = 0; f < k; ++f) {
    for (auto id : split.folds[f]) {
      if (pool.contains(id) || !fold_of_user.emplace(id, f).second) {
        throw std::logic_error("fold users overlap the pretraining pool or another fold");
      }
    }
  }

  std::vector<datagen::WindowRef> pool_refs, pos_refs;
  std::vector<std::size_t> fold_of;
  for (const auto& ref : datagen::ExtractWindows(cohort, wd)) {
    if (pool.contains(ref.user_id)) {
      pool_refs.push_back(ref);
    } else if (auto it = fold_of_user.find(ref.user_id); it != fold_of_user.end()) {
      pos_refs.push_back(ref);
      fold_of.push_back(it->second);
    }
  }
  const auto stats = datagen::StatsOverWindows(cohort, pool_refs, wd);
  const auto labels = RefLabels(cohort, pos_refs, task);

  // Fixed evaluation subsample: every positive and eval_negatives negatives.
  std::vector<bool> evaluated(pos_refs.size(), true);
  {
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == 0) negatives.push_back(i);
    }
    if (config.eval_negatives > 0 && config.eval_negatives < negatives.size()) {
      Rng rng = root.Split("eval_negatives");
      rng.Shuffle(negatives);
      for (std::size_t j = config.eval_negatives; j < negatives.size(); ++j) evaluated[negatives[j]] = false;
    }
  }

  std::vector<std::vector<std::size_t>> train_idx(k), eval_idx(k);
  for (std::size_t i = 0; i < pos_refs.size(); ++i) {
    for (std::size_t f = 0; f < k; ++f) {
      if (fold_of[i] == f) {
        train_idx[f].push_back(i);
      } else if (evaluated[i]) {
        eval_idx[f].push_back(i);
      }
    }
  }

  const bool want_full = internal::Contains(config.models, ModelKind::kFullModel);
  pretrain::PretrainResult pre;
  Tensor embeddings;
  if (want_full) {
    const pretrain::WindowDataset pool_data(cohort, pool_refs, stats, config.model);
    const pretrain::WindowDataset pos_data(cohort, pos_refs, stats, config.model);
    Rng pre_rng = root.Split("pretrain");
    pre = pretrain::Pretrain(pool_data, config.pretrain, config.model, pre_rng);
    art.Loss("loss/pretrain.csv", pre.epoch_loss);
    art.Params("checkpoints/pretrained", pre.params);
    embeddings = pretrain::EmbedWindows(pre.params, pos_data, pretrain::AllIndices(pos_data.size()));
  }
  baseline::FeatureMatrix features;
  if (internal::Contains(config.models, ModelKind::kGbdt)) {
    const DailyFeatureTable table(cohort);
    features = ConcatenatedFeatures(table, pos_refs, wd);
  }

  const std::size_t n_models = config.models.size();
  std::vector<std::vector<Metrics>> metrics(k, std::vector<Metrics>(n_models));
  ParallelFor(k, config.threads, [&](std::size_t f) {
    const Rng fold_rng = root.Split("fold").Split(f);
    const auto y_train = Gather<int>(labels, train_idx[f]);
    const auto y_eval = Gather<int>(labels, eval_idx[f]);
    for (std::size_t mi = 0; mi < n_models; ++mi) {
      const ModelKind kind = config.models[mi];
      Rng rng = fold_rng.Split(ModelKindName(kind));
      std::vector<double> scores;
      if (kind == ModelKind::kFullModel) {
        auto fit = pretrain::FinetuneHead(pre.params, pretrain::GatherRows(embeddings, train_idx[f]), y_train,
                                          config.finetune, rng);
        scores = pretrain::ScoreEmbeddings(fit.params, pretrain::GatherRows(embeddings, eval_idx[f]));
      } else if (kind == ModelKind::kGbdt) {
        const auto model = baseline::GbdtFit(GatherMatrix(features, train_idx[f]), y_train, config.gbdt);
        scores = baseline::GbdtPredictProba(model, GatherMatrix(features, eval_idx[f]));
      } else {
        const auto model_config = internal::NeuralConfig(config, kind);
        const pretrain::WindowDataset train(cohort, Gather<datagen::WindowRef>(pos_refs, train_idx[f]), stats,
                                            model_config);
        const pretrain::WindowDataset eval(cohort, Gather<datagen::WindowRef>(pos_refs, eval_idx[f]), stats,
                                           model_config);
        Rng init = rng.Split("init");
        auto fit = pretrain::TrainSupervised(model::InitParams(model_config, init), train, y_train,
                                             config.supervised, rng);
        scores = pretrain::ScoreWindows(fit.params, eval, pretrain::AllIndices(eval.size()));
      }
      metrics[f][mi] = Evaluate(scores, y_eval);
    }
  });

  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  std::vector<std::vector<double>> roc(n_models), pr(n_models);
  for (std::size_t f = 0; f < k; ++f) {
    nlohmann::ordered_json row;
    row["fold"] = f;
    row["users"] = split.folds[f].size();
    row["train_windows"] = train_idx[f].size();
    row["train_positives"] = std::count_if(train_idx[f].begin(), train_idx[f].end(), [&](auto i) { return labels[i] == 1; });
    nlohmann::ordered_json models = nlohmann::ordered_json::object();
    for (std::size_t mi = 0; mi < n_models; ++mi) {
      models[std::string(ModelKindName(config.models[mi]))] = ToJson(metrics[f][mi]);
      roc[mi].push_back(metrics[f][mi].roc_auc);
      pr[mi].push_back(metrics[f][mi].pr_auc);
    }
    row["models"] = models;
    folds.push_back(row);
  }

  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  for (std::size_t mi = 0; mi < n_models; ++mi) {
    summary[std::string(ModelKindName(config.models[mi]))] = {{"roc_auc", Summary(roc[mi])},
                                                              {"pr_auc", Summary(pr[mi])}};
  }
  // One-sided: pretrained > each non-pretrained model, across folds.
  nlohmann::ordered_json tests = nlohmann::ordered_json::object();
  for (std::size_t a = 0; a < n_models; ++a) {
    if (config.models[a] != ModelKind::kFullModel) continue;
    for (std::size_t b = 0; b < n_models; ++b) {
      if (b == a) continue;
      const auto u_roc = stats::MannWhitneyU(roc[a], roc[b], stats::Alternative::kGreater);
      const auto u_pr = stats::MannWhitneyU(pr[a], pr[b], stats::Alternative::kGreater);
      tests["full_model>" + std::string(ModelKindName(config.models[b]))] = {
          {"roc_auc", {{"u", u_roc.u}, {"p", u_roc.p}, {"exact", u_roc.exact}}},
          {"pr_auc", {{"u", u_pr.u}, {"p", u_pr.p}, {"exact", u_pr.exact}}}};
    }
  }

  ExperimentOutput out;
  const auto digest = CohortDigest(cohort);
  auto& r = out.report;
  r["experiment"] = "exp3";
  r["config_hash"] = ConfigHash(config);
  r["input_digest"] = digest;
  r["task"] = datagen::TaskName(task);
  r["folds_k"] = k;
  r["positive_users"] = fold_of_user.size();
  r["pretrain_pool_users"] = pool.size();
  r["pretrain_windows"] = pool_refs.size();
  r["target_windows"] = pos_refs.size();
  r["disjoint_verified"] = true;
  r["folds"] = folds;
  r["summary"] = summary;
  r["mann_whitney"] = tests;
  out.record = MakeRunRecord(config, digest, clock.Seconds(), art.checkpoints(), summary);
  WriteOutputs(options, out);
  return out;
}

}  // namespace flusense::pipeline
