#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flusense/common/errors.hpp"
#include "flusense/model/params.hpp"
#include "flusense/pipeline/experiments.hpp"
#include "flusense/pretrain/train.hpp"
#include "flusense/stats/critical_difference.hpp"
#include "flusense/stats/tests.hpp"

namespace fs = std::filesystem;
using namespace flusense;
using namespace flusense::pipeline;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string profile = "full";
  int threads = 1;
  std::string data;
  std::string transfer_data;
  bool print_config = false;
};

void AddCommon(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config JSON");
  cmd->add_option("--seed", f.seed, "run seed (overrides the config)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--profile", f.profile, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--data", f.data, "existing cohort directory (default: generate)");
  cmd->add_option("--transfer-data", f.transfer_data, "existing transfer cohort directory");
  cmd->add_flag("--print-config", f.print_config, "print the resolved config and exit");
}

ExperimentConfig Resolve(const CommonFlags& f, const std::string& preset) {
  ExperimentConfig c = PresetConfig(preset, ParseProfile(f.profile));
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw ConfigError("config file does not exist: " + f.config);
    c = LoadExperimentConfig(f.config, c);
  }
  if (f.seed) c.seed = *f.seed;
  c.threads = f.threads;
  c.Validate();
  return c;
}

RunOptions Options(const CommonFlags& f) {
  RunOptions o;
  o.out_dir = f.out;
  o.data_dir = f.data;
  o.transfer_dir = f.transfer_data;
  return o;
}

stats::ScoredPredictions ReadPredictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "user_id,day_index,label,score") throw DataError(path.string() + ": unexpected header");
  stats::ScoredPredictions p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    long long user = 0;
    int day = 0, label = 0;
    double score = 0.0;
    if (std::sscanf(line.c_str(), "%lld,%d,%d,%lf", &user, &day, &label, &score) != 4) {
      throw DataError(path.string() + ": malformed row: " + line);
    }
    p.Add(score, label, user, day);
  }
  p.Validate();
  return p;
}

// Primary cohort plus its temporal split, shared by the single-step commands.
struct SplitData {
  datagen::Cohort cohort;
  datagen::TemporalSplit split;
};

SplitData LoadSplit(const ExperimentConfig& c, const CommonFlags& f) {
  SplitData s{ObtainCohort(c.cohort, f.data, c.threads), {}};
  s.split = datagen::SplitTemporal(s.cohort, s.cohort.config.season_midpoint_day, c.window_days());
  return s;
}

void Announce(const fs::path& out, const nlohmann::ordered_json& report) {
  std::cout << "wrote " << (out / "report.json").string() << " (" << report.value("experiment", "") << ")\n";
}

int CmdGenData(const CommonFlags& f, const std::string& which) {
  auto c = Resolve(f, "exp1");
  auto cohort_config = which == "transfer" ? c.transfer : c.cohort;
  if (f.seed) cohort_config.seed = *f.seed;
  if (f.print_config) {
    std::cout << datagen::ToJson(cohort_config).dump(2) << "\n";
    return 0;
  }
  const auto cohort = datagen::GenerateCohort(cohort_config, c.threads);
  datagen::WriteCohort(cohort, f.out);
  const auto summary = datagen::Summarize(cohort);
  std::cout << "cohort " << cohort_config.name << ": " << cohort.users.size() << " users, "
            << summary.labeled_days << " labeled days, digest " << CohortDigest(cohort) << "\n";
  for (auto t : datagen::kAllTasks) {
    std::cout << "  " << datagen::TaskName(t) << " positives " << summary.positives[static_cast<std::size_t>(t)]
              << "\n";
  }
  return 0;
}

int CmdFeatures(const CommonFlags& f, const std::string& kind) {
  const auto c = Resolve(f, "exp1");
  const auto cohort = ObtainCohort(c.cohort, f.data, c.threads);
  const int wd = c.window_days();
  const auto refs = datagen::ExtractWindows(cohort, wd);
  baseline::FeatureMatrix x;
  std::vector<std::string> names;
  if (kind == "zero_shot") {
    x = ZeroShotMatrix(cohort, refs, wd);
    for (auto n : features::kZeroShotFeatureNames) names.emplace_back(n);
  } else {
    x = ConcatenatedFeatures(DailyFeatureTable(cohort), refs, wd);
    for (int d = 1; d <= wd; ++d) {
      for (auto n : features::kDailyFeatureNames) names.push_back(std::string(n) + "_d" + std::to_string(d));
    }
  }
  std::ostringstream csv;
  csv << "user_id,label_day";
  for (const auto& n : names) csv << ',' << n;
  csv << '\n';
  char buf[40];
  for (std::size_t i = 0; i < refs.size(); ++i) {
    csv << refs[i].user_id << ',' << refs[i].label_day;
    for (double v : x.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.10g", v);
      csv << buf;
    }
    csv << '\n';
  }
  const auto path = fs::path(f.out) / ("features_" + kind + ".csv");
  WriteTextFile(path, csv.str());
  std::cout << "wrote " << path.string() << " (" << refs.size() << " windows x " << names.size() << " features)\n";
  return 0;
}

int CmdPretrain(const CommonFlags& f, const std::string& task) {
  auto c = Resolve(f, "exp1");
  if (!task.empty()) c.pretrain.task = pretrain::ParsePretrainTask(task);
  if (f.print_config) {
    std::cout << ToJson(c).dump(2) << "\n";
    return 0;
  }
  const auto s = LoadSplit(c, f);
  const pretrain::WindowDataset train(s.cohort, s.split.train, s.split.stats, c.model);
  Rng rng = Rng(c.seed).Split("pretrain");
  const auto result = pretrain::Pretrain(train, c.pretrain, c.model, rng);
  const auto stem = fs::path(f.out) / ("pretrained_" + std::string(pretrain::PretrainTaskName(c.pretrain.task)));
  fs::create_directories(f.out);
  model::SaveParams(stem, result.params);
  pretrain::WriteLossCsv(stem.string() + "_loss.csv", result.epoch_loss);
  std::cout << "wrote " << stem.string() << ".json; final loss " << result.epoch_loss.back() << "\n";
  return 0;
}

int CmdFinetune(const CommonFlags& f, const std::string& checkpoint, const std::string& task_name) {
  auto c = Resolve(f, "exp1");
  if (checkpoint.empty()) throw ConfigError("finetune needs --checkpoint");
  const auto task = datagen::ParseTask(task_name);
  const auto s = LoadSplit(c, f);
  const pretrain::WindowDataset train(s.cohort, s.split.train, s.split.stats, c.model);
  const pretrain::WindowDataset test(s.cohort, s.split.test, s.split.stats, c.model);
  auto pre = model::LoadParams(checkpoint, c.model);
  const auto y_train = RefLabels(s.cohort, s.split.train, task);
  const auto y_test = RefLabels(s.cohort, s.split.test, task);
  Rng rng = Rng(c.seed).Split("finetune");
  auto fit = pretrain::Finetune(pre, train, y_train, c.finetune, rng);
  const auto scores = pretrain::ScoreWindows(fit.params, test, pretrain::AllIndices(test.size()));
  const auto stem = fs::path(f.out) / ("finetuned_" + task_name);
  fs::create_directories(f.out);
  model::SaveParams(stem, fit.params);
  WritePredictionsCsv(stem.string() + "_predictions.csv", MakePredictions(scores, y_test, s.split.test));
  std::cout << ToJson(Evaluate(scores, y_test)).dump() << "\n";
  return 0;
}

int CmdTrainBaseline(const CommonFlags& f, const std::string& model_name, const std::string& task_name) {
  const auto c = Resolve(f, "exp1");
  const auto kind = ParseModelKind(model_name);
  const auto task = datagen::ParseTask(task_name);
  const auto s = LoadSplit(c, f);
  const int wd = c.window_days();
  const auto y_train = RefLabels(s.cohort, s.split.train, task);
  const auto y_test = RefLabels(s.cohort, s.split.test, task);
  std::vector<double> scores;
  fs::create_directories(f.out);
  const auto stem = fs::path(f.out) / (model_name + "_" + task_name);
  Rng rng = Rng(c.seed).Split(model_name);
  if (kind == ModelKind::kGbdt) {
    const DailyFeatureTable table(s.cohort);
    const auto model = baseline::GbdtFit(ConcatenatedFeatures(table, s.split.train, wd), y_train, c.gbdt);
    scores = baseline::GbdtPredictProba(model, ConcatenatedFeatures(table, s.split.test, wd));
    WriteJsonFile(stem.string() + ".json", baseline::ToJson(model));
  } else {
    const auto cfg = kind == ModelKind::kCnnOnly       ? model::Ablate(c.model, "no_transformer")
                     : kind == ModelKind::kCnnTransformer ? model::Ablate(c.model, "no_pretrain_no_flags")
                                                          : c.model;
    const pretrain::WindowDataset train(s.cohort, s.split.train, s.split.stats, cfg);
    const pretrain::WindowDataset test(s.cohort, s.split.test, s.split.stats, cfg);
    Rng init = rng.Split("init");
    auto fit = pretrain::TrainSupervised(model::InitParams(cfg, init), train, y_train, c.supervised, rng);
    scores = pretrain::ScoreWindows(fit.params, test, pretrain::AllIndices(test.size()));
    model::SaveParams(stem, fit.params);
  }
  WritePredictionsCsv(stem.string() + "_predictions.csv", MakePredictions(scores, y_test, s.split.test));
  std::cout << ToJson(Evaluate(scores, y_test)).dump() << "\n";
  return 0;
}

int CmdEvaluate(const CommonFlags& f, const std::string& predictions) {
  const auto p = ReadPredictions(predictions);
  const auto m = Evaluate(p.scores, p.labels);
  const fs::path out = f.out;
  WriteJsonFile(out / "metrics.json", ToJson(m));
  WriteCurveCsv(out / "roc_curve.csv", stats::RocCurve(p.scores, p.labels), "fpr", "tpr");
  WriteCurveCsv(out / "pr_curve.csv", stats::PrCurve(p.scores, p.labels), "recall", "precision");
  std::cout << ToJson(m).dump() << "\n";
  return 0;
}

stats::TaskResultMatrix MatrixFromJson(const nlohmann::json& j, const std::string& metric) {
  stats::TaskResultMatrix m;
  m.metric = metric;
  if (j.contains("tasks") && j["tasks"].is_array() && !j["tasks"].empty() && j["tasks"][0].is_object()) {
    // An experiment-1 report.
    for (const auto& [name, cell] : j["tasks"][0]["models"].items()) m.models.push_back(name);
    m.values.assign(m.models.size(), {});
    for (const auto& row : j["tasks"]) {
      m.tasks.push_back(row["task"].get<std::string>());
      for (std::size_t i = 0; i < m.models.size(); ++i) {
        m.values[i].push_back(row["models"].at(m.models[i]).at(metric).get<double>());
      }
    }
  } else {
    m.metric = j.value("metric", metric);
    m.models = j.at("models").get<std::vector<std::string>>();
    m.tasks = j.at("tasks").get<std::vector<std::string>>();
    m.values = j.at("values").get<std::vector<std::vector<double>>>();
  }
  m.Validate();
  return m;
}

int CmdCompare(const CommonFlags& f, const std::vector<std::string>& predictions, const std::string& matrix,
               const std::string& metric, double alpha) {
  const fs::path out = f.out;
  if (!matrix.empty()) {
    std::ifstream in(matrix);
    if (!in) throw ConfigError("cannot open " + matrix);
    const auto m = MatrixFromJson(nlohmann::json::parse(in), metric);
    const auto cd = stats::ComputeCriticalDifference(m, alpha);
    WriteTextFile(out / "comparison.json", stats::ToJson(m, cd).dump(2) + "\n");
    WriteTextFile(out / ("cd_" + m.metric + ".svg"), stats::RenderSvg(m, cd));
    const auto text = stats::RenderText(m, cd);
    WriteTextFile(out / ("cd_" + m.metric + ".txt"), text);
    std::cout << text;
    return 0;
  }
  if (predictions.size() != 2) throw ConfigError("compare needs --matrix or exactly two --predictions");
  const auto a = ReadPredictions(predictions[0]);
  const auto b = ReadPredictions(predictions[1]);
  if (a.labels != b.labels || a.user_ids != b.user_ids || a.day_indices != b.day_indices) {
    throw DataError("predictions must cover the same windows in the same order");
  }
  const auto d = stats::DelongTest(a.scores, b.scores, a.labels);
  const nlohmann::ordered_json j = {{"auc_a", d.auc_a}, {"auc_b", d.auc_b}, {"variance", d.variance},
                                    {"z", d.z}, {"p", d.p}};
  WriteJsonFile(out / "delong.json", j);
  std::cout << j.dump() << "\n";
  return 0;
}

int CmdExperiment(const CommonFlags& f, const std::string& preset,
                  ExperimentOutput (*run)(const ExperimentConfig&, const RunOptions&)) {
  const auto c = Resolve(f, preset);
  if (f.print_config) {
    std::cout << ToJson(c).dump(2) << "\n";
    return 0;
  }
  const auto out = run(c, Options(f));
  Announce(f.out, out.report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wearable-sensor illness prediction: data generation, pretraining, baselines and experiments"};
  app.require_subcommand(1);
  CommonFlags f;
  std::string which = "primary", kind = "window", task, model_name = "gbdt", checkpoint, predictions_path, matrix,
              metric = "roc_auc";
  std::vector<std::string> predictions;
  double alpha = 0.1;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic cohort");
  AddCommon(gen, f);
  gen->add_option("--cohort", which, "primary or transfer")->check(CLI::IsMember({"primary", "transfer"}));

  auto* feat = app.add_subcommand("features", "write the window feature matrix as CSV");
  AddCommon(feat, f);
  feat->add_option("--kind", kind, "window or zero_shot")->check(CLI::IsMember({"window", "zero_shot"}));

  auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining on the training period");
  AddCommon(pre, f);
  pre->add_option("--task", task, "same_user, autoencoder or domain_features");

  auto* fine = app.add_subcommand("finetune", "frozen-encoder finetuning of a pretrained checkpoint");
  AddCommon(fine, f);
  fine->add_option("--checkpoint", checkpoint, "pretrained checkpoint stem")->required();
  fine->add_option("--task", task, "supervised task")->required();

  auto* base = app.add_subcommand("train-baseline", "train a baseline on the training period");
  AddCommon(base, f);
  base->add_option("--model", model_name, "gbdt, cnn_only, cnn_transformer or full_model");
  base->add_option("--task", task, "supervised task")->required();

  auto* eval = app.add_subcommand("evaluate", "ROC/PR AUC and curves of a predictions CSV");
  AddCommon(eval, f);
  eval->add_option("--predictions", predictions_path, "predictions CSV")->required();

  auto* cmp = app.add_subcommand("compare", "DeLong test of two prediction files, or a critical-difference analysis");
  AddCommon(cmp, f);
  cmp->add_option("--predictions", predictions, "two predictions CSVs");
  cmp->add_option("--matrix", matrix, "experiment-1 report or {models, tasks, values} JSON");
  cmp->add_option("--metric", metric, "roc_auc or pr_auc");
  cmp->add_option("--alpha", alpha, "significance level");

  struct Exp {
    const char* name;
    const char* preset;
    const char* help;
    ExperimentOutput (*run)(const ExperimentConfig&, const RunOptions&);
    CLI::App* cmd = nullptr;
  };
  std::vector<Exp> exps = {
      {"exp1", "exp1", "five tasks x four models, temporal split", RunExperiment1},
      {"exp2", "exp2", "pretraining task comparison", RunExperiment2},
      {"exp3", "exp3", "k-fold small-data simulation", RunExperiment3},
      {"exp4", "exp4", "zero-shot transfer", RunExperiment4},
      {"null-control", "null_control", "experiment 1 on a signal-free cohort", RunExperiment1},
  };
  for (auto& e : exps) {
    e.cmd = app.add_subcommand(e.name, e.help);
    AddCommon(e.cmd, f);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return CmdGenData(f, which);
    if (feat->parsed()) return CmdFeatures(f, kind);
    if (pre->parsed()) return CmdPretrain(f, task);
    if (fine->parsed()) return CmdFinetune(f, checkpoint, task);
    if (base->parsed()) return CmdTrainBaseline(f, model_name, task);
    if (eval->parsed()) return CmdEvaluate(f, predictions_path);
    if (cmp->parsed()) return CmdCompare(f, predictions, matrix, metric, alpha);
    for (const auto& e : exps) {
      if (e.cmd->parsed()) return CmdExperiment(f, e.preset, e.run);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
