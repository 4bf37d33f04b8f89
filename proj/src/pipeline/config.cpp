#include "flusense/pipeline/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "flusense/common/errors.hpp"

namespace flusense::pipeline {
namespace {

void CheckKeys(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.contains(key)) throw ConfigError("unknown " + what + " key: " + key);
  }
}

nlohmann::json ReadJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

// An inline object, or a path (relative to base_dir) to a JSON file.
nlohmann::json Inline(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (j.is_string()) {
    std::filesystem::path p = j.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw ConfigError("referenced config file does not exist: " + p.string());
    return ReadJsonFile(p);
  }
  return j;
}

// Applies keys present in `patch` on top of `base`.
nlohmann::json Merge(nlohmann::json base, const nlohmann::json& patch) {
  if (!patch.is_object()) throw ConfigError("config section must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      base[key] = Merge(base[key], value);
    } else {
      base[key] = value;
    }
  }
  return base;
}

nlohmann::json GbdtJson(const baseline::GbdtParams& p) {
  return {{"rounds", p.rounds},
          {"max_depth", p.max_depth},
          {"learning_rate", p.learning_rate},
          {"lambda", p.lambda},
          {"min_child_hessian", p.min_child_hessian},
          {"min_split_gain", p.min_split_gain}};
}

baseline::GbdtParams GbdtFromJson(const nlohmann::json& j) {
  CheckKeys(j, {"rounds", "max_depth", "learning_rate", "lambda", "min_child_hessian", "min_split_gain"}, "gbdt");
  baseline::GbdtParams p;
  p.rounds = j.value("rounds", p.rounds);
  p.max_depth = j.value("max_depth", p.max_depth);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.lambda = j.value("lambda", p.lambda);
  p.min_child_hessian = j.value("min_child_hessian", p.min_child_hessian);
  p.min_split_gain = j.value("min_split_gain", p.min_split_gain);
  return p;
}

std::uint64_t Fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string_view ProfileName(Profile profile) { return profile == Profile::kFast ? "fast" : "full"; }

Profile ParseProfile(std::string_view name) {
  if (name == "fast") return Profile::kFast;
  if (name == "full") return Profile::kFull;
  throw ConfigError("unknown profile: " + std::string(name));
}

std::string_view ModelKindName(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGbdt: return "gbdt";
    case ModelKind::kCnnOnly: return "cnn_only";
    case ModelKind::kCnnTransformer: return "cnn_transformer";
    case ModelKind::kFullModel: return "full_model";
  }
  return "?";
}

ModelKind ParseModelKind(std::string_view name) {
  for (auto k : {ModelKind::kGbdt, ModelKind::kCnnOnly, ModelKind::kCnnTransformer, ModelKind::kFullModel}) {
    if (ModelKindName(k) == name) return k;
  }
  throw ConfigError("unknown model: " + std::string(name));
}

void ExperimentConfig::Validate() const {
  cohort.Validate();
  transfer.Validate();
  model.Validate();
  pretrain.Validate();
  finetune.Validate();
  supervised.Validate();
  if (model.window_minutes % kMinutesPerDay != 0) throw ConfigError("window must be a whole number of days");
  if (tasks.empty()) throw ConfigError("experiment needs at least one task");
  if (models.empty()) throw ConfigError("experiment needs at least one model");
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must be in (0, 1)");
  if (threads < 1) throw ConfigError("threads must be positive");
  if (gbdt.rounds < 0 || gbdt.max_depth < 1 || !(gbdt.learning_rate > 0) || gbdt.lambda < 0) {
    throw ConfigError("invalid gbdt parameters");
  }
  if (window_days() >= cohort.season_midpoint_day) throw ConfigError("window longer than the training period");
}

ExperimentConfig DefaultExperimentConfig(Profile profile) {
  ExperimentConfig c;
  c.profile = profile;
  c.model = profile == Profile::kFast ? model::FastProfileConfig() : model::ModelConfig{};
  c.pretrain.task = pretrain::PretrainTask::kDomainFeatures;
  c.pretrain.pair_count = 2048;
  c.pretrain.windows_per_epoch = 1024;
  c.pretrain.epochs = 10;
  c.finetune.balance_classes = true;
  c.finetune.min_steps = 5000;
  c.supervised.epochs = 10;
  c.supervised.negatives_per_epoch = 256;
  c.supervised.balance_classes = true;
  c.gbdt.rounds = 100;
  c.gbdt.max_depth = 6;
  c.gbdt.learning_rate = 1.0;
  c.tasks.assign(datagen::kAllTasks.begin(), datagen::kAllTasks.end());
  c.models = {ModelKind::kGbdt, ModelKind::kCnnOnly, ModelKind::kCnnTransformer, ModelKind::kFullModel};
  return c;
}

ExperimentConfig PresetConfig(std::string_view experiment, Profile profile) {
  ExperimentConfig c = DefaultExperimentConfig(profile);
  c.name = std::string(experiment);
  if (experiment == "exp1") return c;
  if (experiment == "exp2") {
    c.tasks = {datagen::Task::kFluSymptoms};
    c.models = {ModelKind::kFullModel};
    return c;
  }
  if (experiment == "exp3") {
    c.tasks = {datagen::Task::kFluPositivity};
    c.models = {ModelKind::kGbdt, ModelKind::kCnnTransformer, ModelKind::kFullModel};
    return c;
  }
  if (experiment == "exp4") {
    c.tasks = {datagen::Task::kFluPositivity};
    c.models = {ModelKind::kGbdt, ModelKind::kFullModel};
    return c;
  }
  if (experiment == "null_control") {
    // No illness signal, and label rates high enough that every task has
    // hundreds of test positives.
    c.cohort.name = "null";
    c.cohort.illness.amplitude = 0.0;
    c.cohort.rates = {.flu_positive = 1.0 / 25.0,
                      .severe_fever = 1.0 / 20.0,
                      .severe_cough = 1.0 / 15.0,
                      .severe_fatigue = 1.0 / 12.0,
                      .flu_symptoms = 1.0 / 8.0};
    return c;
  }
  throw ConfigError("unknown experiment preset: " + std::string(experiment));
}

nlohmann::ordered_json ToJson(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["profile"] = ProfileName(c.profile);
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["cohort"] = datagen::ToJson(c.cohort);
  j["transfer"] = datagen::ToJson(c.transfer);
  j["model"] = model::ToJson(c.model);
  j["pretrain"] = pretrain::ToJson(c.pretrain);
  j["finetune"] = pretrain::ToJson(c.finetune);
  j["supervised"] = pretrain::ToJson(c.supervised);
  j["gbdt"] = GbdtJson(c.gbdt);
  std::vector<std::string> tasks, models;
  for (auto t : c.tasks) tasks.emplace_back(datagen::TaskName(t));
  for (auto m : c.models) models.emplace_back(ModelKindName(m));
  j["tasks"] = tasks;
  j["models"] = models;
  j["folds"] = c.folds;
  j["eval_negatives"] = c.eval_negatives;
  j["alpha"] = c.alpha;
  return j;
}

ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                          const ExperimentConfig& defaults) {
  CheckKeys(j,
            {"name", "profile", "seed", "threads", "cohort", "transfer", "model", "pretrain", "finetune",
             "supervised", "gbdt", "tasks", "models", "folds", "eval_negatives", "alpha"},
            "experiment config");
  ExperimentConfig c = defaults;
  try {
    if (j.contains("profile")) {
      const Profile p = ParseProfile(j.at("profile").get<std::string>());
      if (p != c.profile) {
        // Switching profile swaps in that profile's model before overrides.
        const auto base = DefaultExperimentConfig(p);
        c.profile = p;
        c.model = base.model;
      }
    }
    c.name = j.value("name", c.name);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("cohort")) {
      c.cohort = datagen::CohortConfigFromJson(Merge(datagen::ToJson(c.cohort), Inline(j.at("cohort"), base_dir)));
    }
    if (j.contains("transfer")) {
      c.transfer =
          datagen::CohortConfigFromJson(Merge(datagen::ToJson(c.transfer), Inline(j.at("transfer"), base_dir)));
    }
    if (j.contains("model")) {
      c.model = model::ConfigFromJson(Merge(model::ToJson(c.model), Inline(j.at("model"), base_dir)));
    }
    if (j.contains("pretrain")) {
      c.pretrain = pretrain::PretrainSpecFromJson(Merge(pretrain::ToJson(c.pretrain), j.at("pretrain")));
    }
    if (j.contains("finetune")) {
      c.finetune = pretrain::FinetuneSpecFromJson(Merge(pretrain::ToJson(c.finetune), j.at("finetune")));
    }
    if (j.contains("supervised")) {
      c.supervised = pretrain::FinetuneSpecFromJson(Merge(pretrain::ToJson(c.supervised), j.at("supervised")));
    }
    if (j.contains("gbdt")) c.gbdt = GbdtFromJson(Merge(GbdtJson(c.gbdt), j.at("gbdt")));
    if (j.contains("tasks")) {
      c.tasks.clear();
      for (const auto& t : j.at("tasks")) c.tasks.push_back(datagen::ParseTask(t.get<std::string>()));
    }
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) c.models.push_back(ParseModelKind(m.get<std::string>()));
    }
    c.folds = j.value("folds", c.folds);
    c.eval_negatives = j.value("eval_negatives", c.eval_negatives);
    c.alpha = j.value("alpha", c.alpha);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.Validate();
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path, const ExperimentConfig& defaults) {
  return ExperimentConfigFromJson(ReadJsonFile(path), path.parent_path(), defaults);
}

std::string HexDigest(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(Fnv1a(bytes)));
  return buf;
}

std::string ConfigHash(const ExperimentConfig& config) { return HexDigest(ToJson(config).dump()); }

}  // namespace flusense::pipeline
