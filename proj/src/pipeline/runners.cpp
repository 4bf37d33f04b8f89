#include "flusense/pipeline/runners.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "flusense/common/errors.hpp"
#include "flusense/tensor/checkpoint.hpp"

namespace flusense::pipeline {

datagen::Cohort ObtainCohort(const datagen::CohortConfig& config, const std::filesystem::path& dir, int threads) {
  if (!dir.empty()) return datagen::ReadCohort(dir);
  return datagen::GenerateCohort(config, threads);
}

std::string CohortDigest(const datagen::Cohort& cohort) {
  std::string bytes = datagen::ToJson(cohort.config).dump();
  auto put = [&bytes](const auto& value) {
    bytes.append(reinterpret_cast<const char*>(&value), sizeof value);
  };
  for (const auto& user : cohort.users) {
    put(user.user_id);
    put(user.bmr);
    for (const auto& stream : user.streams.values) {
      bytes.append(reinterpret_cast<const char*>(stream.data()), stream.size());
    }
  }
  for (const auto& l : cohort.labels) {
    put(l.user_id);
    put(l.day_index);
    for (auto task : datagen::kAllTasks) bytes.push_back(static_cast<char>(l.Label(task)));
  }
  return HexDigest(bytes);
}

DailyFeatureTable::DailyFeatureTable(const datagen::Cohort& cohort) : days_(cohort.days()) {
  rows_.reserve(cohort.users.size() * static_cast<std::size_t>(days_));
  for (std::size_t u = 0; u < cohort.users.size(); ++u) {
    for (int d = 1; d <= days_; ++d) rows_.push_back(features::DailyFeatures(cohort.Days(u, d, d), cohort.users[u].bmr));
  }
}

baseline::FeatureMatrix ConcatenatedFeatures(const DailyFeatureTable& table, std::span<const datagen::WindowRef> refs,
                                             int window_days) {
  baseline::FeatureMatrix x(refs.size(), features::kDailyFeatureCount * static_cast<std::size_t>(window_days));
  std::vector<features::DailyFeatureVector> days(static_cast<std::size_t>(window_days));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& ref = refs[i];
    for (int k = 0; k < window_days; ++k) {
      days[static_cast<std::size_t>(k)] = table.at(ref.user_index, ref.label_day - window_days + k);
    }
    const auto row = features::WindowFeatures(days, static_cast<std::size_t>(window_days));
    std::copy(row.begin(), row.end(), x.row(i).begin());
  }
  return x;
}

baseline::FeatureMatrix ZeroShotMatrix(const datagen::Cohort& cohort, std::span<const datagen::WindowRef> refs,
                                       int window_days, pretrain::AccessAudit* audit) {
  if (audit != nullptr) audit->Record(cohort.config.name, refs.size());
  baseline::FeatureMatrix x(refs.size(), features::kZeroShotFeatureCount);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto row = features::ZeroShotFeatures(datagen::WindowView(cohort, refs[i], window_days)).ToArray();
    std::copy(row.begin(), row.end(), x.row(i).begin());
  }
  return x;
}

std::vector<int> RefLabels(const datagen::Cohort& cohort, std::span<const datagen::WindowRef> refs,
                           datagen::Task task) {
  std::vector<int> y;
  y.reserve(refs.size());
  for (const auto& r : refs) y.push_back(cohort.label(r.user_index, r.label_day).Label(task));
  return y;
}

Metrics Evaluate(std::span<const double> scores, std::span<const int> labels) {
  Metrics m;
  m.n = labels.size();
  m.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  m.roc_auc = stats::RocAuc(scores, labels);
  m.pr_auc = stats::PrAuc(scores, labels);
  return m;
}

nlohmann::ordered_json ToJson(const Metrics& m) {
  return {{"roc_auc", m.roc_auc}, {"pr_auc", m.pr_auc}, {"n", m.n}, {"positives", m.positives}};
}

stats::ScoredPredictions MakePredictions(std::span<const double> scores, std::span<const int> labels,
                                         std::span<const datagen::WindowRef> refs) {
  if (scores.size() != labels.size() || scores.size() != refs.size()) {
    throw DimensionError("predictions need equally long scores, labels and windows");
  }
  stats::ScoredPredictions p;
  for (std::size_t i = 0; i < scores.size(); ++i) p.Add(scores[i], labels[i], refs[i].user_id, refs[i].label_day);
  return p;
}

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void WriteJsonFile(const std::filesystem::path& path, const nlohmann::ordered_json& json) {
  WriteTextFile(path, json.dump(2) + "\n");
}

void WriteCurveCsv(const std::filesystem::path& path, std::span<const stats::CurvePoint> points, const std::string& x,
                   const std::string& y) {
  std::string text = "threshold," + x + "," + y + "\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.x, p.y);
    text += buf;
  }
  WriteTextFile(path, text);
}

void WritePredictionsCsv(const std::filesystem::path& path, const stats::ScoredPredictions& p) {
  std::string text = "user_id,day_index,label,score\n";
  char buf[96];
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%lld,%d,%d,%.17g\n", static_cast<long long>(p.user_ids[i]), p.day_indices[i],
                  p.labels[i], p.scores[i]);
    text += buf;
  }
  WriteTextFile(path, text);
}

nlohmann::ordered_json MakeRunRecord(const ExperimentConfig& config, const std::string& input_digest,
                                     double wall_seconds, const std::vector<std::string>& checkpoints,
                                     const nlohmann::ordered_json& metrics) {
  nlohmann::ordered_json j;
  j["experiment"] = config.name;
  j["config_hash"] = ConfigHash(config);
  j["input_digest"] = input_digest;
  j["seed"] = config.seed;
  j["threads"] = config.threads;
  j["wall_clock_seconds"] = wall_seconds;
  j["checkpoints"] = checkpoints;
  j["metrics"] = metrics;
  j["config"] = ToJson(config);
  return j;
}

void WriteOutputs(const RunOptions& options, const ExperimentOutput& output) {
  if (options.out_dir.empty()) return;
  WriteJsonFile(options.out_dir / "report.json", output.report);
  WriteJsonFile(options.out_dir / "run_record.json", output.record);
}

std::string BackboneBlob(const model::ModelParams& params) {
  std::string blob;
  for (const auto& t : params.Named()) {
    if (t.name.rfind("head.", 0) == 0 || t.name.rfind("decoder.", 0) == 0) continue;
    blob += t.name;
    blob += tensor::Float32Bytes(t.tensor);
  }
  return blob;
}

void ParallelFor(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace flusense::pipeline
