#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flusense/common/streams.hpp"

namespace flusense::datagen {

enum class Task { kFluPositivity, kSevereFever, kSevereCough, kSevereFatigue, kFluSymptoms };
inline constexpr std::size_t kTaskCount = 5;
inline constexpr std::array<Task, kTaskCount> kAllTasks = {
    Task::kFluPositivity, Task::kSevereFever, Task::kSevereCough, Task::kSevereFatigue,
    Task::kFluSymptoms};
std::string_view TaskName(Task task);
Task ParseTask(std::string_view name);

// Per-day label rates (positives / labeled days).
struct LabelRates {
  double flu_positive = 1.0 / 300.0;
  double severe_fever = 1.0 / 643.0;
  double severe_cough = 1.0 / 132.0;
  double severe_fatigue = 1.0 / 78.0;
  double flu_symptoms = 1.0 / 37.0;
};

struct IllnessModel {
  // Share of illness events that are flu (and yield a positive test).
  double flu_fraction = 0.5;
  int min_duration_days = 4;
  int max_duration_days = 9;
  // Days from onset to peak severity.
  double min_peak_days = 1.0;
  double max_peak_days = 2.5;
  // Physiology runs ahead of symptoms by this many days.
  double physiology_lead_days = 1.0;
  // Master scale of every stream response; 0 yields a signal-free cohort.
  double amplitude = 1.0;
  // Fractional resting HR increase at full severity.
  double hr_elevation = 0.12;
  double activity_suppression = 0.6;
  double sleep_increase = 0.25;
  // Relative increase of device-off blocks at full severity.
  double missing_boost = 0.5;
  // Standard deviation of the daily symptom-report noise.
  double symptom_noise = 0.12;
};

struct CohortConfig {
  std::string name = "primary";
  int user_count = 200;
  int days_per_user = 120;
  int season_midpoint_day = 60;
  std::int64_t first_user_id = 0;
  // Target share of days with more than an hour of missing data.
  double missing_day_fraction = 0.93;
  double whole_day_dropout = 0.05;
  // Mean device-off block length beyond the first 61 minutes.
  double device_off_extra_minutes = 60.0;
  // Exactly one flu event per user placed so that its positive test is
  // labeled; used by the transfer cohort.
  bool one_event_per_user = false;
  int between_user_hr_sd = 8;
  LabelRates rates;
  IllnessModel illness;
  std::uint64_t seed = 1;

  // Throws ConfigError for infeasible or inconsistent settings.
  void Validate() const;
  // Expected device-off blocks per observed day that realize the target.
  double DeviceOffBlocksPerDay() const;
};

// Desk-scale "disease B" cohort: 32 users x 46 days, disjoint user ids.
CohortConfig TransferCohortConfig(std::uint64_t seed = 2);

nlohmann::ordered_json ToJson(const CohortConfig& config);
CohortConfig CohortConfigFromJson(const nlohmann::json& json);

struct IllnessEvent {
  std::int64_t user_id = 0;
  int onset_day = 0;  // 1-based
  int duration_days = 0;
  double peak_days = 0.0;
  double strength = 1.0;
  bool flu = false;
  std::vector<double> severity;  // symptom severity per event day
  std::optional<int> tested_positive_day;
};

struct LabeledDay {
  std::int64_t user_id = 0;
  int day_index = 0;  // 1-based
  std::uint8_t flu_positive = 0;
  std::uint8_t severe_fever = 0;
  std::uint8_t severe_cough = 0;
  std::uint8_t severe_fatigue = 0;
  std::uint8_t flu_symptoms = 0;

  int Label(Task task) const;
};

struct UserData {
  std::int64_t user_id = 0;
  double bmr = 0.0;
  StreamSet streams;
};

struct Cohort {
  CohortConfig config;
  std::vector<UserData> users;
  // User-major, day-ascending: labels[u * days + d - 1].
  std::vector<LabeledDay> labels;
  std::vector<IllnessEvent> events;

  int days() const { return config.days_per_user; }
  const LabeledDay& label(std::size_t user_index, int day_index) const {
    return labels[user_index * static_cast<std::size_t>(days()) + static_cast<std::size_t>(day_index - 1)];
  }
  // Minutes of days [first_day, last_day] (1-based, inclusive).
  StreamView Days(std::size_t user_index, int first_day, int last_day) const;
};

// Deterministic in config (including seed) regardless of `threads`.
Cohort GenerateCohort(const CohortConfig& config, int threads = 1);

struct CohortSummary {
  std::size_t labeled_days = 0;
  std::array<std::size_t, kTaskCount> positives{};
  double missing_day_fraction = 0.0;
};
CohortSummary Summarize(const Cohort& cohort);

// minutes.csv, labels.csv, profile.csv, events.csv and manifest.json.
void WriteCohort(const Cohort& cohort, const std::filesystem::path& dir);
Cohort ReadCohort(const std::filesystem::path& dir);

}  // namespace flusense::datagen
