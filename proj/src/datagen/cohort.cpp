#include <cmath>
#include <set>

#include "flusense/common/errors.hpp"
#include "flusense/datagen/cohort.hpp"

namespace flusense::datagen {

std::string_view TaskName(Task task) {
  switch (task) {
    case Task::kFluPositivity:
      return "flu_positivity";
    case Task::kSevereFever:
      return "severe_fever";
    case Task::kSevereCough:
      return "severe_cough";
    case Task::kSevereFatigue:
      return "severe_fatigue";
    case Task::kFluSymptoms:
      return "flu_symptoms";
  }
  return "flu_positivity";
}

Task ParseTask(std::string_view name) {
  for (const Task t : kAllTasks) {
    if (TaskName(t) == name) return t;
  }
  throw ConfigError("unknown task: " + std::string(name));
}

int LabeledDay::Label(Task task) const {
  switch (task) {
    case Task::kFluPositivity:
      return flu_positive;
    case Task::kSevereFever:
      return severe_fever;
    case Task::kSevereCough:
      return severe_cough;
    case Task::kSevereFatigue:
      return severe_fatigue;
    case Task::kFluSymptoms:
      return flu_symptoms;
  }
  return 0;
}

namespace {

void RequireRate(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must be in [0, 1]");
}

}  // namespace

void CohortConfig::Validate() const {
  if (user_count < 1) throw ConfigError("user_count must be positive");
  if (days_per_user < 14) throw ConfigError("days_per_user must be at least 14");
  if (season_midpoint_day < 2 || season_midpoint_day > days_per_user) {
    throw ConfigError("season_midpoint_day must lie within the season");
  }
  RequireRate(missing_day_fraction, "missing_day_fraction");
  RequireRate(whole_day_dropout, "whole_day_dropout");
  RequireRate(rates.flu_positive, "rates.flu_positive");
  RequireRate(rates.severe_fever, "rates.severe_fever");
  RequireRate(rates.severe_cough, "rates.severe_cough");
  RequireRate(rates.severe_fatigue, "rates.severe_fatigue");
  RequireRate(rates.flu_symptoms, "rates.flu_symptoms");
  if (whole_day_dropout > missing_day_fraction || missing_day_fraction >= 1.0) {
    throw ConfigError("missing_day_fraction must be in [whole_day_dropout, 1)");
  }
  if (device_off_extra_minutes < 1.0) throw ConfigError("device_off_extra_minutes must be >= 1");
  if (!(illness.flu_fraction > 0.0 && illness.flu_fraction <= 1.0)) {
    throw ConfigError("illness.flu_fraction must be in (0, 1]");
  }
  if (!one_event_per_user && rates.flu_positive / illness.flu_fraction > 0.5) {
    throw ConfigError("flu positivity rate is infeasible for the illness model");
  }
  if (illness.min_duration_days < 2 || illness.max_duration_days < illness.min_duration_days) {
    throw ConfigError("illness durations must satisfy 2 <= min <= max");
  }
  if (illness.min_peak_days <= 0.0 || illness.max_peak_days < illness.min_peak_days ||
      illness.max_peak_days >= illness.min_duration_days) {
    throw ConfigError("illness peak must be positive and precede the end of the event");
  }
  if (illness.amplitude < 0.0 || illness.hr_elevation < 0.0 || illness.activity_suppression < 0.0 ||
      illness.activity_suppression > 1.0 || illness.sleep_increase < 0.0 ||
      illness.missing_boost < 0.0 || illness.symptom_noise <= 0.0 ||
      illness.physiology_lead_days < 0.0) {
    throw ConfigError("illness parameters out of range");
  }
  if (between_user_hr_sd < 0) throw ConfigError("between_user_hr_sd must be non-negative");
  if (one_event_per_user && days_per_user < 7 + illness.max_duration_days + 3) {
    throw ConfigError("season too short for one labeled event per user");
  }
}

double CohortConfig::DeviceOffBlocksPerDay() const {
  // P(day flagged) = p + (1 - p)(1 - exp(-mu)) because every block alone
  // exceeds the one-hour threshold.
  const double p = whole_day_dropout;
  const double rest = (missing_day_fraction - p) / (1.0 - p);
  return -std::log(1.0 - rest);
}

CohortConfig TransferCohortConfig(std::uint64_t seed) {
  CohortConfig c;
  c.name = "transfer";
  c.user_count = 32;
  c.days_per_user = 46;
  c.season_midpoint_day = 23;
  c.first_user_id = 100000;
  c.one_event_per_user = true;
  c.illness.flu_fraction = 1.0;
  c.illness.min_duration_days = 6;
  c.illness.max_duration_days = 12;
  c.illness.min_peak_days = 1.5;
  c.illness.max_peak_days = 3.0;
  c.illness.hr_elevation = 0.09;
  c.illness.activity_suppression = 0.45;
  c.seed = seed;
  return c;
}

nlohmann::ordered_json ToJson(const CohortConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["user_count"] = c.user_count;
  j["days_per_user"] = c.days_per_user;
  j["season_midpoint_day"] = c.season_midpoint_day;
  j["first_user_id"] = c.first_user_id;
  j["missing_day_fraction"] = c.missing_day_fraction;
  j["whole_day_dropout"] = c.whole_day_dropout;
  j["device_off_extra_minutes"] = c.device_off_extra_minutes;
  j["one_event_per_user"] = c.one_event_per_user;
  j["between_user_hr_sd"] = c.between_user_hr_sd;
  j["rates"] = {{"flu_positive", c.rates.flu_positive},
                {"severe_fever", c.rates.severe_fever},
                {"severe_cough", c.rates.severe_cough},
                {"severe_fatigue", c.rates.severe_fatigue},
                {"flu_symptoms", c.rates.flu_symptoms}};
  const auto& i = c.illness;
  j["illness"] = {{"flu_fraction", i.flu_fraction},
                  {"min_duration_days", i.min_duration_days},
                  {"max_duration_days", i.max_duration_days},
                  {"min_peak_days", i.min_peak_days},
                  {"max_peak_days", i.max_peak_days},
                  {"physiology_lead_days", i.physiology_lead_days},
                  {"amplitude", i.amplitude},
                  {"hr_elevation", i.hr_elevation},
                  {"activity_suppression", i.activity_suppression},
                  {"sleep_increase", i.sleep_increase},
                  {"missing_boost", i.missing_boost},
                  {"symptom_noise", i.symptom_noise}};
  j["seed"] = c.seed;
  return j;
}

namespace {

template <typename T>
void Read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void CheckKeys(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.contains(key)) throw ConfigError("unknown key in " + where + ": " + key);
  }
}

}  // namespace

CohortConfig CohortConfigFromJson(const nlohmann::json& j) {
  CohortConfig c;
  try {
    CheckKeys(j,
              {"name", "user_count", "days_per_user", "season_midpoint_day", "first_user_id",
               "missing_day_fraction", "whole_day_dropout", "device_off_extra_minutes",
               "one_event_per_user", "between_user_hr_sd", "rates", "illness", "seed"},
              "cohort config");
    Read(j, "name", c.name);
    Read(j, "user_count", c.user_count);
    Read(j, "days_per_user", c.days_per_user);
    Read(j, "season_midpoint_day", c.season_midpoint_day);
    Read(j, "first_user_id", c.first_user_id);
    Read(j, "missing_day_fraction", c.missing_day_fraction);
    Read(j, "whole_day_dropout", c.whole_day_dropout);
    Read(j, "device_off_extra_minutes", c.device_off_extra_minutes);
    Read(j, "one_event_per_user", c.one_event_per_user);
    Read(j, "between_user_hr_sd", c.between_user_hr_sd);
    Read(j, "seed", c.seed);
    if (j.contains("rates")) {
      const auto& r = j.at("rates");
      CheckKeys(r, {"flu_positive", "severe_fever", "severe_cough", "severe_fatigue", "flu_symptoms"},
                "rates");
      Read(r, "flu_positive", c.rates.flu_positive);
      Read(r, "severe_fever", c.rates.severe_fever);
      Read(r, "severe_cough", c.rates.severe_cough);
      Read(r, "severe_fatigue", c.rates.severe_fatigue);
      Read(r, "flu_symptoms", c.rates.flu_symptoms);
    }
    if (j.contains("illness")) {
      const auto& i = j.at("illness");
      CheckKeys(i,
                {"flu_fraction", "min_duration_days", "max_duration_days", "min_peak_days",
                 "max_peak_days", "physiology_lead_days", "amplitude", "hr_elevation",
                 "activity_suppression", "sleep_increase", "missing_boost", "symptom_noise"},
                "illness");
      Read(i, "flu_fraction", c.illness.flu_fraction);
      Read(i, "min_duration_days", c.illness.min_duration_days);
      Read(i, "max_duration_days", c.illness.max_duration_days);
      Read(i, "min_peak_days", c.illness.min_peak_days);
      Read(i, "max_peak_days", c.illness.max_peak_days);
      Read(i, "physiology_lead_days", c.illness.physiology_lead_days);
      Read(i, "amplitude", c.illness.amplitude);
      Read(i, "hr_elevation", c.illness.hr_elevation);
      Read(i, "activity_suppression", c.illness.activity_suppression);
      Read(i, "sleep_increase", c.illness.sleep_increase);
      Read(i, "missing_boost", c.illness.missing_boost);
      Read(i, "symptom_noise", c.illness.symptom_noise);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cohort config: ") + e.what());
  }
  c.Validate();
  return c;
}

StreamView Cohort::Days(std::size_t user_index, int first_day, int last_day) const {
  if (first_day < 1 || last_day > days() || last_day < first_day) {
    throw DataError("day range out of bounds");
  }
  const auto first = static_cast<std::size_t>(first_day - 1) * kMinutesPerDay;
  const auto count = static_cast<std::size_t>(last_day - first_day + 1) * kMinutesPerDay;
  return ViewOf(users.at(user_index).streams, first, count);
}

CohortSummary Summarize(const Cohort& cohort) {
  CohortSummary s;
  s.labeled_days = cohort.labels.size();
  for (const auto& l : cohort.labels) {
    for (std::size_t t = 0; t < kTaskCount; ++t) s.positives[t] += l.Label(kAllTasks[t]) != 0;
  }
  std::size_t flagged = 0, total = 0;
  for (std::size_t u = 0; u < cohort.users.size(); ++u) {
    const auto& set = cohort.users[u].streams;
    for (int d = 0; d < cohort.days(); ++d) {
      std::array<int, kStreamCount> missing{};
      for (int t = 0; t < kMinutesPerDay; ++t) {
        const std::size_t m = static_cast<std::size_t>(d) * kMinutesPerDay + t;
        for (int st = 0; st < kStreamCount; ++st) missing[st] += set.values[st][m] == kMissing;
      }
      bool day_flag = false;
      for (const int c : missing) day_flag = day_flag || c > 60;
      flagged += day_flag;
      ++total;
    }
  }
  s.missing_day_fraction = total > 0 ? static_cast<double>(flagged) / static_cast<double>(total) : 0.0;
  return s;
}

}  // namespace flusense::datagen
