#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "flusense/common/streams.hpp"

namespace flusense::features {

inline constexpr std::size_t kDailyFeatureCount = 17;
inline constexpr std::size_t kZeroShotFeatureCount = 13;
// Minutes of missing data above which a day is flagged.
inline constexpr int kMissingMinuteThreshold = 60;
inline constexpr int kMinNapMinutes = 20;
inline constexpr double kCaloriesPerStep = 0.04;

inline constexpr std::array<std::string_view, kDailyFeatureCount> kDailyFeatureNames = {
    "resting_hr",           "main_minutes_in_bed",    "sleep_efficiency",
    "nap_count",            "total_asleep_minutes",   "total_in_bed_minutes",
    "active_calories",      "calories_out",           "base_metabolic_rate",
    "sedentary_minutes",    "lightly_active_minutes", "fairly_active_minutes",
    "very_active_minutes",  "missing_hr",             "missing_sleep",
    "missing_steps",        "missing_day"};

inline constexpr std::array<std::string_view, kZeroShotFeatureCount> kZeroShotFeatureNames = {
    "resting_hr_p95",   "resting_hr_p50",       "resting_hr_std", "awake_hr_p95",
    "steps_streak_p95", "steps_streak_p50",     "total_minutes_in_bed",
    "sleep_minutes",    "total_steps",          "missing_hr",     "missing_sleep",
    "missing_steps",    "missing_day"};

struct DailyFeatureVector {
  double resting_hr = 0.0;
  double main_minutes_in_bed = 0.0;
  double sleep_efficiency = 0.0;
  double nap_count = 0.0;
  double total_asleep_minutes = 0.0;
  double total_in_bed_minutes = 0.0;
  double active_calories = 0.0;
  double calories_out = 0.0;
  double base_metabolic_rate = 0.0;
  double sedentary_minutes = 0.0;
  double lightly_active_minutes = 0.0;
  double fairly_active_minutes = 0.0;
  double very_active_minutes = 0.0;
  double missing_hr = 0.0;
  double missing_sleep = 0.0;
  double missing_steps = 0.0;
  double missing_day = 0.0;

  std::array<double, kDailyFeatureCount> ToArray() const;
};

struct ZeroShotFeatureVector {
  double resting_hr_p95 = 0.0;
  double resting_hr_p50 = 0.0;
  double resting_hr_std = 0.0;
  double awake_hr_p95 = 0.0;
  double steps_streak_p95 = 0.0;
  double steps_streak_p50 = 0.0;
  double total_minutes_in_bed = 0.0;
  double sleep_minutes = 0.0;
  double total_steps = 0.0;
  // Number of days in the window carrying the corresponding daily flag.
  double missing_hr = 0.0;
  double missing_sleep = 0.0;
  double missing_steps = 0.0;
  double missing_day = 0.0;

  std::array<double, kZeroShotFeatureCount> ToArray() const;
};

// Features of one calendar day. `day` must span exactly 1440 minutes; `bmr`
// is the user's base metabolic rate in kcal/day.
DailyFeatureVector DailyFeatures(const StreamView& day, double bmr);

// Concatenation of the daily vectors in day order; throws DataError unless
// exactly `window_days` vectors are given.
std::vector<double> WindowFeatures(std::span<const DailyFeatureVector> days,
                                   std::size_t window_days = 7);

// Whole-window aggregates; `window` must be a whole number of days.
ZeroShotFeatureVector ZeroShotFeatures(const StreamView& window);

// Linear interpolation between order statistics, q in [0, 1]; 0 when empty.
double Percentile(std::vector<double> values, double q);
// Population standard deviation; 0 when empty.
double PopulationStddev(std::span<const double> values);
// Lengths of maximal runs of consecutive minutes with steps > 0. Missing
// minutes end a run.
std::vector<double> StepStreaks(std::span<const std::uint8_t> steps);

struct FeatureRow {
  std::int64_t user_id = 0;
  int day_index = 0;
  std::vector<double> values;
};

// CSV with header user_id,day_index,<names...>; floats at 6 significant digits.
void WriteFeatureCsv(const std::filesystem::path& path, std::span<const std::string_view> names,
                     std::span<const FeatureRow> rows);

}  // namespace flusense::features
