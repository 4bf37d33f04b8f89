#include <algorithm>
#include <cmath>

#include "flusense/common/errors.hpp"
#include "flusense/features/features.hpp"

namespace flusense::features {

std::array<double, kZeroShotFeatureCount> ZeroShotFeatureVector::ToArray() const {
  return {resting_hr_p95,   resting_hr_p50,   resting_hr_std,       awake_hr_p95,
          steps_streak_p95, steps_streak_p50, total_minutes_in_bed, sleep_minutes,
          total_steps,      missing_hr,       missing_sleep,        missing_steps,
          missing_day};
}

double Percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double PopulationStddev(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double sq = 0.0;
  for (const double v : values) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / static_cast<double>(values.size()));
}

std::vector<double> StepStreaks(std::span<const std::uint8_t> steps) {
  std::vector<double> streaks;
  std::size_t run = 0;
  for (const auto s : steps) {
    if (s != kMissing && s > 0) {
      ++run;
    } else if (run > 0) {
      streaks.push_back(static_cast<double>(run));
      run = 0;
    }
  }
  if (run > 0) streaks.push_back(static_cast<double>(run));
  return streaks;
}

ZeroShotFeatureVector ZeroShotFeatures(const StreamView& window) {
  if (window.minutes() == 0 || window.minutes() % kMinutesPerDay != 0) {
    throw DataError("ZeroShotFeatures: window must be a whole number of days");
  }
  const auto hr = window[Stream::kHeartRate];
  const auto steps = window[Stream::kSteps];
  const auto sleep = window[Stream::kSleep];
  const auto awake = window[Stream::kAwake];
  const auto in_bed = window[Stream::kInBed];

  std::vector<double> resting, awake_hr;
  ZeroShotFeatureVector f;
  for (std::size_t t = 0; t < window.minutes(); ++t) {
    if (hr[t] != kMissing && awake[t] == 1) {
      awake_hr.push_back(hr[t]);
      if (steps[t] == 0) resting.push_back(hr[t]);
    }
    if (in_bed[t] == 1) f.total_minutes_in_bed += 1;
    if (sleep[t] == 1) f.sleep_minutes += 1;
    if (steps[t] != kMissing) f.total_steps += steps[t];
  }
  f.resting_hr_p95 = Percentile(resting, 0.95);
  f.resting_hr_p50 = Percentile(resting, 0.50);
  f.resting_hr_std = PopulationStddev(resting);
  f.awake_hr_p95 = Percentile(awake_hr, 0.95);
  const auto streaks = StepStreaks(steps);
  f.steps_streak_p95 = Percentile(streaks, 0.95);
  f.steps_streak_p50 = Percentile(streaks, 0.50);

  for (std::size_t d = 0; d < window.minutes() / kMinutesPerDay; ++d) {
    const auto day = DailyFeatures(window.Slice(d * kMinutesPerDay, kMinutesPerDay), 0.0);
    f.missing_hr += day.missing_hr;
    f.missing_sleep += day.missing_sleep;
    f.missing_steps += day.missing_steps;
    f.missing_day += day.missing_day;
  }
  return f;
}

}  // namespace flusense::features
