#include <algorithm>
#include <fstream>
#include <string>

#include "flusense/common/errors.hpp"
#include "flusense/features/features.hpp"

namespace flusense::features {
namespace {

bool Present(std::uint8_t v) { return v != kMissing; }

struct Run {
  std::size_t begin = 0;
  std::size_t length = 0;
};

std::vector<Run> RunsOfOnes(std::span<const std::uint8_t> stream) {
  std::vector<Run> runs;
  std::size_t i = 0;
  while (i < stream.size()) {
    if (stream[i] != 1) {
      ++i;
      continue;
    }
    const std::size_t begin = i;
    while (i < stream.size() && stream[i] == 1) ++i;
    runs.push_back({begin, i - begin});
  }
  return runs;
}

}  // namespace

std::array<double, kDailyFeatureCount> DailyFeatureVector::ToArray() const {
  return {resting_hr,          main_minutes_in_bed,    sleep_efficiency,      nap_count,
          total_asleep_minutes, total_in_bed_minutes,  active_calories,       calories_out,
          base_metabolic_rate, sedentary_minutes,      lightly_active_minutes,
          fairly_active_minutes, very_active_minutes,  missing_hr,            missing_sleep,
          missing_steps,       missing_day};
}

DailyFeatureVector DailyFeatures(const StreamView& day, double bmr) {
  if (day.minutes() != kMinutesPerDay) {
    throw DataError("DailyFeatures: expected 1440 minutes, got " + std::to_string(day.minutes()));
  }
  const auto hr = day[Stream::kHeartRate];
  const auto steps = day[Stream::kSteps];
  const auto sleep = day[Stream::kSleep];
  const auto awake = day[Stream::kAwake];
  const auto in_bed = day[Stream::kInBed];

  DailyFeatureVector f;
  double resting_sum = 0.0;
  int resting_count = 0;
  int missing_hr = 0, missing_steps = 0, missing_sleep = 0, missing_all = 0;
  double step_total = 0.0;
  for (int t = 0; t < kMinutesPerDay; ++t) {
    if (!Present(hr[t])) ++missing_hr;
    if (!Present(steps[t])) ++missing_steps;
    if (!Present(sleep[t])) ++missing_sleep;
    bool any = false;
    for (const auto& s : day.streams) any = any || Present(s[t]);
    if (!any) ++missing_all;

    if (Present(hr[t]) && steps[t] == 0 && awake[t] == 1) {
      resting_sum += hr[t];
      ++resting_count;
    }
    if (in_bed[t] == 1) {
      f.total_in_bed_minutes += 1;
      if (sleep[t] == 1) f.total_asleep_minutes += 1;
    }
    if (Present(steps[t])) {
      const int s = steps[t];
      step_total += s;
      if (s < 1) {
        f.sedentary_minutes += 1;
      } else if (s < 60) {
        f.lightly_active_minutes += 1;
      } else if (s < 100) {
        f.fairly_active_minutes += 1;
      } else {
        f.very_active_minutes += 1;
      }
    }
  }
  f.resting_hr = resting_count > 0 ? resting_sum / resting_count : 0.0;
  f.sleep_efficiency =
      f.total_in_bed_minutes > 0 ? f.total_asleep_minutes / f.total_in_bed_minutes : 0.0;

  const auto bed_runs = RunsOfOnes(in_bed);
  Run main{};
  for (const auto& r : bed_runs) {
    if (r.length > main.length) main = r;
  }
  f.main_minutes_in_bed = static_cast<double>(main.length);
  for (const auto& r : RunsOfOnes(sleep)) {
    const bool inside_main =
        main.length > 0 && r.begin >= main.begin && r.begin + r.length <= main.begin + main.length;
    if (!inside_main && r.length >= static_cast<std::size_t>(kMinNapMinutes)) f.nap_count += 1;
  }

  f.base_metabolic_rate = bmr;
  f.active_calories = kCaloriesPerStep * step_total;
  f.calories_out = bmr + f.active_calories;
  f.missing_hr = missing_hr > kMissingMinuteThreshold ? 1.0 : 0.0;
  f.missing_steps = missing_steps > kMissingMinuteThreshold ? 1.0 : 0.0;
  f.missing_sleep = missing_sleep > kMissingMinuteThreshold ? 1.0 : 0.0;
  f.missing_day = missing_all > kMissingMinuteThreshold ? 1.0 : 0.0;
  return f;
}

std::vector<double> WindowFeatures(std::span<const DailyFeatureVector> days,
                                   std::size_t window_days) {
  if (days.size() != window_days) {
    throw DataError("WindowFeatures: expected " + std::to_string(window_days) + " days, got " +
                    std::to_string(days.size()));
  }
  std::vector<double> out;
  out.reserve(days.size() * kDailyFeatureCount);
  for (const auto& d : days) {
    const auto a = d.ToArray();
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

void WriteFeatureCsv(const std::filesystem::path& path, std::span<const std::string_view> names,
                     std::span<const FeatureRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string());
  out << "user_id,day_index";
  for (const auto n : names) out << ',' << n;
  out << '\n';
  out.precision(6);
  for (const auto& row : rows) {
    if (row.values.size() != names.size()) throw DataError("WriteFeatureCsv: row width mismatch");
    out << row.user_id << ',' << row.day_index;
    for (const double v : row.values) out << ',' << v;
    out << '\n';
  }
}

}  // namespace flusense::features
