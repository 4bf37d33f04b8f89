#include <algorithm>
#include <set>

#include "flusense/common/errors.hpp"
#include "flusense/datagen/splits.hpp"

namespace flusense::datagen {

int FirstWindowMinute(const WindowRef& ref, int window_days) {
  return (ref.label_day - 1 - window_days) * kMinutesPerDay;
}

StreamView WindowView(const Cohort& cohort, const WindowRef& ref, int window_days) {
  return cohort.Days(ref.user_index, ref.label_day - window_days, ref.label_day - 1);
}

std::vector<WindowRef> ExtractWindows(const Cohort& cohort, int window_days, int first_label_day,
                                      int last_label_day) {
  if (window_days < 1) throw ConfigError("window_days must be positive");
  if (last_label_day < 0) last_label_day = cohort.days();
  const int first = std::max(first_label_day, window_days + 1);
  const int last = std::min(last_label_day, cohort.days());
  std::vector<WindowRef> out;
  for (std::size_t u = 0; u < cohort.users.size(); ++u) {
    for (int day = first; day <= last; ++day) out.push_back({u, cohort.users[u].user_id, day});
  }
  return out;
}

StreamStats StatsOverWindows(const Cohort& cohort, const std::vector<WindowRef>& windows,
                             int window_days) {
  // Each minute counts once even when covered by several windows.
  std::vector<std::pair<int, int>> span(cohort.users.size(), {0, -1});
  for (const auto& w : windows) {
    auto& [lo, hi] = span[w.user_index];
    const int first = w.label_day - window_days;
    const int last = w.label_day - 1;
    if (hi < lo) {
      lo = first;
      hi = last;
    } else {
      lo = std::min(lo, first);
      hi = std::max(hi, last);
    }
  }
  StreamStats::Accumulator acc;
  for (std::size_t u = 0; u < span.size(); ++u) {
    if (span[u].second >= span[u].first) acc.Add(cohort.Days(u, span[u].first, span[u].second));
  }
  return acc.Finish();
}

TemporalSplit SplitTemporal(const Cohort& cohort, int midpoint_day, int window_days) {
  if (midpoint_day < 2 || midpoint_day > cohort.days()) {
    throw ConfigError("midpoint day outside the season");
  }
  TemporalSplit split;
  split.midpoint_day = midpoint_day;
  split.train = ExtractWindows(cohort, window_days, 1, midpoint_day - 1);
  split.test = ExtractWindows(cohort, window_days, midpoint_day, cohort.days());
  if (split.train.empty() || split.test.empty()) {
    throw DataError("temporal split leaves an empty side");
  }
  split.last_train_minute_day = midpoint_day - 2;
  split.stats = StatsOverWindows(cohort, split.train, window_days);
  return split;
}

PositiveUserFolds FoldSplitPositiveUsers(const Cohort& cohort, std::size_t k, Rng rng) {
  if (k == 0) throw ConfigError("fold count must be positive");
  std::set<std::int64_t> positive;
  for (const auto& l : cohort.labels) {
    if (l.flu_positive) positive.insert(l.user_id);
  }
  if (positive.size() < k) {
    throw DataError("only " + std::to_string(positive.size()) + " positive users for " +
                    std::to_string(k) + " folds");
  }
  std::vector<std::int64_t> users(positive.begin(), positive.end());
  rng.Shuffle(users);
  PositiveUserFolds out;
  out.folds.resize(k);
  for (std::size_t i = 0; i < users.size(); ++i) out.folds[i % k].push_back(users[i]);
  for (auto& f : out.folds) std::sort(f.begin(), f.end());
  for (const auto& u : cohort.users) {
    if (!positive.contains(u.user_id)) out.pretrain_pool.push_back(u.user_id);
  }
  return out;
}

}  // namespace flusense::datagen
