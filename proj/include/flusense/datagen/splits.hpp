#pragma once

#include <cstdint>
#include <vector>

#include "flusense/common/rng.hpp"
#include "flusense/datagen/cohort.hpp"

namespace flusense::datagen {

// A window of `window_days` days ending the day before `label_day`.
struct WindowRef {
  std::size_t user_index = 0;
  std::int64_t user_id = 0;
  int label_day = 0;
};

int FirstWindowMinute(const WindowRef& ref, int window_days);
StreamView WindowView(const Cohort& cohort, const WindowRef& ref, int window_days);

// One window per user per labeled day in [first_label_day, last_label_day]
// with full history; days without enough history are skipped.
std::vector<WindowRef> ExtractWindows(const Cohort& cohort, int window_days = 7,
                                      int first_label_day = 1, int last_label_day = -1);

struct TemporalSplit {
  std::vector<WindowRef> train;  // label day < midpoint
  std::vector<WindowRef> test;   // label day >= midpoint
  StreamStats stats;             // from train-window minutes only
  int midpoint_day = 0;
  // Last day whose minutes may appear in a train window.
  int last_train_minute_day = 0;
};

// Throws DataError when either side would be empty.
TemporalSplit SplitTemporal(const Cohort& cohort, int midpoint_day, int window_days = 7);

// Z-scoring statistics over every minute of the listed windows' days.
StreamStats StatsOverWindows(const Cohort& cohort, const std::vector<WindowRef>& windows,
                             int window_days);

struct PositiveUserFolds {
  std::vector<std::vector<std::int64_t>> folds;
  // Users who never test positive; the unlabeled pretraining pool.
  std::vector<std::int64_t> pretrain_pool;
};

// Shuffles the ever-positive users and deals them into k folds whose sizes
// differ by at most one. Throws DataError with fewer than k positive users.
PositiveUserFolds FoldSplitPositiveUsers(const Cohort& cohort, std::size_t k, Rng rng);

}  // namespace flusense::datagen
