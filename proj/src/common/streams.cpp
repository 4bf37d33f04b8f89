#include <algorithm>
#include "flusense/common/streams.hpp"

#include <cmath>

namespace flusense {

StreamView StreamView::Slice(std::size_t offset, std::size_t count) const {
  StreamView out;
  for (int s = 0; s < kStreamCount; ++s) out.streams[s] = streams[s].subspan(offset, count);
  return out;
}

StreamView ViewOf(const StreamSet& set) {
  StreamView out;
  for (int s = 0; s < kStreamCount; ++s) out.streams[s] = set.values[s];
  return out;
}

StreamView ViewOf(const StreamSet& set, std::size_t first_minute, std::size_t count) {
  return ViewOf(set).Slice(first_minute, count);
}

void StreamStats::Accumulator::Add(const StreamView& view) {
  for (int s = 0; s < kStreamCount; ++s) {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::uint64_t count = 0;
    for (const std::uint8_t v : view.streams[s]) {
      if (v == kMissing) continue;
      sum += v;
      sum_sq += static_cast<double>(v) * v;
      ++count;
    }
    sum_[s] += sum;
    sum_sq_[s] += sum_sq;
    count_[s] += count;
  }
}

StreamStats StreamStats::Accumulator::Finish() const {
  StreamStats stats;
  for (int s = 0; s < kStreamCount; ++s) {
    if (count_[s] == 0) {
      stats.mean[s] = 0.0;
      stats.stddev[s] = 1.0;
      continue;
    }
    const double n = static_cast<double>(count_[s]);
    const double mean = sum_[s] / n;
    const double var = std::max(0.0, sum_sq_[s] / n - mean * mean);
    stats.mean[s] = mean;
    // Constant streams keep unit scale so z-scores stay finite.
    stats.stddev[s] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

}  // namespace flusense
