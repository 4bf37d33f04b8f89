#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace flusense {

inline constexpr int kMinutesPerDay = 1440;
inline constexpr int kStreamCount = 5;
// Stored value marking a missing reading.
inline constexpr std::uint8_t kMissing = 255;

enum class Stream : int { kHeartRate = 0, kSteps = 1, kSleep = 2, kAwake = 3, kInBed = 4 };

inline constexpr std::array<std::string_view, kStreamCount> kStreamNames = {
    "heart_rate", "steps", "sleep", "awake", "in_bed"};

constexpr int Index(Stream s) { return static_cast<int>(s); }

// Minute-level readings of every stream for one user. Heart rate is in bpm,
// steps are per minute, sleep/awake/in_bed are 0/1; all fit in a byte and
// kMissing marks an absent reading.
struct StreamSet {
  std::array<std::vector<std::uint8_t>, kStreamCount> values;

  explicit StreamSet(std::size_t minutes = 0) {
    for (auto& v : values) v.assign(minutes, kMissing);
  }
  std::size_t minutes() const { return values[0].size(); }
  std::span<const std::uint8_t> stream(Stream s) const { return values[Index(s)]; }
};

// Read-only view of a contiguous minute range across all streams.
struct StreamView {
  std::array<std::span<const std::uint8_t>, kStreamCount> streams;

  std::size_t minutes() const { return streams[0].size(); }
  std::span<const std::uint8_t> operator[](Stream s) const { return streams[Index(s)]; }
  StreamView Slice(std::size_t offset, std::size_t count) const;
};

StreamView ViewOf(const StreamSet& set);
StreamView ViewOf(const StreamSet& set, std::size_t first_minute, std::size_t count);

// Per-stream z-scoring statistics over present readings.
struct StreamStats {
  std::array<double, kStreamCount> mean{};
  std::array<double, kStreamCount> stddev{1.0, 1.0, 1.0, 1.0, 1.0};

  // Accumulates one view into running sums; call Finish() afterwards.
  class Accumulator {
   public:
    void Add(const StreamView& view);
    StreamStats Finish() const;

   private:
    std::array<double, kStreamCount> sum_{};
    std::array<double, kStreamCount> sum_sq_{};
    std::array<std::uint64_t, kStreamCount> count_{};
  };
};

}  // namespace flusense
