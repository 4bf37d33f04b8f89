#include "flusense/model/window.hpp"

#include "flusense/common/errors.hpp"

namespace flusense::model {

void EncodeInto(const StreamView& raw, const StreamStats& stats, bool flags, std::span<float> out) {
  const std::size_t m = raw.minutes();
  const std::size_t channels = flags ? 2 * kStreamCount : kStreamCount;
  if (out.size() != channels * m) throw DimensionError("EncodeInto: output size mismatch");
  for (int s = 0; s < kStreamCount; ++s) {
    const auto in = raw.streams[s];
    float* values = out.data() + static_cast<std::size_t>(s) * m;
    float* mask = flags ? out.data() + static_cast<std::size_t>(kStreamCount + s) * m : nullptr;
    const double mean = stats.mean[s];
    const double inv = 1.0 / stats.stddev[s];
    for (std::size_t t = 0; t < m; ++t) {
      const bool missing = in[t] == kMissing;
      values[t] = missing ? 0.0f : static_cast<float>((in[t] - mean) * inv);
      if (mask != nullptr) mask[t] = missing ? 1.0f : 0.0f;
    }
  }
}

SensorWindow EncodeMissingness(const StreamView& raw, const StreamStats& stats, bool flags,
                               std::int64_t user_id, int end_day_index) {
  const std::size_t channels = flags ? 2 * kStreamCount : kStreamCount;
  auto values = tensor::Tensor::Zeros({channels, raw.minutes()});
  EncodeInto(raw, stats, flags, values.data());
  return {user_id, end_day_index, values};
}

}  // namespace flusense::model
