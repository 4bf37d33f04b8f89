#pragma once

#include <cstdint>
#include <span>

#include "flusense/common/streams.hpp"
#include "flusense/tensor/tensor.hpp"

namespace flusense::model {

// One user's model input ending the day before a prediction day. Channels
// 0..n-1 hold z-scored values with missing entries set to 0; channels
// n..2n-1 (when flags are enabled) hold 1 where the reading is missing.
struct SensorWindow {
  std::int64_t user_id = 0;
  int end_day_index = 0;
  tensor::Tensor values;  // (channels, minutes)
};

// Writes the (channels, minutes) encoding of `raw` into `out`, which must
// have room for exactly that many floats.
void EncodeInto(const StreamView& raw, const StreamStats& stats, bool flags, std::span<float> out);

SensorWindow EncodeMissingness(const StreamView& raw, const StreamStats& stats, bool flags = true,
                               std::int64_t user_id = 0, int end_day_index = 0);

}  // namespace flusense::model
