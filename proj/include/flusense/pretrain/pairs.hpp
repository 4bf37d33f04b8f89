#pragma once

#include <cstddef>
#include <vector>

#include "flusense/common/rng.hpp"
#include "flusense/pretrain/dataset.hpp"

namespace flusense::pretrain {

// Indices into a WindowDataset. Same-user pairs cover disjoint day ranges.
struct WindowPair {
  std::size_t a = 0;
  std::size_t b = 0;
  int same_user = 0;
};

// ceil(count/2) same-user pairs and floor(count/2) different-user pairs in
// shuffled order. Throws DataError with fewer than two users or when no
// user has two non-overlapping windows.
std::vector<WindowPair> SamplePairs(const WindowDataset& data, std::size_t count, Rng& rng);

}  // namespace flusense::pretrain
