#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flusense/tensor/tensor.hpp"

namespace flusense::tensor {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Writes <stem>.json (ordered name/shape manifest) and <stem>.bin
// (little-endian float32 values concatenated in manifest order).
void SaveCheckpoint(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors);

// Reads a checkpoint written by SaveCheckpoint. Returned tensors are leaves
// that do not require gradients.
std::vector<NamedTensor> LoadCheckpoint(const std::filesystem::path& stem);

// Copies values into `into` by name; every name in `into` must be present with
// an identical shape.
void RestoreInto(const std::vector<NamedTensor>& from, std::vector<NamedTensor>& into);

// Little-endian float32 image of the values, used for blob equality checks.
std::string Float32Bytes(const Tensor& tensor);

}  // namespace flusense::tensor
