#include "flusense/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>

#include "flusense/common/errors.hpp"

namespace flusense::tensor {

namespace {

std::filesystem::path WithSuffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

void AppendLittleEndian(std::string& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((bits >> shift) & 0xffu));
}

float ReadLittleEndian(const unsigned char* bytes) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string Float32Bytes(const Tensor& tensor) {
  std::string out;
  out.reserve(tensor.size() * 4);
  for (const float v : tensor.data()) AppendLittleEndian(out, v);
  return out;
}

void SaveCheckpoint(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "flusense-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = "float32";
  manifest["byte_order"] = "little";
  manifest["parameters"] = nlohmann::ordered_json::array();
  std::string blob;
  std::size_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = tensor.shape();
    entry["offset"] = offset;
    manifest["parameters"].push_back(entry);
    blob += Float32Bytes(tensor);
    offset += tensor.size();
  }
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream json_out(WithSuffix(stem, ".json"), std::ios::binary);
  json_out << manifest.dump(2) << '\n';
  std::ofstream bin_out(WithSuffix(stem, ".bin"), std::ios::binary);
  bin_out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!json_out || !bin_out) throw std::runtime_error("failed to write checkpoint " + stem.string());
}

std::vector<NamedTensor> LoadCheckpoint(const std::filesystem::path& stem) {
  std::ifstream json_in(WithSuffix(stem, ".json"));
  if (!json_in) throw DataError("checkpoint manifest not found: " + WithSuffix(stem, ".json").string());
  const auto manifest = nlohmann::json::parse(json_in);
  if (manifest.value("format", "") != "flusense-checkpoint" || manifest.value("dtype", "") != "float32") {
    throw DataError("unrecognized checkpoint manifest " + stem.string());
  }
  std::ifstream bin_in(WithSuffix(stem, ".bin"), std::ios::binary);
  const std::string blob((std::istreambuf_iterator<char>(bin_in)), std::istreambuf_iterator<char>());
  std::vector<NamedTensor> out;
  std::size_t offset = 0;
  for (const auto& entry : manifest.at("parameters")) {
    const Shape shape = entry.at("shape").get<Shape>();
    const std::size_t count = NumElements(shape);
    if ((offset + count) * 4 > blob.size()) throw DataError("checkpoint blob is truncated: " + stem.string());
    std::vector<float> values(count);
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data()) + offset * 4;
    for (std::size_t i = 0; i < count; ++i) values[i] = ReadLittleEndian(bytes + 4 * i);
    out.push_back({entry.at("name").get<std::string>(), Tensor::FromData(shape, std::move(values))});
    offset += count;
  }
  if (offset * 4 != blob.size()) throw DataError("checkpoint blob has trailing data: " + stem.string());
  return out;
}

void RestoreInto(const std::vector<NamedTensor>& from, std::vector<NamedTensor>& into) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : from) by_name[nt.name] = &nt.tensor;
  for (auto& [name, tensor] : into) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint lacks tensor '" + name + "'");
    if (it->second->shape() != tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + ShapeString(it->second->shape()) +
                           ", expected " + ShapeString(tensor.shape()));
    }
    std::copy(it->second->data().begin(), it->second->data().end(), tensor.data().begin());
  }
}

}  // namespace flusense::tensor
