#pragma once

#include "steerlab/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

// Binary tensor container: one little-endian float32 file per tensor plus a
// JSON manifest carrying name, shape, dtype, byte offset/length, checksum and
// a free-form "meta" object.

namespace steerlab {

struct NamedTensor {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> data;

  static NamedTensor from_matrix(const std::string& name, const Matf& m);
  static NamedTensor from_vector(const std::string& name, const Vecf& v);
  Matf to_matrix() const;  // requires 2-D shape
  Vecf to_vector() const;  // requires 1-D shape
  int64_t count() const;
};

using TensorMap = std::map<std::string, NamedTensor>;

void write_container(const std::filesystem::path& dir, const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& meta);

// Verifies checksums; throws IntegrityError on corruption or missing files.
TensorMap read_container(const std::filesystem::path& dir, nlohmann::json* meta_out = nullptr);

// Content hash over manifest + tensor bytes, stable across reruns.
std::string container_hash(const std::filesystem::path& dir);

}  // namespace steerlab
