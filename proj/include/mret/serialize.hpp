#pragma once

// Tensor files: a JSON sidecar listing {name, shape, offset, dtype} per tensor
// plus a binary blob of little-endian float32 values in row-major order.

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "mret/tensor.hpp"

namespace mret {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TensorMap = std::map<std::string, Tensor>;

struct TensorFile {
  TensorMap tensors;
  nlohmann::json sidecar;  // full sidecar document, including any extra fields
};

/// Writes `sidecar_path` and a sibling blob named after it with extension ".bin".
/// Fields of `extra` are merged into the sidecar next to "tensors" and "blob".
void save_tensors(const std::filesystem::path& sidecar_path, const TensorMap& tensors,
                  const nlohmann::json& extra = nlohmann::json::object());

TensorFile load_tensors(const std::filesystem::path& sidecar_path);

// Exposed for tests: byte-level float32 little-endian codec.
void append_f32_le(std::string& out, double v);
double read_f32_le(const unsigned char* p);

}  // namespace mret
