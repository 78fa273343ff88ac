#pragma once

#include "vlm/model/config.hpp"
#include "vlm/numerics/matrix.hpp"

#include <map>
#include <string>
#include <vector>

namespace vlm {

// Flat named-tensor container.
//
//   magic   8 bytes  "VLMCKPT1"
//   u32     header field count, then (str key, str value) pairs; keys
//           prefixed "model." hold ModelConfig, the rest are free metadata
//   u32     tensor count, then per tensor:
//           str name, u64 rows, u64 cols, rows*cols f64 row-major
//
// str = u32 byte length + bytes. All integers and floats little-endian.
// Tensors are written in name order, so equal contents give equal bytes.
struct Checkpoint {
  ModelConfig config;
  std::map<std::string, std::string> metadata;
  TensorMap<double> tensors;
};

std::vector<char> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Tensors whose names start with `prefix`, with the prefix removed.
TensorMap<double> tensors_with_prefix(const TensorMap<double>& tensors, const std::string& prefix);

}  // namespace vlm
