#include "vlm/model/checkpoint.hpp"

#include "vlm/errors.hpp"
#include "vlm/io/binary.hpp"

namespace vlm {
namespace {
constexpr std::string_view kMagic = "VLMCKPT1";
constexpr std::string_view kModelPrefix = "model.";
}  // namespace

std::vector<char> serialize_checkpoint(const Checkpoint& checkpoint) {
  io::ByteWriter w;
  w.raw(kMagic);
  std::map<std::string, std::string> header;
  for (const auto& [k, v] : checkpoint.config.to_fields()) header.emplace(std::string(kModelPrefix) + k, v);
  for (const auto& [k, v] : checkpoint.metadata) {
    if (k.starts_with(kModelPrefix)) throw ContractViolation("metadata key uses reserved prefix: " + k);
    header.emplace(k, v);
  }
  w.u32(static_cast<std::uint32_t>(header.size()));
  for (const auto& [k, v] : header) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& [name, t] : checkpoint.tensors) {
    w.str(name);
    w.u64(static_cast<std::uint64_t>(t.rows()));
    w.u64(static_cast<std::uint64_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) w.f64(t.data()[i]);
  }
  return w.bytes();
}

Checkpoint deserialize_checkpoint(const std::vector<char>& bytes) {
  io::ByteReader r(bytes);
  if (r.raw(kMagic.size(), "magic") != kMagic) throw ParseError("not a checkpoint (bad magic)", 0);
  Checkpoint out;
  std::map<std::string, std::string> model_fields;
  const std::uint32_t fields = r.u32("header count");
  for (std::uint32_t i = 0; i < fields; ++i) {
    std::string key = r.str("header key");
    std::string value = r.str("header value");
    if (key.starts_with(kModelPrefix)) {
      model_fields.emplace(key.substr(kModelPrefix.size()), std::move(value));
    } else {
      out.metadata.emplace(std::move(key), std::move(value));
    }
  }
  const std::uint64_t config_offset = r.offset();
  try {
    out.config = ModelConfig::from_fields(model_fields);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("bad model header: ") + e.what(), config_offset);
  }
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("tensor name");
    const std::uint64_t rows = r.u64("tensor rows");
    const std::uint64_t cols = r.u64("tensor cols");
    if (cols != 0 && rows > r.remaining() / 8 / cols) throw ParseError("truncated payload for " + name, r.offset());
    MatrixXr t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = r.f64("tensor payload");
    out.tensors.emplace(std::move(name), std::move(t));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last tensor", r.offset());
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  io::write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(io::read_file(path)); }

TensorMap<double> tensors_with_prefix(const TensorMap<double>& tensors, const std::string& prefix) {
  TensorMap<double> out;
  for (const auto& [name, t] : tensors) {
    if (name.starts_with(prefix)) out.emplace(name.substr(prefix.size()), t);
  }
  return out;
}

}  // namespace vlm
