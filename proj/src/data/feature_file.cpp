#include "vlm/data/feature_file.hpp"

#include "vlm/errors.hpp"
#include "vlm/io/binary.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace vlm {
namespace {
constexpr std::string_view kMagic = "VLMF";
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::vector<char> serialize_features(const std::vector<SyntheticVideo>& videos, std::size_t d_video_feat) {
  io::ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(d_video_feat));
  w.u32(static_cast<std::uint32_t>(videos.size()));
  for (const auto& v : videos) {
    if (v.features.cols() != static_cast<Eigen::Index>(d_video_feat)) {
      throw ShapeError("video " + v.id + " does not have width " + std::to_string(d_video_feat));
    }
    if (v.tokens.size() != v.timestamps.size()) throw ShapeError("video " + v.id + ": one timestamp per token required");
    w.str(v.id);
    w.u32(static_cast<std::uint32_t>(v.features.rows()));
    for (Eigen::Index i = 0; i < v.features.size(); ++i) w.f32(static_cast<float>(v.features.data()[i]));
    w.u32(static_cast<std::uint32_t>(v.tokens.size()));
    for (int t : v.tokens) w.u32(static_cast<std::uint32_t>(t));
    for (double s : v.timestamps) w.f32(static_cast<float>(s));
  }
  return w.bytes();
}

std::vector<SyntheticVideo> parse_features(const std::vector<char>& bytes, std::optional<std::size_t> expected_width) {
  io::ByteReader r(bytes);
  if (r.raw(kMagic.size(), "magic") != kMagic) throw ParseError("not a feature file (bad magic)", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) throw ParseError("unsupported feature file version " + std::to_string(version), 4);
  const std::uint32_t width = r.u32("feature width");
  if (width == 0) throw ParseError("feature width is zero", 8);
  if (expected_width && *expected_width != width) {
    throw ConfigError("feature file width " + std::to_string(width) + " does not match model d_video_feat " +
                      std::to_string(*expected_width));
  }
  const std::uint32_t count = r.u32("video count");
  std::vector<SyntheticVideo> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    SyntheticVideo v;
    v.id = r.str("video id");
    const std::uint32_t seconds = r.u32("frame count");
    r.require(static_cast<std::size_t>(seconds) * width * 4, "feature payload");
    v.features.resize(seconds, width);
    for (Eigen::Index k = 0; k < v.features.size(); ++k) v.features.data()[k] = r.f32("feature payload");
    const std::uint32_t tokens = r.u32("token count");
    r.require(static_cast<std::size_t>(tokens) * 8, "token payload");
    v.tokens.resize(tokens);
    for (auto& t : v.tokens) {
      const std::uint32_t id = r.u32("token id");
      if (id > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
        throw ParseError("token id out of range", r.offset() - 4);
      }
      t = static_cast<int>(id);
    }
    v.timestamps.resize(tokens);
    double previous = -std::numeric_limits<double>::infinity();
    for (auto& s : v.timestamps) {
      s = r.f32("timestamp");
      if (!(s >= previous)) throw ParseError("timestamps must be non-decreasing", r.offset() - 4);
      previous = s;
    }
    out.push_back(std::move(v));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last video", r.offset());
  return out;
}

void write_feature_file(const std::string& path, const std::vector<SyntheticVideo>& videos, std::size_t d_video_feat) {
  io::write_file_atomic(path, serialize_features(videos, d_video_feat));
}

std::vector<SyntheticVideo> read_feature_file(const std::string& path, std::optional<std::size_t> expected_width) {
  return parse_features(io::read_file(path), expected_width);
}

void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const auto& [id, split] : entries) out << id << '\t' << split << '\n';
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  Manifest out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw IoError("manifest " + path + " line " + std::to_string(line_no) + ": expected '<id>\\t<split>'");
    }
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

}  // namespace vlm
