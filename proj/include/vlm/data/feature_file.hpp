#pragma once

#include "vlm/data/corpus.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vlm {

// Binary container for precomputed per-second features, little-endian:
//
//   magic "VLMF", u32 version (1), u32 d_video_feat, u32 video count
//   per video:
//     u32 id length, id bytes
//     u32 seconds T, T * d_video_feat f32 features (row-major)
//     u32 token count N, N u32 token ids, N f32 timestamps
std::vector<char> serialize_features(const std::vector<SyntheticVideo>& videos, std::size_t d_video_feat);
// Throws ParseError (with byte offset) on malformed input and ConfigError
// when `expected_width` is given and differs from the header.
std::vector<SyntheticVideo> parse_features(const std::vector<char>& bytes,
                                           std::optional<std::size_t> expected_width = std::nullopt);

void write_feature_file(const std::string& path, const std::vector<SyntheticVideo>& videos, std::size_t d_video_feat);
std::vector<SyntheticVideo> read_feature_file(const std::string& path,
                                              std::optional<std::size_t> expected_width = std::nullopt);

// Line-delimited "<video id>\t<split>" records.
using Manifest = std::map<std::string, std::string>;

void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries);
Manifest read_manifest(const std::string& path);

}  // namespace vlm
