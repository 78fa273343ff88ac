#include "vlm/data/clips.hpp"

#include "vlm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace vlm {

void ClipSamplingConfig::validate() const {
  if (min_text_len == 0 || min_text_len > max_text_len) {
    throw ConfigError("clip text length range must satisfy 0 < min <= max");
  }
  if (max_frames == 0) throw ConfigError("clip max_frames must be positive");
  if (max_attempts == 0) throw ConfigError("clip max_attempts must be positive");
}

std::vector<ClipPair> sample_clips(const SyntheticVideo& video, std::size_t video_index, std::mt19937_64& rng,
                                   const ClipSamplingConfig& config) {
  config.validate();
  std::vector<ClipPair> out;
  const std::size_t n_tokens = video.tokens.size();
  if (n_tokens < config.min_text_len) {
    std::clog << "warning: video " << video.id << " has " << n_tokens << " tokens, fewer than the minimum clip length "
              << config.min_text_len << "; skipped\n";
    return out;
  }
  const auto seconds = static_cast<std::size_t>(video.features.rows());
  std::uniform_int_distribution<std::size_t> length_dist(config.min_text_len,
                                                         std::min(config.max_text_len, n_tokens));
  for (std::size_t c = 0; c < config.clips_per_video; ++c) {
    for (std::size_t attempt = 0; attempt < config.max_attempts; ++attempt) {
      const std::size_t len = length_dist(rng);
      std::uniform_int_distribution<std::size_t> start_dist(0, n_tokens - len);
      const std::size_t start = start_dist(rng);
      const auto first = static_cast<std::size_t>(std::floor(video.timestamps[start]));
      const auto last = static_cast<std::size_t>(std::floor(video.timestamps[start + len - 1]));
      const std::size_t begin = std::min(first, seconds - 1);
      const std::size_t end = std::min(last + 1, seconds);
      if (end - begin > config.max_frames) continue;
      ClipPair clip;
      clip.video_id = video.id;
      clip.video_index = video_index;
      clip.text.assign(video.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                       video.tokens.begin() + static_cast<std::ptrdiff_t>(start + len));
      clip.frame_begin = begin;
      clip.frame_end = end;
      clip.frames = video.features.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
      out.push_back(std::move(clip));
      break;
    }
  }
  if (out.size() < config.clips_per_video) {
    std::clog << "warning: video " << video.id << " produced " << out.size() << " of " << config.clips_per_video
              << " clips within max_frames " << config.max_frames << "\n";
  }
  return out;
}

std::vector<ClipPair> sample_clip_pairs(const std::vector<SyntheticVideo>& videos, std::mt19937_64& rng,
                                        const ClipSamplingConfig& config) {
  std::vector<ClipPair> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    auto clips = sample_clips(videos[i], i, rng, config);
    out.insert(out.end(), std::make_move_iterator(clips.begin()), std::make_move_iterator(clips.end()));
  }
  return out;
}

}  // namespace vlm
