#pragma once

#include "vlm/data/corpus.hpp"

#include <random>
#include <string>
#include <vector>

namespace vlm {

// A text span and the frames its timestamps cover.
struct ClipPair {
  std::string video_id;
  std::size_t video_index = 0;
  std::vector<int> text;
  std::size_t frame_begin = 0;  // [frame_begin, frame_end) seconds
  std::size_t frame_end = 0;
  MatrixXr frames;              // rows frame_begin..frame_end-1 of the video
};

struct ClipSamplingConfig {
  std::size_t clips_per_video = 4;
  std::size_t min_text_len = 4;
  std::size_t max_text_len = 12;
  // Upper bound on the covered video span; longer candidates are redrawn.
  std::size_t max_frames = 8;
  std::size_t max_attempts = 64;

  void validate() const;
};

// Text length is uniform over [min_text_len, min(max_text_len, tokens)];
// start positions are drawn independently, so clips may overlap. A video with
// fewer than min_text_len tokens yields no clips (a warning goes to stderr).
std::vector<ClipPair> sample_clips(const SyntheticVideo& video, std::size_t video_index, std::mt19937_64& rng,
                                   const ClipSamplingConfig& config);

// sample_clips over every video in order with one generator.
std::vector<ClipPair> sample_clip_pairs(const std::vector<SyntheticVideo>& videos, std::mt19937_64& rng,
                                        const ClipSamplingConfig& config);

}  // namespace vlm
