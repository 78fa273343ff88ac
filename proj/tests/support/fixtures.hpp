#pragma once

#include "vlm/data/batch.hpp"
#include "vlm/data/clips.hpp"
#include "vlm/data/corpus.hpp"
#include "vlm/model/config.hpp"

#include <random>
#include <vector>

namespace vlm::testing {

// Desk preset shrunk to one layer of width 16.
inline ModelConfig tiny_config() {
  ModelConfig c = ModelConfig::desk();
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 4;
  c.d_ff = 64;
  return c;
}

inline CorpusConfig corpus_for(const ModelConfig& model) {
  CorpusConfig c;
  c.d_video_feat = model.d_video_feat;
  c.vocab_size = model.vocab_size;
  c.first_regular_id = model.tokens.first_regular_id;
  return c;
}

inline std::vector<ClipPair> sample_pairs(const std::vector<SyntheticVideo>& videos, std::size_t per_video,
                                          std::uint64_t seed, ClipSamplingConfig cfg = {}) {
  cfg.clips_per_video = per_video;
  std::mt19937_64 rng(seed);
  return sample_clip_pairs(videos, rng, cfg);
}

}  // namespace vlm::testing
