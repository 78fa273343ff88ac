#pragma once

#include "vlm/data/clips.hpp"
#include "vlm/masking/mask_plan.hpp"
#include "vlm/model/config.hpp"

#include <array>
#include <random>
#include <span>
#include <vector>

namespace vlm {

// A masked pretraining batch packed for one forward pass. Video tokens of
// all examples are stacked in batch order; "flat" rows index the packed
// (batch * max_len) hidden-state matrix.
struct PretrainBatch {
  std::vector<SequenceLayout> layouts;  // token ids already substituted
  std::vector<MaskPlan> plans;
  MatrixXr video_features;              // total video tokens x d_video_feat
  std::vector<double> video_keep;       // per stacked video token
  std::vector<Eigen::Index> predict_video;       // stacked video rows to recover
  std::vector<Eigen::Index> predict_video_flat;  // their flat rows
  std::vector<Eigen::Index> predict_text_flat;
  std::vector<int> text_targets;
  std::vector<Eigen::Index> negative_video;      // V': every unmasked stacked video row in the batch
  std::array<std::size_t, 3> scheme_counts{};    // indexed by MaskScheme

  std::size_t size() const { return layouts.size(); }
};

// Assembles, samples one mask plan per example and applies it. Throws
// ContractViolation naming the clip when a pair does not fit max_len.
PretrainBatch make_batch(std::span<const ClipPair> clips, const ModelConfig& model, const MaskingConfig& masking,
                         std::mt19937_64& rng);

struct BatchingConfig {
  std::size_t videos_per_batch = 4;
  ClipSamplingConfig clips;
};

// One epoch of clip batches: videos are shuffled, grouped videos_per_batch at
// a time (a trailing partial group is kept), and each group contributes
// clips_per_video freshly sampled clips per video.
std::vector<std::vector<ClipPair>> plan_epoch(const std::vector<SyntheticVideo>& videos, std::mt19937_64& rng,
                                              const BatchingConfig& config);

}  // namespace vlm
