#include "vlm/data/batch.hpp"

#include "vlm/errors.hpp"

#include <algorithm>
#include <numeric>

namespace vlm {

PretrainBatch make_batch(std::span<const ClipPair> clips, const ModelConfig& model, const MaskingConfig& masking,
                         std::mt19937_64& rng) {
  if (clips.empty()) throw ContractViolation("make_batch: no clips");
  PretrainBatch batch;
  const auto len = static_cast<Eigen::Index>(model.max_len);
  Eigen::Index total_video = 0;
  for (const auto& c : clips) total_video += c.frames.rows();
  batch.video_features.resize(total_video, static_cast<Eigen::Index>(model.d_video_feat));

  Eigen::Index stacked = 0;
  for (std::size_t b = 0; b < clips.size(); ++b) {
    const ClipPair& clip = clips[b];
    if (clip.frames.cols() != static_cast<Eigen::Index>(model.d_video_feat)) {
      throw ConfigError("clip " + std::to_string(b) + " of video " + clip.video_id + " has the wrong feature width");
    }
    SequenceLayout layout;
    try {
      layout = assemble_layout(static_cast<std::size_t>(clip.frames.rows()), clip.text, model);
    } catch (const ContractViolation& e) {
      throw ContractViolation("clip " + std::to_string(b) + " of video " + clip.video_id + ": " + e.what());
    }
    MaskPlan plan = sample_mask_plan(layout, rng, masking, model);
    MaskedLayout masked = apply_mask_plan(layout, plan, model);
    batch.scheme_counts[static_cast<std::size_t>(plan.scheme)] += 1;

    const Eigen::Index base = static_cast<Eigen::Index>(b) * len;
    batch.video_features.middleRows(stacked, clip.frames.rows()) = clip.frames;
    for (std::size_t v = 0; v < masked.video_keep.size(); ++v) {
      const Eigen::Index row = stacked + static_cast<Eigen::Index>(v);
      batch.video_keep.push_back(masked.video_keep[v]);
      if (masked.video_keep[v] != 0.0) batch.negative_video.push_back(row);
    }
    for (std::size_t v : masked.predict_video) {
      batch.predict_video.push_back(stacked + static_cast<Eigen::Index>(v));
      batch.predict_video_flat.push_back(base + static_cast<Eigen::Index>(layout.video_begin() + v));
    }
    for (std::size_t k = 0; k < masked.predict_text.size(); ++k) {
      batch.predict_text_flat.push_back(base + static_cast<Eigen::Index>(masked.predict_text[k]));
      batch.text_targets.push_back(masked.text_targets[k]);
    }
    stacked += clip.frames.rows();
    batch.layouts.push_back(std::move(masked.layout));
    batch.plans.push_back(std::move(plan));
  }
  return batch;
}

std::vector<std::vector<ClipPair>> plan_epoch(const std::vector<SyntheticVideo>& videos, std::mt19937_64& rng,
                                              const BatchingConfig& config) {
  if (config.videos_per_batch == 0) throw ConfigError("videos_per_batch must be positive");
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<ClipPair>> batches;
  for (std::size_t at = 0; at < order.size(); at += config.videos_per_batch) {
    std::vector<ClipPair> batch;
    const std::size_t end = std::min(order.size(), at + config.videos_per_batch);
    for (std::size_t k = at; k < end; ++k) {
      auto clips = sample_clips(videos[order[k]], order[k], rng, config.clips);
      std::move(clips.begin(), clips.end(), std::back_inserter(batch));
    }
    if (!batch.empty()) batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace vlm
