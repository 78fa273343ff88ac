#pragma once

#include "vlm/model/config.hpp"
#include "vlm/model/sequence.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace vlm {

enum class MaskScheme : std::uint8_t { mfm_mlm, mmm_video, mmm_text };

enum class MaskAction : std::uint8_t {
  keep,
  mask_zero,     // video token replaced by the all-zero vector
  mask_token,    // text token replaced by [MASK]
  random_token,  // text token replaced by a random regular word
  keep_predict,  // text token left in place but still predicted
};

struct MaskingConfig {
  double p_mmm = 0.5;  // split evenly between whole-video and whole-text masking
  double p_token = 0.15;
  double mask_token_fraction = 0.8;
  double random_token_fraction = 0.1;

  void validate() const;
};

struct MaskPlan {
  MaskScheme scheme = MaskScheme::mfm_mlm;
  std::vector<MaskAction> actions;     // one per padded position
  std::vector<int> replacement_ids;    // word id for random_token positions, -1 elsewhere
  std::vector<std::size_t> predict_positions;  // ascending
};

// One uniform draw picks the scheme: [0, p/2) whole video, [p/2, p) whole
// text, otherwise per-token MFM/MLM. Under MFM/MLM each modality's masked
// set is kept a strict subset of that modality.
MaskPlan sample_mask_plan(const SequenceLayout& layout, std::mt19937_64& rng, const MaskingConfig& masking,
                          const ModelConfig& model);

// Layout-level result of applying a plan: substituted token ids plus the
// bookkeeping needed to build losses.
struct MaskedLayout {
  SequenceLayout layout;
  std::vector<double> video_keep;               // 1 keep, 0 zeroed; one per video token
  std::vector<std::size_t> predict_video;       // indices into the video block
  std::vector<std::size_t> predict_text;        // sequence positions
  std::vector<int> text_targets;                // original ids at predict_text
};

MaskedLayout apply_mask_plan(const SequenceLayout& layout, const MaskPlan& plan, const ModelConfig& model);

struct MaskTargets {
  std::vector<std::size_t> positions;  // every predict position, ascending
  MatrixXr video;                      // original video tokens at video predict positions, in order
  std::vector<int> text_ids;           // original ids at text predict positions, in order
};

struct MaskedSequence {
  MultimodalSequence sequence;
  MaskTargets targets;
};

MaskedSequence apply_mask_plan(const MultimodalSequence& sequence, const MaskPlan& plan, const ModelConfig& model);

const char* scheme_name(MaskScheme scheme);

}  // namespace vlm
