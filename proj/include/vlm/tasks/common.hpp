#pragma once

#include "vlm/masking/attention_mask.hpp"
#include "vlm/model/encoder.hpp"

#include <span>
#include <utility>
#include <vector>

namespace vlm {

// One downstream example. An empty modality is replaced by its dummy: a
// single all-zero video token, or the single DUMMY_TEXT id.
struct TaskInput {
  MatrixXr features;      // frames x d_video_feat; 0 rows for no video
  std::vector<int> text;  // empty for no text
};

template <typename S>
struct EncodedInputs {
  Var<S> hidden;  // (batch * max_len) x d_model
  std::vector<SequenceLayout> layouts;
};

// Assembles every input (padded to max_len), projects features and encodes
// the whole batch in one forward under `geometry`.
template <typename S>
EncodedInputs<S> encode_inputs(const BoundModel<S>& model, std::span<const TaskInput> inputs, MaskGeometry geometry,
                               AttentionDump<S>* dump = nullptr);

// Mean of each example's video-block and text-block hidden states; with
// include_sep the block's trailing [SEP] joins the mean. Returns
// (video B x d, text B x d).
template <typename S>
std::pair<Var<S>, Var<S>> pool_blocks(const Var<S>& hidden, std::span<const SequenceLayout> layouts, bool include_sep);

// Packed rows of example b's video block.
std::vector<Eigen::Index> video_block_rows(std::span<const SequenceLayout> layouts, std::size_t example);

}  // namespace vlm
