#pragma once

#include "vlm/model/config.hpp"
#include "vlm/numerics/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vlm {

enum class TokenKind : std::uint8_t { cls, video, sep, text, pad };

// Token layout [CLS] video [SEP] text [SEP] PAD...
//
// Segment ids: 0 for [CLS], the video block and the first [SEP]; 1 for the
// text block and the second [SEP]. Position ids count from 0 within each
// segment, so a block's encoding never depends on the other block's length.
struct SequenceLayout {
  std::vector<TokenKind> kinds;
  std::vector<int> token_ids;  // -1 at video positions
  std::vector<int> segment_ids;
  std::vector<int> position_ids;
  std::size_t video_count = 0;
  std::size_t text_count = 0;

  std::size_t padded_length() const { return kinds.size(); }
  std::size_t length() const { return video_count + text_count + ModelConfig::kStructuralTokens; }
  std::size_t video_begin() const { return 1; }
  std::size_t first_sep() const { return 1 + video_count; }
  std::size_t text_begin() const { return 2 + video_count; }
  std::size_t second_sep() const { return 2 + video_count + text_count; }
};

// Layout for `video_count` video tokens followed by `text_ids`, padded to
// `padded_length` (0 means config.max_len). Both blocks must be non-empty;
// callers substitute DUMMY_TEXT or a zero video token for an absent modality.
SequenceLayout assemble_layout(std::size_t video_count, std::span<const int> text_ids, const ModelConfig& config,
                               std::size_t padded_length = 0);

struct MultimodalSequence {
  SequenceLayout layout;
  MatrixXr video_tokens;  // video_count x d_model, after projection
};

MultimodalSequence assemble_sequence(const MatrixXr& video_tokens, std::span<const int> text_ids,
                                     const ModelConfig& config, std::size_t padded_length = 0);

}  // namespace vlm
