#include "vlm/model/sequence.hpp"

#include "vlm/errors.hpp"

#include <string>

namespace vlm {

SequenceLayout assemble_layout(std::size_t video_count, std::span<const int> text_ids, const ModelConfig& config,
                               std::size_t padded_length) {
  const std::size_t text_count = text_ids.size();
  if (video_count == 0 || text_count == 0) {
    throw ContractViolation("assemble: both blocks must be non-empty (substitute a dummy token)");
  }
  if (video_count > config.max_video_tokens) {
    throw ContractViolation("assemble: " + std::to_string(video_count) + " video tokens exceed max_video_tokens " +
                            std::to_string(config.max_video_tokens));
  }
  const std::size_t length = video_count + text_count + ModelConfig::kStructuralTokens;
  const std::size_t target = padded_length == 0 ? config.max_len : padded_length;
  if (length > config.max_len || length > target) {
    throw ContractViolation("assemble: " + std::to_string(video_count) + " video + " + std::to_string(text_count) +
                            " text + 3 special tokens = " + std::to_string(length) + " exceeds max length " +
                            std::to_string(std::min(target, config.max_len)));
  }
  for (int id : text_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw ContractViolation("assemble: text id " + std::to_string(id) + " outside vocabulary");
    }
  }

  SequenceLayout s;
  s.video_count = video_count;
  s.text_count = text_count;
  s.kinds.reserve(target);
  auto push = [&](TokenKind kind, int id, int segment, int position) {
    s.kinds.push_back(kind);
    s.token_ids.push_back(id);
    s.segment_ids.push_back(segment);
    s.position_ids.push_back(position);
  };
  push(TokenKind::cls, config.tokens.cls, 0, 0);
  for (std::size_t i = 0; i < video_count; ++i) push(TokenKind::video, -1, 0, static_cast<int>(i + 1));
  push(TokenKind::sep, config.tokens.sep, 0, static_cast<int>(video_count + 1));
  for (std::size_t i = 0; i < text_count; ++i) push(TokenKind::text, text_ids[i], 1, static_cast<int>(i));
  push(TokenKind::sep, config.tokens.sep, 1, static_cast<int>(text_count));
  while (s.kinds.size() < target) push(TokenKind::pad, config.tokens.pad, 1, 0);
  return s;
}

MultimodalSequence assemble_sequence(const MatrixXr& video_tokens, std::span<const int> text_ids,
                                     const ModelConfig& config, std::size_t padded_length) {
  if (video_tokens.cols() != static_cast<Eigen::Index>(config.d_model)) {
    throw ShapeError("assemble: video tokens must be d_model wide");
  }
  return MultimodalSequence{
      assemble_layout(static_cast<std::size_t>(video_tokens.rows()), text_ids, config, padded_length), video_tokens};
}

}  // namespace vlm
