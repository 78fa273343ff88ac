#pragma once

#include "vlm/model/config.hpp"
#include "vlm/numerics/matrix.hpp"

#include <cstdint>
#include <string>

namespace vlm {

template <typename Scalar>
using ModelParams = TensorMap<Scalar>;

// Parameter naming. Linear layers use y = x W + b with W stored (in x out).
namespace names {
inline constexpr const char* word_embeddings = "embeddings.word";
inline constexpr const char* position_embeddings = "embeddings.position";
inline constexpr const char* segment_embeddings = "embeddings.segment";
inline constexpr const char* projector_fc1_w = "video_proj.fc1.weight";
inline constexpr const char* projector_fc1_b = "video_proj.fc1.bias";
inline constexpr const char* projector_fc2_w = "video_proj.fc2.weight";
inline constexpr const char* projector_fc2_b = "video_proj.fc2.bias";
// Shared prediction head for video and text tokens.
inline constexpr const char* head_w = "head.weight";
inline constexpr const char* head_b = "head.bias";
// Per-word bias on tied vocabulary logits (MLM and caption decoding).
inline constexpr const char* lm_bias = "lm.output_bias";

std::string layer(std::size_t index, const char* leaf);
}  // namespace names

// Random initialization: N(0, init_std) weights, zero biases, unit LayerNorm gains.
ModelParams<double> init_params(const ModelConfig& config, std::uint64_t seed);

// Throws ShapeError if any expected tensor is missing or mis-shaped.
template <typename Scalar>
void check_params(const ModelParams<Scalar>& params, const ModelConfig& config);

}  // namespace vlm
