#pragma once

#include <cstddef>
#include <map>
#include <string>

namespace vlm {

enum class ProjectorActivation { gelu, identity };

// Vocabulary ids reserved for structural tokens. Regular words start at
// `first_regular_id`.
struct SpecialTokens {
  int pad = 0;
  int cls = 1;
  int sep = 2;
  int mask = 3;
  int dummy_text = 4;
  int first_regular_id = 5;

  bool operator==(const SpecialTokens&) const = default;
};

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 512;
  std::size_t d_video_feat = 16;
  std::size_t max_len = 32;
  std::size_t max_video_tokens = 8;
  SpecialTokens tokens;
  ProjectorActivation projector_activation = ProjectorActivation::gelu;
  double layer_norm_eps = 1e-12;
  double init_std = 0.02;

  // CPU-sized preset used by tests and the default CLI runs.
  static ModelConfig desk();
  // BERT-base sized layout with 512-wide video features, 96 positions and
  // 32 video tokens.
  static ModelConfig paper();

  std::size_t head_dim() const { return d_model / n_heads; }
  // [CLS], [SEP], [SEP]
  static constexpr std::size_t kStructuralTokens = 3;

  // Throws ConfigError naming the offending field.
  void validate() const;

  // Flat key/value form used in checkpoint headers.
  std::map<std::string, std::string> to_fields() const;
  static ModelConfig from_fields(const std::map<std::string, std::string>& fields);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace vlm
