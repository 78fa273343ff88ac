#pragma once

#include "vlm/model/config.hpp"
#include "vlm/model/params.hpp"
#include "vlm/model/sequence.hpp"
#include "vlm/numerics/ops.hpp"

#include <span>
#include <vector>

namespace vlm {

// Attention probabilities captured during a forward pass, indexed
// [layer][example * n_heads + head].
template <typename Scalar>
using AttentionDump = std::vector<std::vector<Mat<Scalar>>>;

// Model parameters bound onto a tape for one forward/backward pass.
template <typename Scalar>
class BoundModel {
 public:
  BoundModel(const ModelConfig& config, const ModelParams<Scalar>& params, Tape<Scalar>& tape);

  const ModelConfig& config() const { return config_; }
  Tape<Scalar>& tape() const { return tape_; }
  Var<Scalar> param(std::string_view name) const { return tape_.param(name); }

 private:
  const ModelConfig& config_;
  Tape<Scalar>& tape_;
};

// Raw per-second features (frames x d_video_feat) -> video tokens
// (frames x d_model) through the one-hidden-layer projector.
template <typename Scalar>
Var<Scalar> project_video_features(const BoundModel<Scalar>& model, const Var<Scalar>& features);

// Input embeddings for a batch of layouts packed as (batch * L) rows.
// `video_tokens` stacks every example's video block in batch order and must
// already carry any masking (zeroed rows). Non-video rows look up
// layout.token_ids in the word table.
template <typename Scalar>
Var<Scalar> embed_sequences(const BoundModel<Scalar>& model, std::span<const SequenceLayout> layouts,
                            const Var<Scalar>& video_tokens);

// Post-LN transformer stack. `masks[b]` is the allow-matrix of example b.
// Throws ContractViolation if a non-PAD query row has no allowed key.
template <typename Scalar>
Var<Scalar> encode(const BoundModel<Scalar>& model, const Var<Scalar>& embeddings,
                   std::span<const SequenceLayout> layouts, std::span<const BoolMatrix> masks,
                   AttentionDump<Scalar>* dump = nullptr);

// e = h W + b with the single shared head.
template <typename Scalar>
Var<Scalar> predict_embeddings(const BoundModel<Scalar>& model, const Var<Scalar>& hidden);

// Tied vocabulary logits e D^T + bias.
template <typename Scalar>
Var<Scalar> vocabulary_logits(const BoundModel<Scalar>& model, const Var<Scalar>& predictions);

// Row index of every video token of every example in the packed batch.
std::vector<Eigen::Index> video_rows(std::span<const SequenceLayout> layouts);

// Tape-free conveniences over a single example.
template <typename Scalar>
Mat<Scalar> project_video_features(const Mat<Scalar>& features, const ModelParams<Scalar>& params,
                                   const ModelConfig& config);
template <typename Scalar>
Mat<Scalar> encode(const MultimodalSequence& sequence, const BoolMatrix& mask, const ModelParams<Scalar>& params,
                   const ModelConfig& config);
template <typename Scalar>
Mat<Scalar> predict_embeddings(const Mat<Scalar>& hidden, const ModelParams<Scalar>& params);

// Throws ContractViolation when a non-PAD row of `mask` allows no key.
void require_attendable(const SequenceLayout& layout, const BoolMatrix& mask);

}  // namespace vlm
