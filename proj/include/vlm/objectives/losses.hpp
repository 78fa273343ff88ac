#pragma once

#include "vlm/numerics/ops.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace vlm {

enum class CandidateSource { video_token, vocab_word };

struct CandidateSet {
  MatrixXr embeddings;  // one candidate per row
  std::size_t positive = 0;
  std::vector<CandidateSource> sources;
};

// log( exp(x_pos . e) / sum_j exp(x_j . e) ), max-subtracted.
double nce_log_prob(const VectorXr& prediction, const CandidateSet& candidates);

template <typename S>
struct LossOutput {
  Var<S> loss;                  // -mean of positive log-probabilities (0 when count == 0)
  std::vector<S> log_probs;     // one per predict position
  std::size_t count = 0;
  std::size_t top1_hits = 0;    // positive scored strictly best (ties go to the lower index)
};

// Masked frame loss. Row i of `predictions` is scored against its own
// target row plus every row of `negatives` (the batch's unmasked video tokens).
template <typename S>
LossOutput<S> mfm_loss(const Var<S>& predictions, const Var<S>& targets, const Var<S>& negatives);

// BERT masked-language loss with tied logits predictions * word_table^T + bias.
template <typename S>
LossOutput<S> mlm_loss(const Var<S>& predictions, std::span<const int> targets, const Var<S>& word_table,
                       const Var<S>& output_bias);

// Unified masked token loss. Every predict position, video or text, is
// scored against one pool made of the batch's unmasked video tokens and the
// whole word table. For a text target the target word's own row is the
// positive, so the remaining words are exactly D without s. No bias term.
template <typename S>
LossOutput<S> masked_token_loss(const Var<S>& video_predictions, const Var<S>& video_targets,
                                const Var<S>& text_predictions, std::span<const int> text_targets,
                                const Var<S>& negatives, const Var<S>& word_table);

// Plain sum of the two baseline losses.
template <typename S>
Var<S> loss_mfm_mlm(const LossOutput<S>& mfm, const LossOutput<S>& mlm);

// Symmetric in-batch InfoNCE over the B x B dot-product matrix, temperature
// 1: the mean of the text-to-video and video-to-text cross-entropies.
template <typename S>
Var<S> retrieval_contrastive_loss(const Var<S>& video_pooled, const Var<S>& text_pooled, bool normalize = false);

// Cross-entropy of the row-wise softmax of `logits` at `targets`, averaged.
template <typename S>
Var<S> softmax_cross_entropy(const Var<S>& logits, std::span<const Eigen::Index> targets);

}  // namespace vlm
