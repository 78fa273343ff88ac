#pragma once

#include "vlm/data/clips.hpp"
#include "vlm/tasks/common.hpp"
#include "vlm/tasks/metrics.hpp"

#include <span>

namespace vlm {

enum class EncodeMode { joint, split };

struct PooledPair {
  RowVectorXr video;
  RowVectorXr text;
};

struct RetrievalOptions {
  bool pool_include_sep = false;
  bool normalize = false;  // L2-normalize pooled vectors before the dot product
};

// JOINT: one forward of [video, text] under the isolated mask. SPLIT: video
// with a dummy text token and text with a dummy video token, forwarded
// separately. Both pool each block's content tokens.
PooledPair retrieval_encode(const MatrixXr& features, std::span<const int> text, const ModelParams<double>& params,
                            const ModelConfig& config, EncodeMode mode, const RetrievalOptions& options = {});

// Pooled (video, text) of a batch of pairs in one JOINT forward, on the tape.
template <typename S>
std::pair<Var<S>, Var<S>> retrieval_pooled(const BoundModel<S>& model, std::span<const ClipPair> pairs,
                                           const RetrievalOptions& options);

template <typename S>
Var<S> retrieval_finetune_loss(const BoundModel<S>& model, std::span<const ClipPair> pairs,
                               const RetrievalOptions& options);

// similarity(i, j) = <text_i, video_j> from SPLIT encodings: text queries
// against video candidates, ground truth on the diagonal.
MatrixXr retrieval_similarity(std::span<const ClipPair> pairs, const ModelParams<double>& params,
                              const ModelConfig& config, const RetrievalOptions& options = {});

RecallMetrics evaluate_retrieval(std::span<const ClipPair> pairs, const ModelParams<double>& params,
                                 const ModelConfig& config, const RetrievalOptions& options = {});

}  // namespace vlm
