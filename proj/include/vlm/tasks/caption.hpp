#pragma once

#include "vlm/data/clips.hpp"
#include "vlm/tasks/common.hpp"

#include <span>
#include <vector>

namespace vlm {

// The text block fed to the caption model: [CLS] as the start symbol
// followed by the caption, so position k predicts token k+1 and the last
// caption token predicts [SEP].
std::vector<int> caption_input(std::span<const int> caption, const ModelConfig& config);

// Tied-vocabulary logits (e D^T + bias) at every text-block position of
// each example under the caption mask; rows are stacked example by example.
template <typename S>
Var<S> caption_logits(const BoundModel<S>& model, std::span<const TaskInput> inputs);

// Shifted-target cross-entropy over text positions only.
template <typename S>
Var<S> caption_loss(const BoundModel<S>& model, std::span<const ClipPair> pairs);

// (n+1) x vocab logits for a completed caption of n tokens in one forward.
MatrixXr caption_full_logits(const MatrixXr& features, std::span<const int> caption,
                             const ModelParams<double>& params, const ModelConfig& config);

// Next-token logits given only the tokens generated so far.
RowVectorXr caption_step_logits(const MatrixXr& features, std::span<const int> prefix,
                                const ModelParams<double>& params, const ModelConfig& config);

// Greedy argmax (lowest id on ties) until [SEP] or max_tokens tokens; the
// returned ids exclude [SEP].
std::vector<int> greedy_decode(const MatrixXr& features, const ModelParams<double>& params, const ModelConfig& config,
                               std::size_t max_tokens);

}  // namespace vlm
