#pragma once

#include "vlm/tasks/segmentation.hpp"

#include <span>
#include <vector>

namespace vlm {

// Per-window frame-by-step dot products. The video windows (with a dummy
// text token) and each step text (with a dummy video token) are separate
// examples of one isolated-mask batch; every step text is mean pooled.
// Rows follow the windows in order, columns the steps.
template <typename S>
Var<S> localization_window_logits(const BoundModel<S>& model, const MatrixXr& features,
                                  std::span<const Window> windows, const std::vector<std::vector<int>>& step_texts);

// Cross-entropy over steps at every frame with label >= 0 (label -1 marks
// background and is skipped).
template <typename S>
Var<S> localization_loss(const BoundModel<S>& model, const MatrixXr& features, std::span<const int> frame_steps,
                         std::span<const Window> windows, const std::vector<std::vector<int>>& step_texts);

// frames x n_steps distribution: window dot products averaged over covering
// windows, then a softmax per frame.
MatrixXr localize_steps(const MatrixXr& features, const std::vector<std::vector<int>>& step_texts,
                        const ModelParams<double>& params, const ModelConfig& config, std::size_t window,
                        std::size_t step);

}  // namespace vlm
