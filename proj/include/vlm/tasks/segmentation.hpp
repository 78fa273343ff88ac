#pragma once

#include "vlm/data/corpus.hpp"
#include "vlm/tasks/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace vlm {

struct Window {
  std::size_t begin = 0;  // [begin, end) frames
  std::size_t end = 0;
};

// Offsets 0, step, 2*step, ...; each window is clamped to the last frame and
// the sweep stops once a window reaches it.
std::vector<Window> window_offsets(std::size_t frames, std::size_t window, std::size_t step);

struct SegmentationOutput {
  MatrixXr logits;                  // frames x n_labels, mean over covering windows
  std::vector<std::size_t> coverage;
  std::vector<int> labels;          // per-frame argmax, lowest index on ties
};

// Arithmetic mean of the per-window logit rows at every frame.
SegmentationOutput average_window_logits(std::size_t frames, std::span<const Window> windows,
                                         std::span<const MatrixXr> window_logits);

namespace names {
inline constexpr const char* seg_w = "seg.weight";
inline constexpr const char* seg_b = "seg.bias";
}  // namespace names

// Adds a d_model x n_labels linear head (N(0, init_std) weights, zero bias).
void add_segmentation_head(ModelParams<double>& params, const ModelConfig& config, std::size_t n_labels,
                           std::uint64_t seed);
std::size_t segmentation_labels(const ModelParams<double>& params, const ModelConfig& config);

// Per-frame label logits for each window (video + DUMMY_TEXT, isolated
// mask), one forward for the batch. Row block k belongs to windows[k].
template <typename S>
Var<S> segmentation_window_logits(const BoundModel<S>& model, const MatrixXr& features, std::span<const Window> windows);

template <typename S>
Var<S> segmentation_loss(const BoundModel<S>& model, const MatrixXr& features, std::span<const int> frame_labels,
                         std::span<const Window> windows);

SegmentationOutput segment_video(const MatrixXr& features, const ModelParams<double>& params,
                                 const ModelConfig& config, std::size_t window = 32, std::size_t step = 16);

// Fraction of frames whose predicted label equals the reference.
double frame_accuracy(std::span<const int> predicted, std::span<const int> reference);

}  // namespace vlm
