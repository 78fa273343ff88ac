#include "vlm/tasks/segmentation.hpp"

#include "vlm/errors.hpp"
#include "vlm/objectives/losses.hpp"
#include "vlm/tasks/metrics.hpp"

#include <random>
#include <string>

namespace vlm {

std::vector<Window> window_offsets(std::size_t frames, std::size_t window, std::size_t step) {
  if (frames == 0) throw ContractViolation("windows: video has no frames");
  if (window == 0 || step == 0) throw ConfigError("window and step must be positive");
  std::vector<Window> out;
  for (std::size_t o = 0;; o += step) {
    out.push_back({o, std::min(o + window, frames)});
    if (o + window >= frames) break;
  }
  return out;
}

SegmentationOutput average_window_logits(std::size_t frames, std::span<const Window> windows,
                                         std::span<const MatrixXr> window_logits) {
  if (windows.size() != window_logits.size()) throw ShapeError("one logit block per window required");
  if (windows.empty()) throw ContractViolation("no windows");
  const Eigen::Index labels = window_logits.front().cols();
  SegmentationOutput out;
  out.logits = MatrixXr::Zero(static_cast<Eigen::Index>(frames), labels);
  out.coverage.assign(frames, 0);
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const Window& w = windows[k];
    if (w.end > frames || w.begin >= w.end) throw ContractViolation("window outside the video");
    if (window_logits[k].rows() != static_cast<Eigen::Index>(w.end - w.begin) || window_logits[k].cols() != labels) {
      throw ShapeError("window logits do not match the window");
    }
    out.logits.middleRows(static_cast<Eigen::Index>(w.begin), window_logits[k].rows()) += window_logits[k];
    for (std::size_t f = w.begin; f < w.end; ++f) ++out.coverage[f];
  }
  for (std::size_t f = 0; f < frames; ++f) {
    if (out.coverage[f] == 0) throw ContractViolation("frame " + std::to_string(f) + " is not covered by any window");
    out.logits.row(static_cast<Eigen::Index>(f)) /= static_cast<double>(out.coverage[f]);
    const auto row = out.logits.row(static_cast<Eigen::Index>(f));
    std::vector<double> values(row.data(), row.data() + row.size());
    out.labels.push_back(static_cast<int>(argmax(values)));
  }
  return out;
}

void add_segmentation_head(ModelParams<double>& params, const ModelConfig& config, std::size_t n_labels,
                           std::uint64_t seed) {
  if (n_labels < 2) throw ConfigError("segmentation needs at least 2 labels (background + one action)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, config.init_std);
  MatrixXr w(static_cast<Eigen::Index>(config.d_model), static_cast<Eigen::Index>(n_labels));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  params[names::seg_w] = w;
  params[names::seg_b] = MatrixXr::Zero(1, static_cast<Eigen::Index>(n_labels));
}

std::size_t segmentation_labels(const ModelParams<double>& params, const ModelConfig& config) {
  auto w = params.find(names::seg_w);
  auto b = params.find(names::seg_b);
  if (w == params.end() || b == params.end()) throw ConfigError("checkpoint has no segmentation head");
  if (w->second.rows() != static_cast<Eigen::Index>(config.d_model) || b->second.rows() != 1 ||
      b->second.cols() != w->second.cols()) {
    throw ConfigError("segmentation head does not match the model width");
  }
  return static_cast<std::size_t>(w->second.cols());
}

template <typename S>
Var<S> segmentation_window_logits(const BoundModel<S>& model, const MatrixXr& features, std::span<const Window> windows) {
  std::vector<TaskInput> inputs;
  for (const Window& w : windows) {
    inputs.push_back({features.middleRows(static_cast<Eigen::Index>(w.begin), static_cast<Eigen::Index>(w.end - w.begin)), {}});
  }
  auto enc = encode_inputs(model, std::span<const TaskInput>(inputs), MaskGeometry::isolated);
  std::vector<Eigen::Index> rows;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    auto r = video_block_rows(std::span<const SequenceLayout>(enc.layouts), k);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  Var<S> frames = gather_rows(enc.hidden, std::span<const Eigen::Index>(rows));
  return add_row(matmul(frames, model.param(names::seg_w)), model.param(names::seg_b));
}

template <typename S>
Var<S> segmentation_loss(const BoundModel<S>& model, const MatrixXr& features, std::span<const int> frame_labels,
                         std::span<const Window> windows) {
  if (static_cast<Eigen::Index>(frame_labels.size()) != features.rows()) throw ShapeError("one label per frame required");
  Var<S> logits = segmentation_window_logits(model, features, windows);
  std::vector<Eigen::Index> targets;
  for (const Window& w : windows) {
    for (std::size_t f = w.begin; f < w.end; ++f) {
      const int label = frame_labels[f];
      if (label < 0 || label >= logits.cols()) throw ContractViolation("frame label outside the head");
      targets.push_back(label);
    }
  }
  return softmax_cross_entropy(logits, std::span<const Eigen::Index>(targets));
}

SegmentationOutput segment_video(const MatrixXr& features, const ModelParams<double>& params,
                                 const ModelConfig& config, std::size_t window, std::size_t step) {
  if (features.rows() == 0) throw ContractViolation("segment_video: video has no frames");
  if (window > config.max_video_tokens) {
    throw ConfigError("window " + std::to_string(window) + " exceeds max_video_tokens " +
                      std::to_string(config.max_video_tokens));
  }
  segmentation_labels(params, config);
  const auto windows = window_offsets(static_cast<std::size_t>(features.rows()), window, step);
  Tape<double> tape;
  BoundModel<double> model(config, params, tape);
  const MatrixXr all = segmentation_window_logits(model, features, std::span<const Window>(windows)).value();
  std::vector<MatrixXr> blocks;
  Eigen::Index at = 0;
  for (const Window& w : windows) {
    const auto n = static_cast<Eigen::Index>(w.end - w.begin);
    blocks.push_back(all.middleRows(at, n));
    at += n;
  }
  return average_window_logits(static_cast<std::size_t>(features.rows()), windows, blocks);
}

double frame_accuracy(std::span<const int> predicted, std::span<const int> reference) {
  if (predicted.size() != reference.size()) throw ShapeError("frame_accuracy: length mismatch");
  if (predicted.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == reference[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

template Var<double> segmentation_window_logits(const BoundModel<double>&, const MatrixXr&, std::span<const Window>);
template Var<float> segmentation_window_logits(const BoundModel<float>&, const MatrixXr&, std::span<const Window>);
template Var<double> segmentation_loss(const BoundModel<double>&, const MatrixXr&, std::span<const int>,
                                       std::span<const Window>);
template Var<float> segmentation_loss(const BoundModel<float>&, const MatrixXr&, std::span<const int>,
                                      std::span<const Window>);

}  // namespace vlm
