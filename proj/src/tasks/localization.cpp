#include "vlm/tasks/localization.hpp"

#include "vlm/errors.hpp"
#include "vlm/objectives/losses.hpp"

namespace vlm {

template <typename S>
Var<S> localization_window_logits(const BoundModel<S>& model, const MatrixXr& features,
                                  std::span<const Window> windows, const std::vector<std::vector<int>>& step_texts) {
  if (step_texts.empty()) throw ContractViolation("localize: empty step list");
  std::vector<TaskInput> inputs;
  for (const Window& w : windows) {
    inputs.push_back({features.middleRows(static_cast<Eigen::Index>(w.begin), static_cast<Eigen::Index>(w.end - w.begin)), {}});
  }
  for (const auto& text : step_texts) {
    if (text.empty()) throw ContractViolation("localize: a step text is empty");
    inputs.push_back({MatrixXr(0, static_cast<Eigen::Index>(model.config().d_video_feat)), text});
  }
  auto enc = encode_inputs(model, std::span<const TaskInput>(inputs), MaskGeometry::isolated);
  std::span<const SequenceLayout> layouts(enc.layouts);
  std::vector<Eigen::Index> frame_rows;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    auto r = video_block_rows(layouts, k);
    frame_rows.insert(frame_rows.end(), r.begin(), r.end());
  }
  std::vector<Eigen::Index> text_examples;
  for (std::size_t k = 0; k < step_texts.size(); ++k) text_examples.push_back(static_cast<Eigen::Index>(windows.size() + k));
  Var<S> text_pooled = gather_rows(pool_blocks(enc.hidden, layouts, false).second,
                                   std::span<const Eigen::Index>(text_examples));
  Var<S> frames = gather_rows(enc.hidden, std::span<const Eigen::Index>(frame_rows));
  return matmul_transposed(frames, text_pooled);
}

template <typename S>
Var<S> localization_loss(const BoundModel<S>& model, const MatrixXr& features, std::span<const int> frame_steps,
                         std::span<const Window> windows, const std::vector<std::vector<int>>& step_texts) {
  if (static_cast<Eigen::Index>(frame_steps.size()) != features.rows()) throw ShapeError("one step label per frame required");
  Var<S> logits = localization_window_logits(model, features, windows, step_texts);
  std::vector<Eigen::Index> rows, targets;
  Eigen::Index at = 0;
  for (const Window& w : windows) {
    for (std::size_t f = w.begin; f < w.end; ++f, ++at) {
      const int label = frame_steps[f];
      if (label < 0) continue;
      if (static_cast<std::size_t>(label) >= step_texts.size()) throw ContractViolation("frame step label out of range");
      rows.push_back(at);
      targets.push_back(label);
    }
  }
  if (rows.empty()) return logits.tape().constant(Mat<S>::Zero(1, 1));
  return softmax_cross_entropy(gather_rows(logits, std::span<const Eigen::Index>(rows)),
                               std::span<const Eigen::Index>(targets));
}

MatrixXr localize_steps(const MatrixXr& features, const std::vector<std::vector<int>>& step_texts,
                        const ModelParams<double>& params, const ModelConfig& config, std::size_t window,
                        std::size_t step) {
  if (step_texts.empty()) throw ContractViolation("localize: empty step list");
  if (features.rows() == 0) throw ContractViolation("localize: video has no frames");
  if (window > config.max_video_tokens) throw ConfigError("localization window exceeds max_video_tokens");
  const auto windows = window_offsets(static_cast<std::size_t>(features.rows()), window, step);
  Tape<double> tape;
  BoundModel<double> model(config, params, tape);
  const MatrixXr all = localization_window_logits(model, features, std::span<const Window>(windows), step_texts).value();
  std::vector<MatrixXr> blocks;
  Eigen::Index at = 0;
  for (const Window& w : windows) {
    const auto n = static_cast<Eigen::Index>(w.end - w.begin);
    blocks.push_back(all.middleRows(at, n));
    at += n;
  }
  MatrixXr logits = average_window_logits(static_cast<std::size_t>(features.rows()), windows, blocks).logits;
  for (Eigen::Index f = 0; f < logits.rows(); ++f) {
    const double mx = logits.row(f).maxCoeff();
    logits.row(f) = (logits.row(f).array() - mx).exp();
    logits.row(f) /= logits.row(f).sum();
  }
  return logits;
}

template Var<double> localization_window_logits(const BoundModel<double>&, const MatrixXr&, std::span<const Window>,
                                                const std::vector<std::vector<int>>&);
template Var<float> localization_window_logits(const BoundModel<float>&, const MatrixXr&, std::span<const Window>,
                                               const std::vector<std::vector<int>>&);
template Var<double> localization_loss(const BoundModel<double>&, const MatrixXr&, std::span<const int>,
                                       std::span<const Window>, const std::vector<std::vector<int>>&);
template Var<float> localization_loss(const BoundModel<float>&, const MatrixXr&, std::span<const int>,
                                      std::span<const Window>, const std::vector<std::vector<int>>&);

}  // namespace vlm
