#include "vlm/tasks/caption.hpp"

#include "vlm/errors.hpp"
#include "vlm/objectives/losses.hpp"
#include "vlm/tasks/metrics.hpp"

#include <string>

namespace vlm {

std::vector<int> caption_input(std::span<const int> caption, const ModelConfig& config) {
  std::vector<int> out{config.tokens.cls};
  out.insert(out.end(), caption.begin(), caption.end());
  return out;
}

template <typename S>
Var<S> caption_logits(const BoundModel<S>& model, std::span<const TaskInput> inputs) {
  for (const auto& in : inputs) {
    if (in.features.rows() == 0) throw ContractViolation("caption: example without video");
    if (in.text.empty()) throw ContractViolation("caption: empty text block");
  }
  auto enc = encode_inputs(model, inputs, MaskGeometry::caption_causal);
  std::vector<Eigen::Index> rows;
  Eigen::Index base = 0;
  for (const auto& l : enc.layouts) {
    for (std::size_t i = 0; i < l.text_count; ++i) rows.push_back(base + static_cast<Eigen::Index>(l.text_begin() + i));
    base += static_cast<Eigen::Index>(l.padded_length());
  }
  Var<S> hidden = gather_rows(enc.hidden, std::span<const Eigen::Index>(rows));
  return vocabulary_logits(model, predict_embeddings(model, hidden));
}

template <typename S>
Var<S> caption_loss(const BoundModel<S>& model, std::span<const ClipPair> pairs) {
  if (pairs.empty()) throw ContractViolation("caption_loss: no pairs");
  const ModelConfig& c = model.config();
  std::vector<TaskInput> inputs;
  std::vector<Eigen::Index> targets;
  for (const auto& p : pairs) {
    inputs.push_back({p.frames, caption_input(p.text, c)});
    targets.insert(targets.end(), p.text.begin(), p.text.end());
    targets.push_back(c.tokens.sep);
  }
  return softmax_cross_entropy(caption_logits(model, std::span<const TaskInput>(inputs)),
                               std::span<const Eigen::Index>(targets));
}

MatrixXr caption_full_logits(const MatrixXr& features, std::span<const int> caption,
                             const ModelParams<double>& params, const ModelConfig& config) {
  Tape<double> tape;
  BoundModel<double> model(config, params, tape);
  const std::vector<TaskInput> inputs{{features, caption_input(caption, config)}};
  return caption_logits(model, std::span<const TaskInput>(inputs)).value();
}

RowVectorXr caption_step_logits(const MatrixXr& features, std::span<const int> prefix,
                                const ModelParams<double>& params, const ModelConfig& config) {
  const MatrixXr all = caption_full_logits(features, prefix, params, config);
  return all.row(all.rows() - 1);
}

std::vector<int> greedy_decode(const MatrixXr& features, const ModelParams<double>& params, const ModelConfig& config,
                               std::size_t max_tokens) {
  if (max_tokens < 1) throw ContractViolation("greedy_decode: max length must be at least 1");
  const auto frames = static_cast<std::size_t>(features.rows());
  if (frames + max_tokens + 1 + ModelConfig::kStructuralTokens > config.max_len) {
    throw ConfigError("decode length " + std::to_string(max_tokens) + " with " + std::to_string(frames) +
                      " frames does not fit max_len " + std::to_string(config.max_len));
  }
  std::vector<int> out;
  while (out.size() < max_tokens) {
    const RowVectorXr logits = caption_step_logits(features, out, params, config);
    const std::vector<double> values(logits.data(), logits.data() + logits.size());
    const int next = static_cast<int>(argmax(values));
    if (next == config.tokens.sep) break;
    out.push_back(next);
  }
  return out;
}

template Var<double> caption_logits(const BoundModel<double>&, std::span<const TaskInput>);
template Var<float> caption_logits(const BoundModel<float>&, std::span<const TaskInput>);
template Var<double> caption_loss(const BoundModel<double>&, std::span<const ClipPair>);
template Var<float> caption_loss(const BoundModel<float>&, std::span<const ClipPair>);

}  // namespace vlm
