#include "vlm/tasks/common.hpp"

#include "vlm/errors.hpp"

namespace vlm {

template <typename S>
EncodedInputs<S> encode_inputs(const BoundModel<S>& model, std::span<const TaskInput> inputs, MaskGeometry geometry,
                               AttentionDump<S>* dump) {
  const ModelConfig& c = model.config();
  if (inputs.empty()) throw ContractViolation("encode_inputs: empty batch");
  EncodedInputs<S> out;
  std::vector<BoolMatrix> masks;
  Eigen::Index total = 0;
  for (const auto& in : inputs) total += std::max<Eigen::Index>(in.features.rows(), 1);
  Mat<S> features = Mat<S>::Zero(total, static_cast<Eigen::Index>(c.d_video_feat));
  std::vector<S> keep;
  Eigen::Index row = 0;
  const std::vector<int> dummy_text{c.tokens.dummy_text};
  for (const auto& in : inputs) {
    const bool has_video = in.features.rows() > 0;
    if (has_video) {
      if (in.features.cols() != static_cast<Eigen::Index>(c.d_video_feat)) {
        throw ShapeError("task input features are " + std::to_string(in.features.cols()) + " wide, model expects " +
                         std::to_string(c.d_video_feat));
      }
      features.middleRows(row, in.features.rows()) = in.features.template cast<S>();
    }
    const Eigen::Index frames = std::max<Eigen::Index>(in.features.rows(), 1);
    keep.insert(keep.end(), static_cast<std::size_t>(frames), has_video ? S(1) : S(0));
    row += frames;
    std::span<const int> text = in.text.empty() ? std::span<const int>(dummy_text) : std::span<const int>(in.text);
    out.layouts.push_back(assemble_layout(static_cast<std::size_t>(frames), text, c));
    masks.push_back(build_mask(geometry, out.layouts.back()).allow);
  }
  Tape<S>& tape = model.tape();
  Var<S> tokens = scale_rows(project_video_features(model, tape.constant(std::move(features))), std::span<const S>(keep));
  std::span<const SequenceLayout> layouts(out.layouts);
  out.hidden = encode(model, embed_sequences(model, layouts, tokens), layouts, std::span<const BoolMatrix>(masks), dump);
  return out;
}

template <typename S>
std::pair<Var<S>, Var<S>> pool_blocks(const Var<S>& hidden, std::span<const SequenceLayout> layouts, bool include_sep) {
  const auto batch = static_cast<Eigen::Index>(layouts.size());
  Mat<S> video = Mat<S>::Zero(batch, hidden.rows());
  Mat<S> text = Mat<S>::Zero(batch, hidden.rows());
  Eigen::Index base = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const SequenceLayout& l = layouts[static_cast<std::size_t>(b)];
    const std::size_t vn = l.video_count + (include_sep ? 1 : 0);
    const std::size_t tn = l.text_count + (include_sep ? 1 : 0);
    for (std::size_t i = 0; i < vn; ++i) video(b, base + static_cast<Eigen::Index>(l.video_begin() + i)) = S(1) / S(vn);
    for (std::size_t i = 0; i < tn; ++i) text(b, base + static_cast<Eigen::Index>(l.text_begin() + i)) = S(1) / S(tn);
    base += static_cast<Eigen::Index>(l.padded_length());
  }
  if (base != hidden.rows()) throw ShapeError("pool_blocks: layouts do not cover the hidden states");
  Tape<S>& tape = hidden.tape();
  return {matmul(tape.constant(std::move(video)), hidden), matmul(tape.constant(std::move(text)), hidden)};
}

std::vector<Eigen::Index> video_block_rows(std::span<const SequenceLayout> layouts, std::size_t example) {
  Eigen::Index base = 0;
  for (std::size_t b = 0; b < example; ++b) base += static_cast<Eigen::Index>(layouts[b].padded_length());
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < layouts[example].video_count; ++i) {
    rows.push_back(base + static_cast<Eigen::Index>(layouts[example].video_begin() + i));
  }
  return rows;
}

template EncodedInputs<double> encode_inputs(const BoundModel<double>&, std::span<const TaskInput>, MaskGeometry,
                                             AttentionDump<double>*);
template EncodedInputs<float> encode_inputs(const BoundModel<float>&, std::span<const TaskInput>, MaskGeometry,
                                            AttentionDump<float>*);
template std::pair<Var<double>, Var<double>> pool_blocks(const Var<double>&, std::span<const SequenceLayout>, bool);
template std::pair<Var<float>, Var<float>> pool_blocks(const Var<float>&, std::span<const SequenceLayout>, bool);

}  // namespace vlm
