#include "vlm/model/encoder.hpp"

#include "vlm/errors.hpp"

#include <string>

namespace vlm {

template <typename Scalar>
BoundModel<Scalar>::BoundModel(const ModelConfig& config, const ModelParams<Scalar>& params, Tape<Scalar>& tape)
    : config_(config), tape_(tape) {
  if (!tape.has_param(names::head_w)) {
    check_params(params, config);
    tape.bind(params);
  }
}

template <typename Scalar>
Var<Scalar> project_video_features(const BoundModel<Scalar>& model, const Var<Scalar>& features) {
  const ModelConfig& c = model.config();
  if (features.cols() != static_cast<Eigen::Index>(c.d_video_feat)) {
    throw ShapeError("video features are " + std::to_string(features.cols()) + " wide, model expects " +
                     std::to_string(c.d_video_feat));
  }
  if (features.rows() == 0) throw ContractViolation("video features have zero frames");
  Var<Scalar> hidden = add_row(matmul(features, model.param(names::projector_fc1_w)), model.param(names::projector_fc1_b));
  if (c.projector_activation == ProjectorActivation::gelu) hidden = gelu(hidden);
  return add_row(matmul(hidden, model.param(names::projector_fc2_w)), model.param(names::projector_fc2_b));
}

std::vector<Eigen::Index> video_rows(std::span<const SequenceLayout> layouts) {
  std::vector<Eigen::Index> rows;
  Eigen::Index offset = 0;
  for (const auto& layout : layouts) {
    for (std::size_t i = 0; i < layout.video_count; ++i) {
      rows.push_back(offset + static_cast<Eigen::Index>(layout.video_begin() + i));
    }
    offset += static_cast<Eigen::Index>(layout.padded_length());
  }
  return rows;
}

template <typename Scalar>
Var<Scalar> embed_sequences(const BoundModel<Scalar>& model, std::span<const SequenceLayout> layouts,
                            const Var<Scalar>& video_tokens) {
  const ModelConfig& c = model.config();
  if (layouts.empty()) throw ContractViolation("embed: empty batch");
  const std::size_t len = layouts.front().padded_length();
  std::vector<Eigen::Index> word_ids, positions, segments, index;
  const Eigen::Index total = static_cast<Eigen::Index>(layouts.size() * len);
  Eigen::Index next_video = 0;
  for (const auto& layout : layouts) {
    if (layout.padded_length() != len) throw ShapeError("embed: layouts in a batch must share one padded length");
    for (std::size_t i = 0; i < len; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(word_ids.size());
      if (layout.kinds[i] == TokenKind::video) {
        word_ids.push_back(c.tokens.pad);
        index.push_back(total + next_video++);
      } else {
        word_ids.push_back(layout.token_ids[i]);
        index.push_back(row);
      }
      positions.push_back(layout.position_ids[i]);
      segments.push_back(layout.segment_ids[i]);
    }
  }
  if (video_tokens.rows() != next_video || video_tokens.cols() != static_cast<Eigen::Index>(c.d_model)) {
    throw ShapeError("embed: expected " + std::to_string(next_video) + " video tokens of width " +
                     std::to_string(c.d_model) + ", got " + std::to_string(video_tokens.rows()) + "x" +
                     std::to_string(video_tokens.cols()));
  }
  Var<Scalar> words = gather_rows(model.param(names::word_embeddings), std::span<const Eigen::Index>(word_ids));
  Var<Scalar> tokens = gather_rows(concat_rows(std::vector<Var<Scalar>>{words, video_tokens}),
                                   std::span<const Eigen::Index>(index));
  Var<Scalar> pos = gather_rows(model.param(names::position_embeddings), std::span<const Eigen::Index>(positions));
  Var<Scalar> seg = gather_rows(model.param(names::segment_embeddings), std::span<const Eigen::Index>(segments));
  return tokens + pos + seg;
}

void require_attendable(const SequenceLayout& layout, const BoolMatrix& mask) {
  const auto len = static_cast<Eigen::Index>(layout.padded_length());
  if (mask.rows() != len || mask.cols() != len) throw ShapeError("attention mask does not match sequence length");
  for (Eigen::Index i = 0; i < len; ++i) {
    if (layout.kinds[static_cast<std::size_t>(i)] == TokenKind::pad) continue;
    if (!mask.row(i).any()) {
      throw ContractViolation("attention mask row " + std::to_string(i) + " allows no key");
    }
  }
}

template <typename Scalar>
Var<Scalar> encode(const BoundModel<Scalar>& model, const Var<Scalar>& embeddings,
                   std::span<const SequenceLayout> layouts, std::span<const BoolMatrix> masks,
                   AttentionDump<Scalar>* dump) {
  const ModelConfig& c = model.config();
  if (layouts.size() != masks.size()) throw ShapeError("encode: one mask per example required");
  for (std::size_t b = 0; b < layouts.size(); ++b) require_attendable(layouts[b], masks[b]);
  const auto eps = static_cast<Scalar>(c.layer_norm_eps);
  if (dump != nullptr) dump->clear();

  Var<Scalar> x = embeddings;
  auto p = [&](std::size_t l, const char* leaf) { return model.param(names::layer(l, leaf)); };
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    Var<Scalar> q = add_row(matmul(x, p(l, "attn.query.weight")), p(l, "attn.query.bias"));
    Var<Scalar> k = add_row(matmul(x, p(l, "attn.key.weight")), p(l, "attn.key.bias"));
    Var<Scalar> v = add_row(matmul(x, p(l, "attn.value.weight")), p(l, "attn.value.bias"));
    std::vector<Mat<Scalar>>* probs = nullptr;
    if (dump != nullptr) probs = &dump->emplace_back();
    Var<Scalar> attended = multi_head_attention(q, k, v, masks, c.n_heads, probs);
    Var<Scalar> out = add_row(matmul(attended, p(l, "attn.output.weight")), p(l, "attn.output.bias"));
    x = layer_norm(x + out, p(l, "attn.norm.gamma"), p(l, "attn.norm.beta"), eps);
    Var<Scalar> ff = gelu(add_row(matmul(x, p(l, "ffn.fc1.weight")), p(l, "ffn.fc1.bias")));
    ff = add_row(matmul(ff, p(l, "ffn.fc2.weight")), p(l, "ffn.fc2.bias"));
    x = layer_norm(x + ff, p(l, "ffn.norm.gamma"), p(l, "ffn.norm.beta"), eps);
  }
  return x;
}

template <typename Scalar>
Var<Scalar> predict_embeddings(const BoundModel<Scalar>& model, const Var<Scalar>& hidden) {
  return add_row(matmul(hidden, model.param(names::head_w)), model.param(names::head_b));
}

template <typename Scalar>
Var<Scalar> vocabulary_logits(const BoundModel<Scalar>& model, const Var<Scalar>& predictions) {
  return add_row(matmul_transposed(predictions, model.param(names::word_embeddings)), model.param(names::lm_bias));
}

template <typename Scalar>
Mat<Scalar> project_video_features(const Mat<Scalar>& features, const ModelParams<Scalar>& params,
                                   const ModelConfig& config) {
  Tape<Scalar> tape;
  BoundModel<Scalar> model(config, params, tape);
  return project_video_features(model, tape.constant(features)).value();
}

template <typename Scalar>
Mat<Scalar> encode(const MultimodalSequence& sequence, const BoolMatrix& mask, const ModelParams<Scalar>& params,
                   const ModelConfig& config) {
  Tape<Scalar> tape;
  BoundModel<Scalar> model(config, params, tape);
  std::span<const SequenceLayout> layouts(&sequence.layout, 1);
  Var<Scalar> emb = embed_sequences(model, layouts, tape.constant(sequence.video_tokens.template cast<Scalar>()));
  return encode(model, emb, layouts, std::span<const BoolMatrix>(&mask, 1)).value();
}

template <typename Scalar>
Mat<Scalar> predict_embeddings(const Mat<Scalar>& hidden, const ModelParams<Scalar>& params) {
  const Mat<Scalar>& w = params.at(names::head_w);
  const Mat<Scalar>& b = params.at(names::head_b);
  if (hidden.cols() != w.rows()) throw ShapeError("predict_embeddings: hidden width does not match head");
  return (hidden * w).rowwise() + b.row(0);
}

#define VLM_INSTANTIATE_ENCODER(S)                                                                                 \
  template class BoundModel<S>;                                                                                    \
  template Var<S> project_video_features(const BoundModel<S>&, const Var<S>&);                                     \
  template Var<S> embed_sequences(const BoundModel<S>&, std::span<const SequenceLayout>, const Var<S>&);           \
  template Var<S> encode(const BoundModel<S>&, const Var<S>&, std::span<const SequenceLayout>,                     \
                         std::span<const BoolMatrix>, AttentionDump<S>*);                                          \
  template Var<S> predict_embeddings(const BoundModel<S>&, const Var<S>&);                                         \
  template Var<S> vocabulary_logits(const BoundModel<S>&, const Var<S>&);                                          \
  template Mat<S> project_video_features(const Mat<S>&, const ModelParams<S>&, const ModelConfig&);                \
  template Mat<S> encode(const MultimodalSequence&, const BoolMatrix&, const ModelParams<S>&, const ModelConfig&); \
  template Mat<S> predict_embeddings(const Mat<S>&, const ModelParams<S>&);

VLM_INSTANTIATE_ENCODER(double)
VLM_INSTANTIATE_ENCODER(float)

#undef VLM_INSTANTIATE_ENCODER

}  // namespace vlm
