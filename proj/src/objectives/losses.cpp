#include "vlm/objectives/losses.hpp"

#include "vlm/errors.hpp"

#include <cmath>
#include <string>

namespace vlm {
namespace {

template <typename S>
bool positive_wins(const Mat<S>& logits, Eigen::Index row, Eigen::Index positive) {
  const S best = logits(row, positive);
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    if (j == positive) continue;
    if (logits(row, j) > best || (logits(row, j) == best && j < positive)) return false;
  }
  return true;
}

// Scores rows of `logits` at `positives`, returns the picked log-probs (n x 1).
template <typename S>
Var<S> score_rows(const Var<S>& logits, const std::vector<Eigen::Index>& positives, LossOutput<S>& out) {
  Var<S> picked = pick(log_softmax_rows(logits), std::span<const Eigen::Index>(positives));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.log_probs.push_back(picked.value()(i, 0));
    if (positive_wins(logits.value(), i, positives[static_cast<std::size_t>(i)])) ++out.top1_hits;
  }
  return picked;
}

template <typename S>
Var<S> zero_loss(Tape<S>& tape) {
  return tape.constant(Mat<S>::Zero(1, 1));
}

template <typename S>
void finish(LossOutput<S>& out, const std::vector<Var<S>>& picked_parts, Tape<S>& tape) {
  out.count = out.log_probs.size();
  if (out.count == 0) {
    out.loss = zero_loss(tape);
    return;
  }
  Var<S> all = picked_parts.size() == 1 ? picked_parts.front() : concat_rows(picked_parts);
  out.loss = scale(mean_all(all), S(-1));
}

}  // namespace

double nce_log_prob(const VectorXr& prediction, const CandidateSet& candidates) {
  const MatrixXr& c = candidates.embeddings;
  if (c.rows() == 0) throw ContractViolation("nce: empty candidate set");
  if (candidates.positive >= static_cast<std::size_t>(c.rows())) throw ContractViolation("nce: positive out of range");
  if (c.cols() != prediction.size()) throw ShapeError("nce: candidate width differs from prediction");
  const VectorXr logits = c * prediction;
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits(static_cast<Eigen::Index>(candidates.positive)) - lse;
}

template <typename S>
LossOutput<S> mfm_loss(const Var<S>& predictions, const Var<S>& targets, const Var<S>& negatives) {
  LossOutput<S> out;
  Tape<S>& tape = predictions.tape();
  if (predictions.rows() == 0) {
    finish<S>(out, {}, tape);
    return out;
  }
  if (negatives.rows() == 0) {
    throw DegenerateBatchError("mfm_loss: batch has masked video tokens but no unmasked video token to contrast with");
  }
  Var<S> logits = concat_cols(std::vector<Var<S>>{row_dot(predictions, targets), matmul_transposed(predictions, negatives)});
  std::vector<Eigen::Index> positives(static_cast<std::size_t>(predictions.rows()), 0);
  finish<S>(out, {score_rows(logits, positives, out)}, tape);
  return out;
}

template <typename S>
LossOutput<S> mlm_loss(const Var<S>& predictions, std::span<const int> targets, const Var<S>& word_table,
                       const Var<S>& output_bias) {
  LossOutput<S> out;
  Tape<S>& tape = predictions.tape();
  if (static_cast<Eigen::Index>(targets.size()) != predictions.rows()) throw ShapeError("mlm_loss: one target per row");
  std::vector<Eigen::Index> positives;
  for (int id : targets) {
    if (id < 0 || id >= word_table.rows()) throw ContractViolation("mlm_loss: target id " + std::to_string(id) + " outside vocabulary");
    positives.push_back(id);
  }
  if (predictions.rows() == 0) {
    finish<S>(out, {}, tape);
    return out;
  }
  Var<S> logits = add_row(matmul_transposed(predictions, word_table), output_bias);
  finish<S>(out, {score_rows(logits, positives, out)}, tape);
  return out;
}

template <typename S>
LossOutput<S> masked_token_loss(const Var<S>& video_predictions, const Var<S>& video_targets,
                                const Var<S>& text_predictions, std::span<const int> text_targets,
                                const Var<S>& negatives, const Var<S>& word_table) {
  LossOutput<S> out;
  Tape<S>& tape = word_table.tape();
  if (static_cast<Eigen::Index>(text_targets.size()) != text_predictions.rows()) {
    throw ShapeError("masked_token_loss: one text target per row");
  }
  std::vector<Var<S>> parts;
  if (video_predictions.rows() > 0) {
    Var<S> logits = concat_cols(std::vector<Var<S>>{row_dot(video_predictions, video_targets),
                                                    matmul_transposed(video_predictions, negatives),
                                                    matmul_transposed(video_predictions, word_table)});
    std::vector<Eigen::Index> positives(static_cast<std::size_t>(video_predictions.rows()), 0);
    parts.push_back(score_rows(logits, positives, out));
  }
  if (text_predictions.rows() > 0) {
    std::vector<Eigen::Index> positives;
    for (int id : text_targets) {
      if (id < 0 || id >= word_table.rows()) {
        throw ContractViolation("masked_token_loss: target id " + std::to_string(id) + " outside vocabulary");
      }
      positives.push_back(id);
    }
    Var<S> logits = concat_cols(std::vector<Var<S>>{matmul_transposed(text_predictions, word_table),
                                                    matmul_transposed(text_predictions, negatives)});
    parts.push_back(score_rows(logits, positives, out));
  }
  finish<S>(out, parts, tape);
  return out;
}

template <typename S>
Var<S> loss_mfm_mlm(const LossOutput<S>& mfm, const LossOutput<S>& mlm) {
  return add(mfm.loss, mlm.loss);
}

template <typename S>
Var<S> softmax_cross_entropy(const Var<S>& logits, std::span<const Eigen::Index> targets) {
  return scale(mean_all(pick(log_softmax_rows(logits), targets)), S(-1));
}

template <typename S>
Var<S> retrieval_contrastive_loss(const Var<S>& video_pooled, const Var<S>& text_pooled, bool normalize) {
  if (video_pooled.rows() != text_pooled.rows() || video_pooled.cols() != text_pooled.cols()) {
    throw ShapeError("retrieval loss: video and text batches differ in shape");
  }
  if (video_pooled.rows() < 2) throw ContractViolation("retrieval loss needs at least 2 pairs for in-batch negatives");
  Var<S> v = normalize ? l2_normalize_rows(video_pooled, S(1e-12)) : video_pooled;
  Var<S> t = normalize ? l2_normalize_rows(text_pooled, S(1e-12)) : text_pooled;
  std::vector<Eigen::Index> diagonal(static_cast<std::size_t>(v.rows()));
  for (std::size_t i = 0; i < diagonal.size(); ++i) diagonal[i] = static_cast<Eigen::Index>(i);
  Var<S> text_to_video = matmul_transposed(t, v);
  Var<S> video_to_text = matmul_transposed(v, t);
  Var<S> a = softmax_cross_entropy(text_to_video, std::span<const Eigen::Index>(diagonal));
  Var<S> b = softmax_cross_entropy(video_to_text, std::span<const Eigen::Index>(diagonal));
  return scale(add(a, b), S(0.5));
}

#define VLM_INSTANTIATE_LOSSES(S)                                                                            \
  template LossOutput<S> mfm_loss(const Var<S>&, const Var<S>&, const Var<S>&);                              \
  template LossOutput<S> mlm_loss(const Var<S>&, std::span<const int>, const Var<S>&, const Var<S>&);        \
  template LossOutput<S> masked_token_loss(const Var<S>&, const Var<S>&, const Var<S>&, std::span<const int>, \
                                           const Var<S>&, const Var<S>&);                                    \
  template Var<S> loss_mfm_mlm(const LossOutput<S>&, const LossOutput<S>&);                                  \
  template Var<S> retrieval_contrastive_loss(const Var<S>&, const Var<S>&, bool);                            \
  template Var<S> softmax_cross_entropy(const Var<S>&, std::span<const Eigen::Index>);

VLM_INSTANTIATE_LOSSES(double)
VLM_INSTANTIATE_LOSSES(float)

#undef VLM_INSTANTIATE_LOSSES

}  // namespace vlm
