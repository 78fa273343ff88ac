#include "vlm/tasks/qa.hpp"

#include "vlm/errors.hpp"
#include "vlm/objectives/losses.hpp"
#include "vlm/tasks/metrics.hpp"

namespace vlm {
namespace {

template <typename S>
std::vector<Var<S>> answer_logits(const BoundModel<S>& model, std::span<const QaExample> examples) {
  const auto width = static_cast<Eigen::Index>(model.config().d_video_feat);
  std::vector<TaskInput> inputs;
  for (const auto& ex : examples) {
    if (ex.answers.empty()) throw ContractViolation("qa: question without answers");
    if (ex.features.rows() == 0) throw ContractViolation("qa: question without video");
    inputs.push_back({ex.features, {}});
    for (const auto& a : ex.answers) {
      if (a.empty()) throw ContractViolation("qa: empty answer text");
      inputs.push_back({MatrixXr(0, width), a});
    }
  }
  auto enc = encode_inputs(model, std::span<const TaskInput>(inputs), MaskGeometry::isolated);
  auto [video, text] = pool_blocks(enc.hidden, std::span<const SequenceLayout>(enc.layouts), false);
  std::vector<Var<S>> out;
  Eigen::Index at = 0;
  for (const auto& ex : examples) {
    const auto n = static_cast<Eigen::Index>(ex.answers.size());
    out.push_back(matmul_transposed(slice_rows(video, at, 1), slice_rows(text, at + 1, n)));
    at += n + 1;
  }
  return out;
}

}  // namespace

AnswerScores score_answers(const MatrixXr& features, const std::vector<std::vector<int>>& answers,
                           const ModelParams<double>& params, const ModelConfig& config) {
  if (answers.empty()) throw ContractViolation("score_answers: empty answer list");
  Tape<double> tape;
  BoundModel<double> model(config, params, tape);
  const std::vector<QaExample> one{{features, answers, 0}};
  const MatrixXr logits = answer_logits(model, std::span<const QaExample>(one)).front().value();
  AnswerScores out;
  out.scores.assign(logits.data(), logits.data() + logits.size());
  out.best = static_cast<std::size_t>(argmax(out.scores));
  return out;
}

template <typename S>
Var<S> qa_loss(const BoundModel<S>& model, std::span<const QaExample> examples) {
  if (examples.empty()) throw ContractViolation("qa_loss: no examples");
  std::vector<Var<S>> losses;
  const auto logits = answer_logits(model, examples);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].correct >= examples[i].answers.size()) throw ContractViolation("qa: correct answer index out of range");
    const Eigen::Index target = static_cast<Eigen::Index>(examples[i].correct);
    losses.push_back(softmax_cross_entropy(logits[i], std::span<const Eigen::Index>(&target, 1)));
  }
  return mean_all(concat_rows(losses));
}

double qa_accuracy(std::span<const QaExample> examples, const ModelParams<double>& params, const ModelConfig& config) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : examples) hits += score_answers(ex.features, ex.answers, params, config).best == ex.correct ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

template Var<double> qa_loss(const BoundModel<double>&, std::span<const QaExample>);
template Var<float> qa_loss(const BoundModel<float>&, std::span<const QaExample>);

}  // namespace vlm
