#pragma once

#include "vlm/tasks/common.hpp"

#include <span>
#include <vector>

namespace vlm {

struct QaExample {
  MatrixXr features;
  std::vector<std::vector<int>> answers;
  std::size_t correct = 0;
};

struct AnswerScores {
  std::vector<double> scores;  // <video pooled, answer pooled> per answer
  std::size_t best = 0;        // lowest index on ties
};

// Sequence-level scores: the video (with a dummy text token) and every
// answer (with a dummy video token) are pooled under the isolated mask.
AnswerScores score_answers(const MatrixXr& features, const std::vector<std::vector<int>>& answers,
                           const ModelParams<double>& params, const ModelConfig& config);

// Mean over examples of the cross-entropy of the softmax over each
// question's own answers.
template <typename S>
Var<S> qa_loss(const BoundModel<S>& model, std::span<const QaExample> examples);

double qa_accuracy(std::span<const QaExample> examples, const ModelParams<double>& params, const ModelConfig& config);

}  // namespace vlm
