#pragma once

#include "vlm/numerics/matrix.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace vlm {

struct RecallMetrics {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double median_rank = 0.0;
  std::vector<std::size_t> ranks;  // 1-based, one per query
};

// similarity(q, c) scores candidate c for query q. A candidate outranks the
// ground truth if it scores higher, or scores equal and has a lower index.
// MedianR is the lower median of the ranks.
RecallMetrics recall_metrics(const MatrixXr& similarity, std::span<const std::size_t> ground_truth);

// Single-reference BLEU with uniform weights over 1..n-gram modified
// precisions and the brevity penalty. Empty hypothesis or any zero
// precision gives 0.
double bleu_n(std::span<const int> hypothesis, std::span<const int> reference, int n);

// Corpus BLEU: clipped n-gram counts and lengths summed over all pairs
// before the precisions and the brevity penalty are formed.
double corpus_bleu(const std::vector<std::vector<int>>& hypotheses, const std::vector<std::vector<int>>& references,
                   int n);

// Lowest index wins ties.
Eigen::Index argmax(std::span<const double> values);

}  // namespace vlm
