#include "vlm/tasks/metrics.hpp"

#include "vlm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace vlm {

RecallMetrics recall_metrics(const MatrixXr& similarity, std::span<const std::size_t> ground_truth) {
  if (similarity.cols() < 1) throw ContractViolation("recall: no candidates");
  if (static_cast<std::size_t>(similarity.rows()) != ground_truth.size()) {
    throw ShapeError("recall: one ground-truth index per query row required");
  }
  RecallMetrics m;
  if (ground_truth.empty()) return m;
  for (Eigen::Index q = 0; q < similarity.rows(); ++q) {
    const std::size_t gt = ground_truth[static_cast<std::size_t>(q)];
    if (gt >= static_cast<std::size_t>(similarity.cols())) throw ContractViolation("recall: ground truth out of range");
    const double s = similarity(q, static_cast<Eigen::Index>(gt));
    std::size_t rank = 1;
    for (Eigen::Index c = 0; c < similarity.cols(); ++c) {
      const double v = similarity(q, c);
      if (v > s || (v == s && static_cast<std::size_t>(c) < gt)) ++rank;
    }
    m.ranks.push_back(rank);
  }
  const auto n = static_cast<double>(m.ranks.size());
  auto within = [&](std::size_t k) {
    return static_cast<double>(std::count_if(m.ranks.begin(), m.ranks.end(), [k](std::size_t r) { return r <= k; })) / n;
  };
  m.r1 = within(1);
  m.r5 = within(5);
  m.r10 = within(10);
  std::vector<std::size_t> sorted = m.ranks;
  std::sort(sorted.begin(), sorted.end());
  m.median_rank = static_cast<double>(sorted[(sorted.size() - 1) / 2]);
  return m;
}

namespace {

using Counts = std::map<std::vector<int>, std::size_t>;

Counts ngrams(std::span<const int> tokens, std::size_t k) {
  Counts out;
  for (std::size_t i = 0; i + k <= tokens.size(); ++i) out[std::vector<int>(tokens.begin() + i, tokens.begin() + i + k)]++;
  return out;
}

struct BleuStats {
  std::vector<double> matched, total;
  double hyp_len = 0.0, ref_len = 0.0;
};

void accumulate_stats(BleuStats& st, std::span<const int> hyp, std::span<const int> ref, int n) {
  for (int k = 1; k <= n; ++k) {
    const Counts h = ngrams(hyp, static_cast<std::size_t>(k));
    const Counts r = ngrams(ref, static_cast<std::size_t>(k));
    for (const auto& [gram, count] : h) {
      auto it = r.find(gram);
      if (it != r.end()) st.matched[static_cast<std::size_t>(k - 1)] += static_cast<double>(std::min(count, it->second));
      st.total[static_cast<std::size_t>(k - 1)] += static_cast<double>(count);
    }
  }
  st.hyp_len += static_cast<double>(hyp.size());
  st.ref_len += static_cast<double>(ref.size());
}

double bleu_from(const BleuStats& st, int n) {
  if (st.hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (st.total[static_cast<std::size_t>(k)] == 0.0 || st.matched[static_cast<std::size_t>(k)] == 0.0) return 0.0;
    log_sum += std::log(st.matched[static_cast<std::size_t>(k)] / st.total[static_cast<std::size_t>(k)]);
  }
  const double bp = st.hyp_len >= st.ref_len ? 1.0 : std::exp(1.0 - st.ref_len / st.hyp_len);
  return bp * std::exp(log_sum / n);
}

void check_order(int n) {
  if (n < 1 || n > 4) throw ContractViolation("bleu: n must be in 1..4, got " + std::to_string(n));
}

}  // namespace

double bleu_n(std::span<const int> hypothesis, std::span<const int> reference, int n) {
  check_order(n);
  BleuStats st{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  accumulate_stats(st, hypothesis, reference, n);
  return bleu_from(st, n);
}

double corpus_bleu(const std::vector<std::vector<int>>& hypotheses, const std::vector<std::vector<int>>& references,
                   int n) {
  check_order(n);
  if (hypotheses.size() != references.size()) throw ShapeError("corpus_bleu: one reference per hypothesis");
  BleuStats st{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < hypotheses.size(); ++i) accumulate_stats(st, hypotheses[i], references[i], n);
  return bleu_from(st, n);
}

Eigen::Index argmax(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<Eigen::Index>(best);
}

}  // namespace vlm
