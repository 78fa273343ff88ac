#include "vlm/tasks/retrieval.hpp"

#include "vlm/errors.hpp"
#include "vlm/objectives/losses.hpp"

#include <numeric>

namespace vlm {

PooledPair retrieval_encode(const MatrixXr& features, std::span<const int> text, const ModelParams<double>& params,
                            const ModelConfig& config, EncodeMode mode, const RetrievalOptions& options) {
  if (features.rows() == 0 || text.empty()) {
    throw ContractViolation("retrieval_encode: a clip needs both video frames and text");
  }
  Tape<double> tape;
  BoundModel<double> model(config, params, tape);
  std::vector<int> ids(text.begin(), text.end());
  PooledPair out;
  if (mode == EncodeMode::joint) {
    const std::vector<TaskInput> inputs{{features, ids}};
    auto enc = encode_inputs(model, std::span<const TaskInput>(inputs), MaskGeometry::isolated);
    auto [v, t] = pool_blocks(enc.hidden, std::span<const SequenceLayout>(enc.layouts), options.pool_include_sep);
    out.video = v.value().row(0);
    out.text = t.value().row(0);
  } else {
    const std::vector<TaskInput> inputs{{features, {}}, {MatrixXr(0, features.cols()), ids}};
    auto enc = encode_inputs(model, std::span<const TaskInput>(inputs), MaskGeometry::isolated);
    auto [v, t] = pool_blocks(enc.hidden, std::span<const SequenceLayout>(enc.layouts), options.pool_include_sep);
    out.video = v.value().row(0);
    out.text = t.value().row(1);
  }
  if (options.normalize) {
    out.video /= std::max(out.video.norm(), 1e-12);
    out.text /= std::max(out.text.norm(), 1e-12);
  }
  return out;
}

template <typename S>
std::pair<Var<S>, Var<S>> retrieval_pooled(const BoundModel<S>& model, std::span<const ClipPair> pairs,
                                           const RetrievalOptions& options) {
  std::vector<TaskInput> inputs;
  inputs.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.frames.rows() == 0 || p.text.empty()) throw ContractViolation("retrieval: pair " + p.video_id + " is missing a modality");
    inputs.push_back({p.frames, p.text});
  }
  auto enc = encode_inputs(model, std::span<const TaskInput>(inputs), MaskGeometry::isolated);
  return pool_blocks(enc.hidden, std::span<const SequenceLayout>(enc.layouts), options.pool_include_sep);
}

template <typename S>
Var<S> retrieval_finetune_loss(const BoundModel<S>& model, std::span<const ClipPair> pairs,
                               const RetrievalOptions& options) {
  auto [v, t] = retrieval_pooled(model, pairs, options);
  return retrieval_contrastive_loss(v, t, options.normalize);
}

MatrixXr retrieval_similarity(std::span<const ClipPair> pairs, const ModelParams<double>& params,
                              const ModelConfig& config, const RetrievalOptions& options) {
  if (pairs.empty()) throw ContractViolation("retrieval: no pairs to evaluate");
  const auto n = static_cast<Eigen::Index>(pairs.size());
  MatrixXr videos(n, static_cast<Eigen::Index>(config.d_model));
  MatrixXr texts(n, static_cast<Eigen::Index>(config.d_model));
  for (Eigen::Index i = 0; i < n; ++i) {
    const ClipPair& p = pairs[static_cast<std::size_t>(i)];
    PooledPair e = retrieval_encode(p.frames, p.text, params, config, EncodeMode::split, options);
    videos.row(i) = e.video;
    texts.row(i) = e.text;
  }
  return texts * videos.transpose();
}

RecallMetrics evaluate_retrieval(std::span<const ClipPair> pairs, const ModelParams<double>& params,
                                 const ModelConfig& config, const RetrievalOptions& options) {
  MatrixXr sim = retrieval_similarity(pairs, params, config, options);
  std::vector<std::size_t> gt(pairs.size());
  std::iota(gt.begin(), gt.end(), std::size_t{0});
  return recall_metrics(sim, gt);
}

template std::pair<Var<double>, Var<double>> retrieval_pooled(const BoundModel<double>&, std::span<const ClipPair>,
                                                              const RetrievalOptions&);
template std::pair<Var<float>, Var<float>> retrieval_pooled(const BoundModel<float>&, std::span<const ClipPair>,
                                                            const RetrievalOptions&);
template Var<double> retrieval_finetune_loss(const BoundModel<double>&, std::span<const ClipPair>,
                                             const RetrievalOptions&);
template Var<float> retrieval_finetune_loss(const BoundModel<float>&, std::span<const ClipPair>,
                                            const RetrievalOptions&);

}  // namespace vlm
