#include "vlm/training/pretrain.hpp"

#include "vlm/data/seeding.hpp"
#include "vlm/errors.hpp"
#include "vlm/masking/attention_mask.hpp"
#include "vlm/objectives/losses.hpp"
#include "vlm/training/bounded_queue.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <memory>
#include <thread>

namespace vlm {
namespace {
constexpr std::uint64_t kEpochStream = 1;
constexpr std::uint64_t kMaskStream = 2;
constexpr std::string_view kMomentPrefix1 = "optim.m/";
constexpr std::string_view kMomentPrefix2 = "optim.v/";
}  // namespace

std::string_view loss_variant_name(LossVariant variant) {
  return variant == LossVariant::vlm ? "vlm" : "mfm_mlm";
}

LossVariant parse_loss_variant(std::string_view name) {
  if (name == "vlm") return LossVariant::vlm;
  if (name == "mfm_mlm") return LossVariant::mfm_mlm;
  throw ConfigError("loss must be vlm or mfm_mlm, got '" + std::string(name) + "'");
}

template <typename S>
PretrainLoss<S> pretrain_loss(const BoundModel<S>& model, const PretrainBatch& batch,
                              const PretrainLossOptions& options) {
  Tape<S>& tape = model.tape();
  Var<S> features = tape.constant(batch.video_features.template cast<S>());
  Var<S> tokens = project_video_features(model, features);
  std::vector<S> keep(batch.video_keep.begin(), batch.video_keep.end());
  Var<S> masked_tokens = scale_rows(tokens, std::span<const S>(keep));

  std::vector<BoolMatrix> masks;
  masks.reserve(batch.layouts.size());
  for (const auto& layout : batch.layouts) masks.push_back(build_full_mask(layout).allow);
  std::span<const SequenceLayout> layouts(batch.layouts);
  Var<S> hidden = encode(model, embed_sequences(model, layouts, masked_tokens), layouts,
                         std::span<const BoolMatrix>(masks));

  Var<S> video_pred = predict_embeddings(model, gather_rows(hidden, std::span<const Eigen::Index>(batch.predict_video_flat)));
  Var<S> text_pred = predict_embeddings(model, gather_rows(hidden, std::span<const Eigen::Index>(batch.predict_text_flat)));
  Var<S> source = options.detach_video_targets ? tape.constant(tokens.value()) : tokens;
  Var<S> video_targets = gather_rows(source, std::span<const Eigen::Index>(batch.predict_video));
  Var<S> negatives = gather_rows(source, std::span<const Eigen::Index>(batch.negative_video));
  Var<S> words = model.param(names::word_embeddings);
  std::span<const int> text_targets(batch.text_targets);

  PretrainLoss<S> out;
  if (options.variant == LossVariant::vlm) {
    LossOutput<S> l = masked_token_loss(video_pred, video_targets, text_pred, text_targets, negatives, words);
    out.loss = l.loss;
    out.predictions = l.count;
    out.top1_hits = l.top1_hits;
  } else {
    LossOutput<S> mfm = mfm_loss(video_pred, video_targets, negatives);
    LossOutput<S> mlm = mlm_loss(text_pred, text_targets, words, model.param(names::lm_bias));
    out.loss = loss_mfm_mlm(mfm, mlm);
    out.predictions = mfm.count + mlm.count;
    out.top1_hits = mfm.top1_hits + mlm.top1_hits;
  }
  return out;
}

template PretrainLoss<double> pretrain_loss(const BoundModel<double>&, const PretrainBatch&, const PretrainLossOptions&);
template PretrainLoss<float> pretrain_loss(const BoundModel<float>&, const PretrainBatch&, const PretrainLossOptions&);

BatchSource corpus_batches(const std::vector<SyntheticVideo>& videos, const ModelConfig& model,
                           const MaskingConfig& masking, const BatchingConfig& batching, std::uint64_t seed) {
  if (videos.empty()) throw ConfigError("pretraining corpus is empty");
  check_compatible(videos, model);
  masking.validate();
  batching.clips.validate();
  struct Cursor {
    std::int64_t epoch = -1;
    std::int64_t first_step = 0;  // global step of the current epoch's first batch
    std::vector<std::vector<ClipPair>> plan;
  };
  auto cursor = std::make_shared<Cursor>();
  auto shared_videos = std::make_shared<const std::vector<SyntheticVideo>>(videos);
  return [=](std::int64_t step) {
    if (step < cursor->first_step) *cursor = Cursor{};
    while (cursor->epoch < 0 || step >= cursor->first_step + static_cast<std::int64_t>(cursor->plan.size())) {
      if (cursor->epoch >= 0) cursor->first_step += static_cast<std::int64_t>(cursor->plan.size());
      cursor->epoch += 1;
      auto rng = derive_rng(seed, {kEpochStream, static_cast<std::uint64_t>(cursor->epoch)});
      cursor->plan = plan_epoch(*shared_videos, rng, batching);
      if (cursor->plan.empty()) throw ConfigError("no video in the corpus yields a clip with the current settings");
    }
    const auto& clips = cursor->plan[static_cast<std::size_t>(step - cursor->first_step)];
    auto rng = derive_rng(seed, {kMaskStream, static_cast<std::uint64_t>(step)});
    return make_batch(clips, model, masking, rng);
  };
}

BatchSource fixed_clip_batches(std::vector<ClipPair> clips, const ModelConfig& model, const MaskingConfig& masking,
                               std::uint64_t seed) {
  if (clips.empty()) throw ConfigError("no clips to train on");
  masking.validate();
  auto shared = std::make_shared<const std::vector<ClipPair>>(std::move(clips));
  return [=](std::int64_t step) {
    auto rng = derive_rng(seed, {kMaskStream, static_cast<std::uint64_t>(step)});
    return make_batch(*shared, model, masking, rng);
  };
}

std::string format_step_record(const StepRecord& r) {
  const double acc = r.predictions == 0 ? 0.0 : static_cast<double>(r.top1_hits) / static_cast<double>(r.predictions);
  char buf[256];
  std::snprintf(buf, sizeof buf, "step=%lld mfm_mlm=%zu mmm_video=%zu mmm_text=%zu loss=%.9g lr=%.9g variant=%s acc=%.6f",
                static_cast<long long>(r.step), r.scheme_counts[0], r.scheme_counts[1], r.scheme_counts[2], r.loss, r.lr,
                std::string(loss_variant_name(r.variant)).c_str(), acc);
  return buf;
}

void pretrain(TrainingState& state, const ModelConfig& model, const BatchSource& source, const TrainerConfig& cfg,
              const TrainerHooks& hooks) {
  model.validate();
  check_params(state.params, model);
  const std::int64_t start = state.optimizer.step;
  if (start >= cfg.steps) return;
  lr_at(0, cfg.schedule);  // validates the schedule up front

  struct Item {
    std::int64_t step;
    PretrainBatch batch;
  };
  BoundedQueue<Item> queue(cfg.queue_capacity);
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      for (std::int64_t s = start; s < cfg.steps; ++s) {
        if (!queue.push(Item{s, source(s)})) return;
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });
  struct Joiner {
    BoundedQueue<Item>& q;
    std::thread& t;
    ~Joiner() {
      q.close();
      if (t.joinable()) t.join();
    }
  } joiner{queue, producer};

  while (state.optimizer.step < cfg.steps) {
    std::optional<Item> item = queue.pop();
    if (!item) break;
    Tape<double> tape;
    BoundModel<double> bound(model, state.params, tape);
    PretrainLoss<double> l = pretrain_loss(bound, item->batch, cfg.loss);
    const double loss = l.loss.value()(0, 0);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite loss at step " + std::to_string(item->step + 1));
    }
    GradientMap<double> grads = tape.backward(l.loss);
    // Update k (1-based) uses lr_at(k), so the first update already moves.
    const double lr = lr_at(state.optimizer.step + 1, cfg.schedule);
    if (lr > 0.0) {
      adam_step(state.params, grads, state.optimizer, lr, cfg.adam);
    } else {
      state.optimizer.step += 1;  // end_lr 0 past the schedule: count the step, move nothing
    }
    StepRecord rec;
    rec.step = state.optimizer.step;
    rec.scheme_counts = item->batch.scheme_counts;
    rec.loss = loss;
    rec.lr = lr;
    rec.variant = cfg.loss.variant;
    rec.predictions = l.predictions;
    rec.top1_hits = l.top1_hits;
    if (hooks.on_step) hooks.on_step(rec);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.optimizer.step % cfg.checkpoint_every == 0) {
      hooks.on_checkpoint(state);
    }
  }
  queue.close();
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);
}

Checkpoint make_checkpoint(const ModelConfig& model, const TrainingState& state,
                           std::map<std::string, std::string> metadata) {
  Checkpoint c;
  c.config = model;
  c.metadata = std::move(metadata);
  c.metadata["optim.step"] = std::to_string(state.optimizer.step);
  c.tensors = state.params;
  for (const auto& [name, m] : state.optimizer.first_moment) c.tensors.emplace(std::string(kMomentPrefix1) + name, m);
  for (const auto& [name, v] : state.optimizer.second_moment) c.tensors.emplace(std::string(kMomentPrefix2) + name, v);
  return c;
}

TrainingState training_state(const Checkpoint& checkpoint) {
  TrainingState s;
  for (const auto& [name, t] : checkpoint.tensors) {
    if (!name.starts_with("optim.")) s.params.emplace(name, t);
  }
  s.optimizer.first_moment = tensors_with_prefix(checkpoint.tensors, std::string(kMomentPrefix1));
  s.optimizer.second_moment = tensors_with_prefix(checkpoint.tensors, std::string(kMomentPrefix2));
  auto it = checkpoint.metadata.find("optim.step");
  if (it != checkpoint.metadata.end()) {
    try {
      s.optimizer.step = std::stoll(it->second);
    } catch (const std::exception&) {
      throw IoError("checkpoint has a malformed optim.step: " + it->second);
    }
  }
  check_params(s.params, checkpoint.config);
  return s;
}

}  // namespace vlm
