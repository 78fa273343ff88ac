#pragma once

#include "vlm/data/batch.hpp"
#include "vlm/model/checkpoint.hpp"
#include "vlm/model/encoder.hpp"
#include "vlm/numerics/optimizer.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace vlm {

enum class LossVariant { vlm, mfm_mlm };

std::string_view loss_variant_name(LossVariant variant);
LossVariant parse_loss_variant(std::string_view name);

template <typename S>
struct PretrainLoss {
  Var<S> loss;
  std::size_t predictions = 0;
  std::size_t top1_hits = 0;
};

struct PretrainLossOptions {
  LossVariant variant = LossVariant::vlm;
  // Treat video targets and V' as constants: the projector then learns only
  // through the encoder input path.
  bool detach_video_targets = false;
};

// Full pretraining graph for one batch: project features, zero the masked
// video tokens, encode under FULL masks, predict with the shared head and
// score with the selected loss. Targets and V' are the unmasked projected
// tokens of the same forward pass.
template <typename S>
PretrainLoss<S> pretrain_loss(const BoundModel<S>& model, const PretrainBatch& batch,
                              const PretrainLossOptions& options);

struct TrainingState {
  ModelParams<double> params;
  AdamState<double> optimizer;
};

// Produces the batch for a global step. Must be deterministic in `step`;
// it is called from a single prefetch thread in increasing step order.
using BatchSource = std::function<PretrainBatch(std::int64_t step)>;

// Shuffled epochs over `videos`; the epoch plan and each batch's mask draws
// use sub-streams of `seed`, so a resumed run sees the same batches.
BatchSource corpus_batches(const std::vector<SyntheticVideo>& videos, const ModelConfig& model,
                           const MaskingConfig& masking, const BatchingConfig& batching, std::uint64_t seed);

// The same clip set every step with fresh mask draws.
BatchSource fixed_clip_batches(std::vector<ClipPair> clips, const ModelConfig& model, const MaskingConfig& masking,
                               std::uint64_t seed);

struct StepRecord {
  std::int64_t step = 0;  // 1-based count of completed updates
  std::array<std::size_t, 3> scheme_counts{};
  double loss = 0.0;
  double lr = 0.0;
  LossVariant variant = LossVariant::vlm;
  std::size_t predictions = 0;
  std::size_t top1_hits = 0;
};

// "step=12 mfm_mlm=8 mmm_video=4 mmm_text=4 loss=... lr=... variant=vlm acc=..."
std::string format_step_record(const StepRecord& record);

struct TrainerConfig {
  PretrainLossOptions loss;
  AdamConfig adam;
  ScheduleConfig schedule;
  std::int64_t steps = 200;
  std::int64_t checkpoint_every = 0;  // 0: only the caller's final save
  std::size_t queue_capacity = 4;
};

struct TrainerHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const TrainingState&)> on_checkpoint;
};

// Runs updates from state.optimizer.step up to cfg.steps. Batches are
// prepared one step ahead on a worker thread through a bounded queue.
// Throws NumericError on a non-finite loss before touching the parameters.
void pretrain(TrainingState& state, const ModelConfig& model, const BatchSource& source, const TrainerConfig& cfg,
              const TrainerHooks& hooks = {});

// Parameters are stored under their own names, Adam moments under
// "optim.m/" and "optim.v/", the update count in metadata "optim.step".
Checkpoint make_checkpoint(const ModelConfig& model, const TrainingState& state,
                           std::map<std::string, std::string> metadata = {});
TrainingState training_state(const Checkpoint& checkpoint);

}  // namespace vlm
