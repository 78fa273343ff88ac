#pragma once

#include "vlm/model/encoder.hpp"
#include "vlm/numerics/optimizer.hpp"
#include "vlm/training/pretrain.hpp"

#include <cstdint>
#include <functional>

namespace vlm {

struct FinetuneConfig {
  AdamConfig adam;
  ScheduleConfig schedule;
  std::int64_t steps = 300;
};

// Builds the task loss for one update on a tape with every entry of
// state.params (backbone plus task heads) bound.
using TaskLoss = std::function<Var<double>(const BoundModel<double>& model, std::int64_t step)>;

// Plain synchronous loop: loss, backward, clipped Adam with lr_at(k) for
// update k. The optimizer state starts fresh. on_step receives (update, loss).
void finetune(TrainingState& state, const ModelConfig& model, const TaskLoss& loss, const FinetuneConfig& cfg,
              const std::function<void(std::int64_t, double)>& on_step = {});

}  // namespace vlm
