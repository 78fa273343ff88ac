#include "vlm/training/finetune.hpp"

#include "vlm/errors.hpp"

#include <cmath>

namespace vlm {

void finetune(TrainingState& state, const ModelConfig& model, const TaskLoss& loss, const FinetuneConfig& cfg,
              const std::function<void(std::int64_t, double)>& on_step) {
  model.validate();
  check_params(state.params, model);
  lr_at(0, cfg.schedule);
  state.optimizer = AdamState<double>{};
  for (std::int64_t k = 1; k <= cfg.steps; ++k) {
    Tape<double> tape;
    BoundModel<double> bound(model, state.params, tape);
    Var<double> l = loss(bound, k - 1);
    const double value = l.value()(0, 0);
    if (!std::isfinite(value)) throw NumericError("non-finite fine-tuning loss at step " + std::to_string(k));
    GradientMap<double> grads = tape.backward(l);
    const double lr = lr_at(k, cfg.schedule);
    if (lr > 0.0) {
      adam_step(state.params, grads, state.optimizer, lr, cfg.adam);
    } else {
      state.optimizer.step += 1;
    }
    if (on_step) on_step(k, value);
  }
}

}  // namespace vlm
