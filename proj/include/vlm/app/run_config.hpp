#pragma once

#include "vlm/data/batch.hpp"
#include "vlm/data/corpus.hpp"
#include "vlm/masking/mask_plan.hpp"
#include "vlm/model/config.hpp"
#include "vlm/numerics/optimizer.hpp"
#include "vlm/training/finetune.hpp"
#include "vlm/training/pretrain.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vlm {

enum class TaskKind { retrieval, segmentation, localization, qa, caption };

std::string_view task_name(TaskKind task);
TaskKind parse_task(std::string_view name);

// Everything a CLI run depends on. The text form is one `key = value` per
// line ('#' starts a comment); see config_keys() for the key list. Unset
// keys keep the defaults below.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "vlm-run";
  std::string checkpoint;  // pretrained weights (finetune), resume point (pretrain), model (eval)
  bool from_scratch = false;
  TaskKind task = TaskKind::retrieval;

  std::string model_preset = "desk";
  ModelConfig model = ModelConfig::desk();  // vocab_size and d_video_feat follow the data keys

  std::string data_source = "synthetic";  // synthetic | file
  std::string feature_file;
  std::string manifest;
  std::size_t data_videos = 256;
  std::uint64_t data_seed = 1001;
  CorpusConfig corpus;

  LossVariant loss = LossVariant::vlm;
  bool detach_video_targets = true;
  MaskingConfig masking;
  BatchingConfig batching;
  AdamConfig adam;
  double lr = 1e-3;
  std::int64_t warmup_steps = 200;
  double end_lr = 0.0;
  double lr_power = 1.0;
  std::int64_t steps = 5000;
  std::int64_t checkpoint_every = 500;

  std::int64_t ft_steps = 160;
  double ft_lr = 5e-4;
  std::int64_t ft_warmup_steps = 16;
  std::size_t ft_pairs = 32;
  std::size_t ft_batch = 32;
  std::uint64_t ft_data_seed = 2000;  // offset by `seed`
  std::size_t window = 8;
  std::size_t window_step = 4;
  std::size_t seg_frames = 24;
  std::size_t qa_answers = 5;
  std::size_t decode_len = 12;

  std::string ablate_axis = "p_mmm";  // p_mmm | min_len | loss
  std::string ablate_values = "0,0.3,0.5,0.7";
  std::size_t ablate_seeds = 1;

  ModelConfig model_config() const;
  TrainerConfig trainer_config() const;
  FinetuneConfig finetune_config() const;
  ClipSamplingConfig finetune_clips() const;

  // Throws ConfigError naming the first offending key.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

const std::vector<ConfigKey>& config_keys();

// Applies one key; throws ConfigError for unknown keys and bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// Parses the text form onto `base`. `model.preset` is applied before the
// other keys, so it never discards explicit model fields.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::string& path);

// Applies key/value overrides with the same preset-first rule.
void apply_overrides(RunConfig& config, const std::map<std::string, std::string>& overrides);

// Every key, in config_keys() order; parsing the result reproduces `config`.
std::string format_run_config(const RunConfig& config);

std::vector<std::string> default_ablation_values(const std::string& axis);

}  // namespace vlm
