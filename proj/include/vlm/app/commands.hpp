#pragma once

#include "vlm/app/run_config.hpp"
#include "vlm/data/clips.hpp"
#include "vlm/masking/attention_mask.hpp"

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace vlm {

// Files a run writes under RunConfig::out.
namespace files {
inline constexpr const char* config = "config.txt";
inline constexpr const char* train_log = "train.log";
inline constexpr const char* checkpoint = "checkpoint.bin";
inline constexpr const char* finetuned = "finetuned.bin";
inline constexpr const char* finetune_log = "finetune.log";
inline constexpr const char* report = "report.json";
inline constexpr const char* ablation = "ablation.tsv";
inline constexpr const char* features = "features.vlmf";
inline constexpr const char* manifest = "manifest.tsv";
inline constexpr const char* attention_dir = "attention";
}  // namespace files

struct TaskReport {
  TaskKind task = TaskKind::retrieval;
  std::map<std::string, double> metrics;
};

std::string format_report(const TaskReport& report);

// Pretraining videos: the synthetic corpus, or the feature file restricted
// to manifest split "pretrain" when a manifest is given.
std::vector<SyntheticVideo> pretraining_videos(const RunConfig& config);

// Held-in (fine-tuning) and held-out (evaluation) clip pairs, one per video:
// a fresh synthetic corpus of 2 * finetune.pairs videos drawn with
// finetune.data_seed + seed, or the feature file's "train" and "test" splits.
struct PairSplit {
  std::vector<ClipPair> held_in;
  std::vector<ClipPair> held_out;
};
PairSplit finetune_pairs(const RunConfig& config);

// Masked pretraining. Writes the effective config, a line per update to
// train.log and checkpoint.bin every train.checkpoint_every updates and at
// the end. With a checkpoint set, continues from its update count; log lines
// past that point are dropped first. On a non-finite loss the last written
// checkpoint is kept and NumericError propagates.
void cmd_pretrain(const RunConfig& config, std::ostream& status);

// Fine-tunes the task head and backbone on the held-in split and reports
// held-in and held-out metrics. Writes finetuned.bin, finetune.log and
// report.json.
TaskReport cmd_finetune(const RunConfig& config, std::ostream& status, bool dump_attention = false);

// Scores the checkpoint on the task's held-in and held-out splits.
TaskReport cmd_eval(const RunConfig& config, std::ostream& status, bool dump_attention = false);

// One pretrain + retrieval fine-tune per (axis value, seed) cell; a failing
// cell is recorded and the sweep continues. Writes ablation.tsv and returns
// the exit code of the first failing cell (0 if none failed).
int cmd_ablate(const RunConfig& config, std::ostream& status);

// The allow-matrix of a (video_tokens, text_tokens) layout padded with
// `pad` PAD positions, as a 0/1 grid.
std::string cmd_dump_masks(MaskGeometry geometry, std::size_t video_tokens, std::size_t text_tokens, std::size_t pad,
                           const ModelConfig& model);

// Writes the synthetic pretraining and fine-tuning corpora as a feature
// file plus a manifest with splits pretrain, train and test.
void cmd_gen_data(const RunConfig& config, std::ostream& status);

// Process exit code for an exception family: 2 config, 3 numeric, 4 I/O.
int exit_code_for(const std::exception& error);

}  // namespace vlm
