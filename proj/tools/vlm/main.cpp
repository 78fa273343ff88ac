#include "vlm/app/commands.hpp"
#include "vlm/app/run_config.hpp"
#include "vlm/errors.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss;
  std::optional<std::string> p_mmm;
  std::optional<std::string> min_text_len;
  std::optional<std::string> task;
  std::optional<std::string> checkpoint;
  std::optional<std::string> out;
  std::optional<std::string> axis;
  std::optional<std::string> values;
  bool from_scratch = false;
  bool dump_attention = false;
  std::vector<std::string> sets;
};

vlm::RunConfig effective_config(const Flags& f) {
  vlm::RunConfig cfg = f.config_path.empty() ? vlm::RunConfig{} : vlm::load_run_config(f.config_path);
  std::map<std::string, std::string> o;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw vlm::ConfigError("--set expects key=value, got '" + s + "'");
    o[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (f.seed) o["seed"] = std::to_string(*f.seed);
  if (f.loss) o["loss"] = *f.loss;
  if (f.p_mmm) o["mask.p_mmm"] = *f.p_mmm;
  if (f.min_text_len) o["clips.min_text_len"] = *f.min_text_len;
  if (f.task) o["task"] = *f.task;
  if (f.checkpoint) o["checkpoint"] = *f.checkpoint;
  if (f.out) o["out"] = *f.out;
  if (f.from_scratch) o["from_scratch"] = "true";
  if (f.axis) {
    o["ablate.axis"] = *f.axis;
    if (!f.values && !o.count("ablate.values")) {
      std::string joined;
      for (const auto& v : vlm::default_ablation_values(*f.axis)) joined += (joined.empty() ? "" : ",") + v;
      o["ablate.values"] = joined;
    }
  }
  if (f.values) o["ablate.values"] = *f.values;
  vlm::apply_overrides(cfg, o);
  return cfg;
}

std::string key_listing() {
  std::string out = "Config keys (flat 'key = value' file, '#' comments):\n";
  const vlm::RunConfig defaults;
  for (const auto& k : vlm::config_keys()) {
    out += "  " + k.name + " = " + vlm::get_config_value(defaults, k.name) + "\n      " + k.doc + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video-language masked pretraining and fine-tuning"};
  app.require_subcommand(1);
  app.footer(key_listing());
  Flags f;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "Run config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Global seed (key: seed)");
    sub->add_option("--loss", f.loss, "vlm | mfm_mlm (key: loss)");
    sub->add_option("--p-mmm", f.p_mmm, "Whole-modality masking probability (key: mask.p_mmm)");
    sub->add_option("--min-text-len", f.min_text_len, "Shortest clip text (key: clips.min_text_len)");
    sub->add_option("--task", f.task, "retrieval | segmentation | localization | qa | caption (key: task)");
    sub->add_option("--checkpoint", f.checkpoint, "Input checkpoint (key: checkpoint)");
    sub->add_option("--out", f.out, "Output directory (key: out)");
    sub->add_flag("--from-scratch", f.from_scratch, "Fine-tune from random weights (key: from_scratch)");
    sub->add_option("--set", f.sets, "Override any key: --set key=value (repeatable)");
  };

  auto* pretrain = app.add_subcommand("pretrain", "Masked pretraining; writes checkpoint.bin and train.log");
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a task and report metrics");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a task");
  auto* ablate = app.add_subcommand("ablate", "Pretrain + retrieval sweep over one axis");
  auto* gen = app.add_subcommand("gen-data", "Write the synthetic corpora as a feature file and manifest");
  auto* dump = app.add_subcommand("dump-masks", "Print an attention mask as a 0/1 grid");
  for (auto* sub : {pretrain, finetune, eval, ablate, gen}) add_run_flags(sub);
  for (auto* sub : {finetune, eval}) {
    sub->add_flag("--dump-attn", f.dump_attention, "Write per-layer, per-head attention grids under <out>/attention");
  }
  ablate->add_option("--axis", f.axis, "p_mmm | min_len | loss (key: ablate.axis)");
  ablate->add_option("--values", f.values, "Comma-separated values (key: ablate.values)");

  std::string geometry = "full";
  std::size_t video = 4, text = 4, pad = 0;
  dump->add_option("--geometry", geometry, "full | isolated | caption_causal");
  dump->add_option("--video", video, "Video tokens");
  dump->add_option("--text", text, "Text tokens");
  dump->add_option("--pad", pad, "Trailing PAD positions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (dump->parsed()) {
      std::cout << vlm::cmd_dump_masks(vlm::parse_geometry(geometry), video, text, pad, vlm::ModelConfig::desk());
      return 0;
    }
    const vlm::RunConfig cfg = effective_config(f);
    if (pretrain->parsed()) vlm::cmd_pretrain(cfg, std::cerr);
    if (finetune->parsed()) vlm::cmd_finetune(cfg, std::cerr, f.dump_attention);
    if (eval->parsed()) vlm::cmd_eval(cfg, std::cerr, f.dump_attention);
    if (gen->parsed()) vlm::cmd_gen_data(cfg, std::cerr);
    if (ablate->parsed()) return vlm::cmd_ablate(cfg, std::cerr);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return vlm::exit_code_for(e);
  }
}
