#include "doctest.h"
#include "vlm/app/commands.hpp"
#include "vlm/app/run_config.hpp"
#include "vlm/errors.hpp"
#include "vlm/io/binary.hpp"
#include "vlm/model/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vlm;
namespace fs = std::filesystem;

namespace {

// Width-16 one-layer model, a few short videos and a handful of updates.
RunConfig tiny_run(const std::string& name) {
  RunConfig c = parse_run_config(R"(
model.d_model = 16
model.n_layers = 1
model.d_ff = 32
data.videos = 4
data.seconds = 30
train.steps = 12
train.checkpoint_every = 6
optim.warmup_steps = 2
finetune.steps = 4
finetune.warmup_steps = 1
finetune.pairs = 4
finetune.batch = 4
)");
  c.out = (fs::temp_directory_path() / ("vlm_app_" + name)).string();
  fs::remove_all(c.out);
  return c;
}

std::size_t line_count(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_in(const RunConfig& c, const char* name) { return (fs::path(c.out) / name).string(); }

}  // namespace

TEST_CASE("config: text form round trips and rejects unknown or repeated keys") {
  RunConfig c;
  set_config_value(c, "mask.p_mmm", "0.3");
  set_config_value(c, "task", "caption");
  set_config_value(c, "loss.detach_video_targets", "false");
  const RunConfig back = parse_run_config(format_run_config(c));
  CHECK(format_run_config(back) == format_run_config(c));
  CHECK(back.masking.p_mmm == 0.3);
  CHECK(back.task == TaskKind::caption);
  CHECK_FALSE(back.detach_video_targets);
  for (const auto& key : config_keys()) CHECK(get_config_value(back, key.name) == get_config_value(c, key.name));

  CHECK_THROWS_AS(parse_run_config("model.width = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("seed 1\n"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "mask.p_mmm", "lots"), ConfigError);
  CHECK(parse_run_config("# only a comment\n\nseed = 9 # trailing\n").seed == 9);
}

TEST_CASE("config: the preset applies first whatever the key order") {
  const RunConfig a = parse_run_config("model.d_model = 48\nmodel.preset = desk\n");
  const RunConfig b = parse_run_config("model.preset = desk\nmodel.d_model = 48\n");
  CHECK(a.model.d_model == 48);
  CHECK(format_run_config(a) == format_run_config(b));
  RunConfig c;
  apply_overrides(c, {{"model.d_model", "32"}, {"model.preset", "desk"}});
  CHECK(c.model.d_model == 32);
}

TEST_CASE("config: validation names the offending key") {
  RunConfig c;
  c.masking.p_mmm = 1.5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("p_mmm"), ConfigError);
  c = RunConfig{};
  c.warmup_steps = c.steps;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(default_ablation_values("p_mmm") == std::vector<std::string>{"0", "0.3", "0.5", "0.7"});
}

TEST_CASE("exit codes follow the error family") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(ContractViolation("x")) == 2);
  CHECK(exit_code_for(NumericError("x")) == 3);
  CHECK(exit_code_for(IoError("x")) == 4);
  CHECK(exit_code_for(ParseError("x", 3)) == 4);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("pretrain command: logs every update, is deterministic and resumes exactly") {
  std::ostringstream status;
  RunConfig a = tiny_run("pre_a");
  cmd_pretrain(a, status);
  CHECK(line_count(file_in(a, files::train_log)) == 12);
  CHECK(fs::exists(file_in(a, files::config)));
  const auto bytes_a = io::read_file(file_in(a, files::checkpoint));

  RunConfig b = tiny_run("pre_b");
  cmd_pretrain(b, status);
  CHECK(io::read_file(file_in(b, files::checkpoint)) == bytes_a);
  CHECK(slurp(file_in(b, files::train_log)) == slurp(file_in(a, files::train_log)));

  // A constant rate makes the first half a prefix of the full schedule.
  RunConfig full = tiny_run("pre_full");
  full.end_lr = full.lr;
  cmd_pretrain(full, status);
  RunConfig half = tiny_run("pre_half");
  half.end_lr = half.lr;
  half.steps = 6;
  cmd_pretrain(half, status);
  half.steps = 12;
  half.checkpoint = (fs::path(half.out).parent_path() / "vlm_app_half.bin").string();
  fs::copy_file(file_in(half, files::checkpoint), half.checkpoint, fs::copy_options::overwrite_existing);
  cmd_pretrain(half, status);
  CHECK(load_checkpoint(file_in(half, files::checkpoint)).tensors ==
        load_checkpoint(file_in(full, files::checkpoint)).tensors);
  CHECK(slurp(file_in(half, files::train_log)) == slurp(file_in(full, files::train_log)));

  RunConfig m = tiny_run("pre_mfm");
  m.loss = LossVariant::mfm_mlm;
  m.steps = 3;
  m.warmup_steps = 1;
  cmd_pretrain(m, status);
  CHECK(slurp(file_in(m, files::train_log)).find("variant=mfm_mlm") != std::string::npos);
  CHECK(load_checkpoint(file_in(m, files::checkpoint)).metadata.at("run.loss") == "mfm_mlm");

  for (const auto* name : {"pre_a", "pre_b", "pre_full", "pre_half", "pre_mfm"}) {
    fs::remove_all(fs::temp_directory_path() / (std::string("vlm_app_") + name));
  }
  fs::remove(half.checkpoint);
}

TEST_CASE("finetune command: reports the task metrics and checks the checkpoint") {
  std::ostringstream status;
  RunConfig c = tiny_run("ft");
  c.from_scratch = true;
  TaskReport r = cmd_finetune(c, status);
  for (const char* k : {"held_in.R@1", "held_in.R@5", "held_in.R@10", "held_in.MedianR", "held_out.R@1",
                        "held_out.R@5", "held_out.R@10", "held_out.MedianR"}) {
    CHECK(r.metrics.count(k) == 1);
  }
  CHECK(line_count(file_in(c, files::finetune_log)) == 4);
  CHECK(slurp(file_in(c, files::report)).find("held_out.MedianR") != std::string::npos);

  RunConfig cap = c;
  cap.task = TaskKind::caption;
  r = cmd_finetune(cap, status);
  bool has3 = false, has4 = false;
  for (const auto& [k, v] : r.metrics) {
    has3 |= k.find("BLEU-3") != std::string::npos;
    has4 |= k.find("BLEU-4") != std::string::npos;
  }
  CHECK((has3 && has4));

  RunConfig mismatch = c;
  mismatch.from_scratch = false;
  mismatch.checkpoint = file_in(cap, files::finetuned);
  CHECK_THROWS_AS(cmd_finetune(mismatch, status), ConfigError);

  RunConfig wider = mismatch;
  wider.task = TaskKind::caption;
  wider.model.d_model = 32;
  CHECK_THROWS_WITH_AS(cmd_finetune(wider, status), doctest::Contains("d_model"), ConfigError);

  RunConfig none = c;
  none.from_scratch = false;
  CHECK_THROWS_AS(cmd_finetune(none, status), ConfigError);
  fs::remove_all(c.out);
}

TEST_CASE("ablate command: one row per cell and an empty axis is an error") {
  std::ostringstream status;
  RunConfig c = tiny_run("abl");
  c.steps = 3;
  c.warmup_steps = 1;
  c.checkpoint_every = 0;
  c.ft_steps = 2;
  CHECK(cmd_ablate(c, status) == 0);
  CHECK(line_count(file_in(c, files::ablation)) == 5);
  CHECK(fs::exists(fs::path(c.out) / "p_mmm-0.3-seed1" / files::checkpoint));

  c.ablate_values = " , ";
  CHECK_THROWS_AS(cmd_ablate(c, status), ConfigError);
  fs::remove_all(c.out);
}

TEST_CASE("dump-masks grid matches the isolated layout") {
  CHECK(cmd_dump_masks(MaskGeometry::isolated, 1, 2, 0, ModelConfig::desk()) ==
        "100000\n011000\n011000\n000111\n000111\n000111\n");
}
