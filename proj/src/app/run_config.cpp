#include "vlm/app/run_config.hpp"

#include "vlm/errors.hpp"
#include "vlm/io/binary.hpp"

#include <charconv>
#include <functional>
#include <sstream>

namespace vlm {

std::string_view task_name(TaskKind task) {
  switch (task) {
    case TaskKind::retrieval: return "retrieval";
    case TaskKind::segmentation: return "segmentation";
    case TaskKind::localization: return "localization";
    case TaskKind::qa: return "qa";
    case TaskKind::caption: return "caption";
  }
  return "?";
}

TaskKind parse_task(std::string_view name) {
  for (TaskKind t : {TaskKind::retrieval, TaskKind::segmentation, TaskKind::localization, TaskKind::qa,
                     TaskKind::caption}) {
    if (task_name(t) == name) return t;
  }
  throw ConfigError("task: unknown task '" + std::string(name) +
                    "' (expected retrieval, segmentation, localization, qa or caption)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end || value.empty()) {
    throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct KeyHandler {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
KeyHandler number_key(std::string name, std::string doc, Access access) {
  return {{name, std::move(doc)},
          [name, access](RunConfig& c, const std::string& v) { access(c) = parse_number<T>(name, v); },
          [access](const RunConfig& c) { return format_number<T>(access(c)); }};
}

template <typename Access>
KeyHandler bool_key(std::string name, std::string doc, Access access) {
  return {{name, std::move(doc)},
          [name, access](RunConfig& c, const std::string& v) { access(c) = parse_bool(name, v); },
          [access](const RunConfig& c) { return std::string(access(c) ? "true" : "false"); }};
}

template <typename Access>
KeyHandler string_key(std::string name, std::string doc, Access access) {
  return {{name, std::move(doc)}, [access](RunConfig& c, const std::string& v) { access(c) = v; },
          [access](const RunConfig& c) { return access(c); }};
}

#define VLM_FIELD(expr) [](auto& c) -> auto& { return expr; }

const std::vector<KeyHandler>& handlers() {
  using Z = std::size_t;
  using I = std::int64_t;
  using U = std::uint64_t;
  static const std::vector<KeyHandler> table = {
      number_key<U>("seed", "global seed: initialization, masking, clip sampling, fine-tuning data", VLM_FIELD(c.seed)),
      string_key("out", "output directory", VLM_FIELD(c.out)),
      string_key("checkpoint", "input checkpoint: resume point (pretrain), pretrained weights (finetune), model (eval)",
                 VLM_FIELD(c.checkpoint)),
      bool_key("from_scratch", "finetune from random initialization instead of a checkpoint",
               VLM_FIELD(c.from_scratch)),
      {{"task", "retrieval | segmentation | localization | qa | caption"},
       [](RunConfig& c, const std::string& v) { c.task = parse_task(v); },
       [](const RunConfig& c) { return std::string(task_name(c.task)); }},

      {{"model.preset", "desk | paper; resets every model.* key"},
       [](RunConfig& c, const std::string& v) {
         if (v == "desk") {
           c.model = ModelConfig::desk();
         } else if (v == "paper") {
           c.model = ModelConfig::paper();
         } else {
           throw ConfigError("model.preset: expected desk or paper, got '" + v + "'");
         }
         c.model_preset = v;
       },
       [](const RunConfig& c) { return c.model_preset; }},
      number_key<Z>("model.d_model", "hidden width", VLM_FIELD(c.model.d_model)),
      number_key<Z>("model.n_layers", "encoder layers", VLM_FIELD(c.model.n_layers)),
      number_key<Z>("model.n_heads", "attention heads", VLM_FIELD(c.model.n_heads)),
      number_key<Z>("model.d_ff", "feed-forward width", VLM_FIELD(c.model.d_ff)),
      number_key<Z>("model.max_len", "padded sequence length", VLM_FIELD(c.model.max_len)),
      number_key<Z>("model.max_video_tokens", "longest video block", VLM_FIELD(c.model.max_video_tokens)),
      number_key<double>("model.init_std", "std of the normal weight initialization", VLM_FIELD(c.model.init_std)),

      string_key("data.source", "synthetic | file", VLM_FIELD(c.data_source)),
      string_key("data.feature_file", "feature file path (data.source = file)", VLM_FIELD(c.feature_file)),
      string_key("data.manifest", "optional id<TAB>split manifest for the feature file", VLM_FIELD(c.manifest)),
      number_key<Z>("data.videos", "synthetic pretraining videos", VLM_FIELD(c.data_videos)),
      number_key<U>("data.seed", "synthetic pretraining corpus seed", VLM_FIELD(c.data_seed)),
      number_key<Z>("data.seconds", "synthetic video length in seconds", VLM_FIELD(c.corpus.seconds)),
      number_key<Z>("data.vocab_size", "vocabulary size (also the model's)", VLM_FIELD(c.corpus.vocab_size)),
      number_key<Z>("data.d_video_feat", "raw feature width (also the model's)", VLM_FIELD(c.corpus.d_video_feat)),
      number_key<Z>("data.topics", "latent topics", VLM_FIELD(c.corpus.n_topics)),
      number_key<Z>("data.words_per_topic", "topic word list length", VLM_FIELD(c.corpus.words_per_topic)),
      number_key<double>("data.topic_word_prob", "probability a word comes from the topic list",
                         VLM_FIELD(c.corpus.topic_word_prob)),
      number_key<double>("data.tokens_per_second", "text rate", VLM_FIELD(c.corpus.tokens_per_second)),
      number_key<double>("data.topic_scale", "weight of the topic prototype in features",
                         VLM_FIELD(c.corpus.topic_scale)),
      number_key<double>("data.grounding", "weight of spoken-word features", VLM_FIELD(c.corpus.grounding)),
      number_key<double>("data.noise", "feature noise std", VLM_FIELD(c.corpus.noise)),
      number_key<U>("data.world_seed", "seed of the shared prototypes and word lists", VLM_FIELD(c.corpus.world_seed)),

      {{"loss", "vlm | mfm_mlm"},
       [](RunConfig& c, const std::string& v) { c.loss = parse_loss_variant(v); },
       [](const RunConfig& c) { return std::string(loss_variant_name(c.loss)); }},
      bool_key("loss.detach_video_targets", "treat video targets and negatives as constants",
               VLM_FIELD(c.detach_video_targets)),
      number_key<double>("mask.p_mmm", "probability of whole-modality masking", VLM_FIELD(c.masking.p_mmm)),
      number_key<double>("mask.p_token", "per-position rate of token masking", VLM_FIELD(c.masking.p_token)),
      number_key<Z>("clips.per_video", "clips sampled per video per batch", VLM_FIELD(c.batching.clips.clips_per_video)),
      number_key<Z>("clips.min_text_len", "shortest clip text", VLM_FIELD(c.batching.clips.min_text_len)),
      number_key<Z>("clips.max_text_len", "longest clip text", VLM_FIELD(c.batching.clips.max_text_len)),
      number_key<Z>("clips.max_frames", "longest clip video span", VLM_FIELD(c.batching.clips.max_frames)),
      number_key<Z>("batch.videos", "videos per pretraining batch", VLM_FIELD(c.batching.videos_per_batch)),

      number_key<double>("optim.lr", "peak pretraining learning rate", VLM_FIELD(c.lr)),
      number_key<I>("optim.warmup_steps", "linear warm-up updates", VLM_FIELD(c.warmup_steps)),
      number_key<double>("optim.end_lr", "learning rate reached at the last update", VLM_FIELD(c.end_lr)),
      number_key<double>("optim.power", "polynomial decay power", VLM_FIELD(c.lr_power)),
      number_key<double>("optim.beta1", "Adam beta1", VLM_FIELD(c.adam.beta1)),
      number_key<double>("optim.beta2", "Adam beta2", VLM_FIELD(c.adam.beta2)),
      number_key<double>("optim.eps", "Adam epsilon", VLM_FIELD(c.adam.eps)),
      number_key<double>("optim.clip_norm", "global gradient norm bound (0 disables)", VLM_FIELD(c.adam.clip_norm)),
      number_key<I>("train.steps", "pretraining updates", VLM_FIELD(c.steps)),
      number_key<I>("train.checkpoint_every", "updates between checkpoints (0: final only)",
                    VLM_FIELD(c.checkpoint_every)),

      number_key<I>("finetune.steps", "fine-tuning updates", VLM_FIELD(c.ft_steps)),
      number_key<double>("finetune.lr", "peak fine-tuning learning rate", VLM_FIELD(c.ft_lr)),
      number_key<I>("finetune.warmup_steps", "fine-tuning warm-up updates", VLM_FIELD(c.ft_warmup_steps)),
      number_key<Z>("finetune.pairs", "examples in each of the held-in and held-out sets", VLM_FIELD(c.ft_pairs)),
      number_key<Z>("finetune.batch", "examples per fine-tuning update", VLM_FIELD(c.ft_batch)),
      number_key<U>("finetune.data_seed", "fine-tuning corpus seed (plus seed)", VLM_FIELD(c.ft_data_seed)),
      number_key<Z>("task.window", "sliding window length in frames", VLM_FIELD(c.window)),
      number_key<Z>("task.window_step", "sliding window stride", VLM_FIELD(c.window_step)),
      number_key<Z>("task.frames", "frames per segmentation/localization video", VLM_FIELD(c.seg_frames)),
      number_key<Z>("task.answers", "candidate answers per QA example", VLM_FIELD(c.qa_answers)),
      number_key<Z>("task.decode_len", "longest decoded caption", VLM_FIELD(c.decode_len)),

      string_key("ablate.axis", "p_mmm | min_len | loss", VLM_FIELD(c.ablate_axis)),
      string_key("ablate.values", "comma-separated axis values", VLM_FIELD(c.ablate_values)),
      number_key<Z>("ablate.seeds", "seeds per cell (seed, seed+1, ...)", VLM_FIELD(c.ablate_seeds)),
  };
  return table;
}

#undef VLM_FIELD

const KeyHandler& handler(const std::string& key) {
  for (const auto& h : handlers()) {
    if (h.key.name == key) return h;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_ordered(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& entries) {
  for (const auto& [k, v] : entries) {
    if (k == "model.preset") set_config_value(config, k, v);
  }
  for (const auto& [k, v] : entries) {
    if (k != "model.preset") set_config_value(config, k, v);
  }
}

void require(bool ok, const std::string& key, const std::string& why) {
  if (!ok) throw ConfigError(key + ": " + why);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& h : handlers()) out.push_back(h.key);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  handler(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return handler(key).get(config); }

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    handler(key);
    for (const auto& [seen, unused] : entries) {
      if (seen == key) throw ConfigError("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
    }
    entries.emplace_back(key, trim(line.substr(eq + 1)));
  }
  apply_ordered(base, entries);
  return base;
}

RunConfig load_run_config(const std::string& path) {
  const std::vector<char> bytes = io::read_file(path);
  return parse_run_config(std::string(bytes.begin(), bytes.end()));
}

void apply_overrides(RunConfig& config, const std::map<std::string, std::string>& overrides) {
  apply_ordered(config, {overrides.begin(), overrides.end()});
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& h : handlers()) out += h.key.name + " = " + h.get(config) + "\n";
  return out;
}

std::vector<std::string> default_ablation_values(const std::string& axis) {
  if (axis == "p_mmm") return {"0", "0.3", "0.5", "0.7"};
  if (axis == "min_len") return {"4", "8"};
  if (axis == "loss") return {"vlm", "mfm_mlm"};
  throw ConfigError("ablate.axis: expected p_mmm, min_len or loss, got '" + axis + "'");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.vocab_size = corpus.vocab_size;
  m.d_video_feat = corpus.d_video_feat;
  return m;
}

TrainerConfig RunConfig::trainer_config() const {
  TrainerConfig t;
  t.loss = {loss, detach_video_targets};
  t.adam = adam;
  t.schedule = {lr, warmup_steps, steps, end_lr, lr_power};
  t.steps = steps;
  t.checkpoint_every = checkpoint_every;
  return t;
}

FinetuneConfig RunConfig::finetune_config() const {
  FinetuneConfig f;
  f.adam = adam;
  f.schedule = {ft_lr, ft_warmup_steps, ft_steps, 0.0, 1.0};
  f.steps = ft_steps;
  return f;
}

ClipSamplingConfig RunConfig::finetune_clips() const {
  ClipSamplingConfig c = batching.clips;
  c.clips_per_video = 1;
  return c;
}

void RunConfig::validate() const {
  const ModelConfig m = model_config();
  m.validate();
  CorpusConfig cc = corpus;
  cc.first_regular_id = m.tokens.first_regular_id;
  cc.validate();
  masking.validate();
  batching.clips.validate();

  require(data_source == "synthetic" || data_source == "file", "data.source", "expected synthetic or file");
  require(data_source != "file" || !feature_file.empty(), "data.feature_file", "required when data.source = file");
  require(data_videos >= 1, "data.videos", "must be at least 1");
  require(batching.videos_per_batch >= 1, "batch.videos", "must be at least 1");
  require(batching.clips.max_frames <= m.max_video_tokens, "clips.max_frames", "exceeds model.max_video_tokens");
  require(batching.clips.max_frames + batching.clips.max_text_len + ModelConfig::kStructuralTokens <= m.max_len,
          "clips.max_text_len", "a longest clip with its longest text does not fit model.max_len");

  require(lr > 0.0, "optim.lr", "must be positive");
  require(end_lr >= 0.0 && end_lr <= lr, "optim.end_lr", "must lie in [0, optim.lr]");
  require(lr_power > 0.0, "optim.power", "must be positive");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "optim.beta1", "must lie in [0, 1)");
  require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "optim.beta2", "must lie in [0, 1)");
  require(adam.eps > 0.0, "optim.eps", "must be positive");
  require(adam.clip_norm >= 0.0, "optim.clip_norm", "must be non-negative");
  require(steps >= 2, "train.steps", "must be at least 2");
  require(warmup_steps >= 1 && warmup_steps < steps, "optim.warmup_steps", "must lie in [1, train.steps)");
  require(checkpoint_every >= 0, "train.checkpoint_every", "must be non-negative");

  require(ft_steps >= 2, "finetune.steps", "must be at least 2");
  require(ft_lr > 0.0, "finetune.lr", "must be positive");
  require(ft_warmup_steps >= 1 && ft_warmup_steps < ft_steps, "finetune.warmup_steps",
          "must lie in [1, finetune.steps)");
  require(ft_pairs >= 2, "finetune.pairs", "must be at least 2");
  require(ft_batch >= 2, "finetune.batch", "must be at least 2");
  require(window >= 1 && window <= m.max_video_tokens, "task.window", "must lie in [1, model.max_video_tokens]");
  require(window_step >= 1 && window_step <= window, "task.window_step", "must lie in [1, task.window]");
  require(seg_frames >= 1, "task.frames", "must be at least 1");
  require(qa_answers >= 2, "task.answers", "must be at least 2");
  require(decode_len >= 1, "task.decode_len", "must be at least 1");
  require(batching.clips.max_frames + decode_len + 1 + ModelConfig::kStructuralTokens <= m.max_len,
          "task.decode_len", "a longest clip with the longest caption does not fit model.max_len");

  default_ablation_values(ablate_axis);
  require(!ablate_values.empty(), "ablate.values", "empty axis list");
  require(ablate_seeds >= 1, "ablate.seeds", "must be at least 1");
}

}  // namespace vlm
