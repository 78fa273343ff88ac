#include "vlm/app/commands.hpp"

#include "vlm/data/feature_file.hpp"
#include "vlm/data/seeding.hpp"
#include "vlm/errors.hpp"
#include "vlm/io/binary.hpp"
#include "vlm/model/checkpoint.hpp"
#include "vlm/model/params.hpp"
#include "vlm/tasks/caption.hpp"
#include "vlm/tasks/localization.hpp"
#include "vlm/tasks/qa.hpp"
#include "vlm/tasks/retrieval.hpp"
#include "vlm/tasks/segmentation.hpp"
#include "vlm/training/finetune.hpp"
#include "vlm/training/pretrain.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace vlm {

namespace fs = std::filesystem;

namespace {

std::string out_file(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out) / name).string(); }

void prepare_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  io::write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
}

CorpusConfig corpus_config(const RunConfig& cfg) {
  CorpusConfig c = cfg.corpus;
  c.first_regular_id = cfg.model.tokens.first_regular_id;
  return c;
}

std::vector<SyntheticVideo> feature_file_split(const RunConfig& cfg, const std::string& split) {
  auto videos = read_feature_file(cfg.feature_file, cfg.corpus.d_video_feat);
  if (cfg.manifest.empty()) return videos;
  const Manifest manifest = read_manifest(cfg.manifest);
  std::vector<SyntheticVideo> out;
  for (auto& v : videos) {
    auto it = manifest.find(v.id);
    if (it != manifest.end() && it->second == split) out.push_back(std::move(v));
  }
  return out;
}

// The first `n` elements, or all of them.
template <typename T>
std::vector<T> take(std::vector<T> items, std::size_t n) {
  if (items.size() > n) items.resize(n);
  return items;
}

// Items for update `step` (1-based): consecutive windows of `batch` that
// wrap around the list.
template <typename T>
std::vector<T> cyclic_batch(const std::vector<T>& items, std::size_t batch, std::int64_t step) {
  if (batch >= items.size()) return items;
  std::vector<T> out;
  const std::size_t start = (static_cast<std::size_t>(step - 1) * batch) % items.size();
  for (std::size_t i = 0; i < batch; ++i) out.push_back(items[(start + i) % items.size()]);
  return out;
}

void require_pairs(const std::vector<ClipPair>& pairs, const char* which) {
  if (pairs.size() < 2) {
    throw ConfigError(std::string("finetune.pairs: the ") + which + " split yields " + std::to_string(pairs.size()) +
                      " clip pairs; at least 2 are needed");
  }
}

// Labeled long videos for segmentation and localization, split in halves.
struct LabeledSplit {
  std::vector<LabeledVideo> held_in;
  std::vector<LabeledVideo> held_out;
};

LabeledSplit labeled_videos(const RunConfig& cfg) {
  if (cfg.data_source != "synthetic") {
    throw ConfigError(std::string("task: ") + std::string(task_name(cfg.task)) +
                      " needs frame labels, which only data.source = synthetic provides");
  }
  SegmentedCorpusConfig seg;
  seg.frames = cfg.seg_frames;
  auto all = generate_segmented_corpus(2 * cfg.ft_pairs, cfg.ft_data_seed + cfg.seed, corpus_config(cfg), seg);
  LabeledSplit s;
  s.held_in.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.ft_pairs));
  s.held_out.assign(all.begin() + static_cast<std::ptrdiff_t>(cfg.ft_pairs), all.end());
  return s;
}

// A short description per topic: the head of its word list.
std::vector<std::vector<int>> step_texts(const RunConfig& cfg) {
  const SyntheticWorld world = make_world(corpus_config(cfg));
  std::vector<std::vector<int>> texts;
  for (const auto& words : world.topic_words) {
    texts.emplace_back(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(4, words.size())));
  }
  return texts;
}

// Per-video step list: the topics the video shows, topped up with the following
// topic ids (cyclic) to kLocalizationSteps candidates, in topic order.
constexpr std::size_t kLocalizationSteps = 4;

struct VideoSteps {
  std::vector<std::vector<int>> texts;
  std::vector<int> labels;  // -1 for background frames
};

VideoSteps video_steps(const LabeledVideo& v, const std::vector<std::vector<int>>& all) {
  const int n = static_cast<int>(all.size());
  std::vector<int> topics;
  for (int label : v.frame_labels) {
    if (label > 0 && std::find(topics.begin(), topics.end(), label - 1) == topics.end()) topics.push_back(label - 1);
  }
  const std::size_t want = std::max(topics.size(), std::min<std::size_t>(kLocalizationSteps, all.size()));
  const int start = topics.empty() ? 0 : *std::max_element(topics.begin(), topics.end());
  for (int k = 1; topics.size() < want && k <= n; ++k) {
    const int t = (start + k) % n;
    if (std::find(topics.begin(), topics.end(), t) == topics.end()) topics.push_back(t);
  }
  std::sort(topics.begin(), topics.end());
  VideoSteps out;
  for (int t : topics) out.texts.push_back(all[static_cast<std::size_t>(t)]);
  for (int label : v.frame_labels) {
    if (label <= 0) {
      out.labels.push_back(-1);
    } else {
      out.labels.push_back(static_cast<int>(std::lower_bound(topics.begin(), topics.end(), label - 1) - topics.begin()));
    }
  }
  return out;
}

// Each pair's own text among distractor texts of other pairs.
std::vector<QaExample> qa_examples(const std::vector<ClipPair>& pairs, std::size_t answers, std::mt19937_64 rng) {
  if (pairs.size() < answers) {
    throw ConfigError("task.answers: " + std::to_string(answers) + " answers need at least that many clip pairs");
  }
  std::vector<QaExample> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      if (j != i) others.push_back(j);
    }
    std::shuffle(others.begin(), others.end(), rng);
    QaExample ex;
    ex.features = pairs[i].frames;
    ex.correct = std::uniform_int_distribution<std::size_t>(0, answers - 1)(rng);
    for (std::size_t a = 0, k = 0; a < answers; ++a) {
      ex.answers.push_back(a == ex.correct ? pairs[i].text : pairs[others[k++]].text);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

struct TaskData {
  PairSplit pairs;
  LabeledSplit labeled;
  std::vector<std::vector<int>> steps;
  std::vector<QaExample> qa_in;
  std::vector<QaExample> qa_out;
};

TaskData task_data(const RunConfig& cfg) {
  TaskData d;
  switch (cfg.task) {
    case TaskKind::segmentation:
      d.labeled = labeled_videos(cfg);
      break;
    case TaskKind::localization:
      d.labeled = labeled_videos(cfg);
      d.steps = step_texts(cfg);
      break;
    case TaskKind::qa:
      d.pairs = finetune_pairs(cfg);
      d.qa_in = qa_examples(d.pairs.held_in, cfg.qa_answers, derive_rng(cfg.seed, {5}));
      d.qa_out = qa_examples(d.pairs.held_out, cfg.qa_answers, derive_rng(cfg.seed, {6}));
      break;
    case TaskKind::retrieval:
    case TaskKind::caption:
      d.pairs = finetune_pairs(cfg);
      break;
  }
  return d;
}

std::size_t segmentation_label_count(const RunConfig& cfg) { return cfg.corpus.n_topics + 1; }

std::string first_difference(const ModelConfig& a, const ModelConfig& b) {
  const auto fa = a.to_fields();
  const auto fb = b.to_fields();
  for (const auto& [k, v] : fa) {
    auto it = fb.find(k);
    if (it == fb.end() || it->second != v) {
      return k + " (checkpoint " + v + ", run " + (it == fb.end() ? "unset" : it->second) + ")";
    }
  }
  return "?";
}

Checkpoint load_matching_checkpoint(const RunConfig& cfg, const ModelConfig& model) {
  Checkpoint ck = load_checkpoint(cfg.checkpoint);
  if (!(ck.config == model)) {
    throw ConfigError("checkpoint " + cfg.checkpoint + " was written for a different model: " +
                      first_difference(ck.config, model));
  }
  return ck;
}

void require_task_matches(const Checkpoint& ck, const RunConfig& cfg) {
  auto it = ck.metadata.find("task");
  if (it != ck.metadata.end() && it->second != task_name(cfg.task)) {
    throw ConfigError("task: checkpoint " + cfg.checkpoint + " carries a " + it->second + " head, run asks for " +
                      std::string(task_name(cfg.task)));
  }
}

void install_head(ModelParams<double>& params, const RunConfig& cfg, const ModelConfig& model) {
  if (cfg.task != TaskKind::segmentation) return;
  const std::size_t wanted = segmentation_label_count(cfg);
  if (!params.contains(names::seg_w)) add_segmentation_head(params, model, wanted, cfg.seed);
  const std::size_t have = segmentation_labels(params, model);
  if (have != wanted) {
    throw ConfigError("task: checkpoint segmentation head has " + std::to_string(have) + " labels, data has " +
                      std::to_string(wanted));
  }
}

TaskLoss task_loss(const RunConfig& cfg, const TaskData& d) {
  const std::size_t batch = cfg.ft_batch;
  switch (cfg.task) {
    case TaskKind::retrieval:
      return [&d, batch](const BoundModel<double>& m, std::int64_t step) {
        const auto b = cyclic_batch(d.pairs.held_in, batch, step);
        return retrieval_finetune_loss(m, std::span<const ClipPair>(b), RetrievalOptions{});
      };
    case TaskKind::caption:
      return [&d, batch](const BoundModel<double>& m, std::int64_t step) {
        const auto b = cyclic_batch(d.pairs.held_in, batch, step);
        return caption_loss(m, std::span<const ClipPair>(b));
      };
    case TaskKind::qa:
      return [&d, batch](const BoundModel<double>& m, std::int64_t step) {
        const auto b = cyclic_batch(d.qa_in, batch, step);
        return qa_loss(m, std::span<const QaExample>(b));
      };
    case TaskKind::segmentation:
    case TaskKind::localization:
      return [&d, &cfg, batch](const BoundModel<double>& m, std::int64_t step) {
        const auto b = cyclic_batch(d.labeled.held_in, batch, step);
        Var<double> total = m.tape().constant(MatrixXr::Zero(1, 1));
        for (const auto& v : b) {
          const auto windows = window_offsets(static_cast<std::size_t>(v.video.features.rows()), cfg.window,
                                              cfg.window_step);
          std::span<const Window> ws(windows);
          if (cfg.task == TaskKind::segmentation) {
            total = total + segmentation_loss(m, v.video.features, std::span<const int>(v.frame_labels), ws);
          } else {
            const VideoSteps vs = video_steps(v, d.steps);
            total = total + localization_loss(m, v.video.features, std::span<const int>(vs.labels), ws, vs.texts);
          }
        }
        return total * (1.0 / static_cast<double>(b.size()));
      };
  }
  throw ConfigError("task: unsupported");
}

void add_recall(TaskReport& r, const std::string& prefix, const RecallMetrics& m) {
  r.metrics[prefix + ".R@1"] = m.r1;
  r.metrics[prefix + ".R@5"] = m.r5;
  r.metrics[prefix + ".R@10"] = m.r10;
  r.metrics[prefix + ".MedianR"] = m.median_rank;
}

double segmentation_accuracy(const std::vector<LabeledVideo>& videos, const ModelParams<double>& params,
                             const ModelConfig& model, const RunConfig& cfg) {
  std::size_t hits = 0, frames = 0;
  for (const auto& v : videos) {
    const auto out = segment_video(v.video.features, params, model, cfg.window, cfg.window_step);
    for (std::size_t f = 0; f < v.frame_labels.size(); ++f) hits += out.labels[f] == v.frame_labels[f];
    frames += v.frame_labels.size();
  }
  return frames ? static_cast<double>(hits) / static_cast<double>(frames) : 0.0;
}

// Fraction of step frames whose most probable step is the right one.
double localization_accuracy(const std::vector<LabeledVideo>& videos, const std::vector<std::vector<int>>& steps,
                             const ModelParams<double>& params, const ModelConfig& model, const RunConfig& cfg) {
  std::size_t hits = 0, frames = 0;
  for (const auto& v : videos) {
    const VideoSteps vs = video_steps(v, steps);
    const MatrixXr probs = localize_steps(v.video.features, vs.texts, params, model, cfg.window, cfg.window_step);
    const auto& labels = vs.labels;
    for (std::size_t f = 0; f < labels.size(); ++f) {
      if (labels[f] < 0) continue;
      const RowVectorXr row = probs.row(static_cast<Eigen::Index>(f));
      const std::vector<double> values(row.data(), row.data() + row.size());
      hits += argmax(values) == labels[f];
      ++frames;
    }
  }
  return frames ? static_cast<double>(hits) / static_cast<double>(frames) : 0.0;
}

std::pair<double, double> caption_bleu(const std::vector<ClipPair>& pairs, const ModelParams<double>& params,
                                       const ModelConfig& model, const RunConfig& cfg) {
  std::vector<std::vector<int>> hyps, refs;
  for (const auto& p : pairs) {
    hyps.push_back(greedy_decode(p.frames, params, model, cfg.decode_len));
    refs.push_back(p.text);
  }
  return {corpus_bleu(hyps, refs, 3), corpus_bleu(hyps, refs, 4)};
}

TaskReport evaluate_task(const RunConfig& cfg, const TaskData& d, const ModelParams<double>& params,
                         const ModelConfig& model) {
  TaskReport r;
  r.task = cfg.task;
  switch (cfg.task) {
    case TaskKind::retrieval:
      add_recall(r, "held_in", evaluate_retrieval(d.pairs.held_in, params, model));
      add_recall(r, "held_out", evaluate_retrieval(d.pairs.held_out, params, model));
      break;
    case TaskKind::segmentation:
      r.metrics["held_in.frame_accuracy"] = segmentation_accuracy(d.labeled.held_in, params, model, cfg);
      r.metrics["held_out.frame_accuracy"] = segmentation_accuracy(d.labeled.held_out, params, model, cfg);
      break;
    case TaskKind::localization:
      r.metrics["held_in.step_accuracy"] = localization_accuracy(d.labeled.held_in, d.steps, params, model, cfg);
      r.metrics["held_out.step_accuracy"] = localization_accuracy(d.labeled.held_out, d.steps, params, model, cfg);
      break;
    case TaskKind::qa:
      r.metrics["held_in.accuracy"] = qa_accuracy(d.qa_in, params, model);
      r.metrics["held_out.accuracy"] = qa_accuracy(d.qa_out, params, model);
      break;
    case TaskKind::caption: {
      const auto [in3, in4] = caption_bleu(d.pairs.held_in, params, model, cfg);
      const auto [out3, out4] = caption_bleu(d.pairs.held_out, params, model, cfg);
      r.metrics["held_in.BLEU-3"] = in3;
      r.metrics["held_in.BLEU-4"] = in4;
      r.metrics["held_out.BLEU-3"] = out3;
      r.metrics["held_out.BLEU-4"] = out4;
      break;
    }
  }
  return r;
}

// Attention of the task's first held-out example, one grid per layer and
// head, cropped to the non-PAD positions.
void dump_attention(const RunConfig& cfg, const TaskData& d, const ModelParams<double>& params,
                    const ModelConfig& model, std::ostream& status) {
  TaskInput input;
  MaskGeometry geometry = MaskGeometry::isolated;
  if (cfg.task == TaskKind::segmentation || cfg.task == TaskKind::localization) {
    const auto& f = d.labeled.held_out.at(0).video.features;
    input.features = f.topRows(std::min<Eigen::Index>(f.rows(), static_cast<Eigen::Index>(cfg.window)));
  } else {
    const ClipPair& p = d.pairs.held_out.at(0);
    input.features = p.frames;
    input.text = p.text;
    if (cfg.task == TaskKind::caption) {
      input.text = caption_input(p.text, model);
      geometry = MaskGeometry::caption_causal;
    }
  }
  Tape<double> tape;
  BoundModel<double> bound(model, params, tape);
  AttentionDump<double> dump;
  const std::vector<TaskInput> inputs{input};
  auto enc = encode_inputs(bound, std::span<const TaskInput>(inputs), geometry, &dump);
  const auto n = static_cast<Eigen::Index>(enc.layouts.at(0).length());

  const fs::path dir = fs::path(cfg.out) / files::attention_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t layer = 0; layer < dump.size(); ++layer) {
    for (std::size_t head = 0; head < dump[layer].size(); ++head) {
      const MatrixXr a = dump[layer][head].topLeftCorner(n, n);
      std::ostringstream grid;
      char buf[32];
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          std::snprintf(buf, sizeof buf, j ? " %.6f" : "%.6f", a(i, j));
          grid << buf;
        }
        grid << '\n';
      }
      write_text((dir / ("layer" + std::to_string(layer) + "_head" + std::to_string(head) + ".txt")).string(),
                 grid.str());
    }
  }
  status << "attention grids written to " << dir.string() << "\n";
}

void write_report(const RunConfig& cfg, const TaskReport& report) {
  nlohmann::json j;
  j["task"] = std::string(task_name(report.task));
  j["metrics"] = report.metrics;
  write_text(out_file(cfg, files::report), j.dump(2) + "\n");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string axis_key(const std::string& axis) {
  if (axis == "p_mmm") return "mask.p_mmm";
  if (axis == "min_len") return "clips.min_text_len";
  if (axis == "loss") return "loss";
  throw ConfigError("ablate.axis: expected p_mmm, min_len or loss, got '" + axis + "'");
}

}  // namespace

std::string format_report(const TaskReport& report) {
  std::string out = std::string(task_name(report.task)) + ":";
  char buf[96];
  for (const auto& [k, v] : report.metrics) {
    std::snprintf(buf, sizeof buf, " %s=%.4f", k.c_str(), v);
    out += buf;
  }
  return out;
}

std::vector<SyntheticVideo> pretraining_videos(const RunConfig& cfg) {
  if (cfg.data_source == "file") {
    auto videos = feature_file_split(cfg, "pretrain");
    if (videos.empty()) throw ConfigError("data.manifest: no videos in split 'pretrain'");
    return videos;
  }
  return generate_corpus(cfg.data_videos, cfg.data_seed, corpus_config(cfg));
}

PairSplit finetune_pairs(const RunConfig& cfg) {
  std::vector<SyntheticVideo> in_videos, out_videos;
  if (cfg.data_source == "file") {
    if (cfg.manifest.empty()) {
      auto all = read_feature_file(cfg.feature_file, cfg.corpus.d_video_feat);
      const auto half = static_cast<std::ptrdiff_t>(all.size() / 2);
      in_videos.assign(all.begin(), all.begin() + half);
      out_videos.assign(all.begin() + half, all.end());
    } else {
      in_videos = feature_file_split(cfg, "train");
      out_videos = feature_file_split(cfg, "test");
    }
    in_videos = take(std::move(in_videos), cfg.ft_pairs);
    out_videos = take(std::move(out_videos), cfg.ft_pairs);
  } else {
    auto all = generate_corpus(2 * cfg.ft_pairs, cfg.ft_data_seed + cfg.seed, corpus_config(cfg));
    in_videos.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.ft_pairs));
    out_videos.assign(all.begin() + static_cast<std::ptrdiff_t>(cfg.ft_pairs), all.end());
  }
  check_compatible(in_videos, cfg.model_config());
  check_compatible(out_videos, cfg.model_config());
  PairSplit s;
  auto in_rng = derive_rng(cfg.seed, {3});
  auto out_rng = derive_rng(cfg.seed, {4});
  s.held_in = sample_clip_pairs(in_videos, in_rng, cfg.finetune_clips());
  s.held_out = sample_clip_pairs(out_videos, out_rng, cfg.finetune_clips());
  require_pairs(s.held_in, "held-in");
  require_pairs(s.held_out, "held-out");
  return s;
}

void cmd_pretrain(const RunConfig& cfg, std::ostream& status) {
  cfg.validate();
  const ModelConfig model = cfg.model_config();
  const auto videos = pretraining_videos(cfg);
  check_compatible(videos, model);
  prepare_out_dir(cfg);
  write_text(out_file(cfg, files::config), format_run_config(cfg));

  TrainingState state;
  if (!cfg.checkpoint.empty()) {
    const Checkpoint ck = load_matching_checkpoint(cfg, model);
    if (ck.metadata.count("task")) throw ConfigError("checkpoint: " + cfg.checkpoint + " is a fine-tuned model");
    state = training_state(ck);
    status << "resuming from update " << state.optimizer.step << "\n";
  } else {
    state.params = init_params(model, cfg.seed);
  }

  // Keep only log records the resumed state has already seen.
  const std::string log_path = out_file(cfg, files::train_log);
  std::string kept;
  if (state.optimizer.step > 0 && fs::exists(log_path)) {
    std::ifstream old(log_path);
    std::string line;
    while (std::getline(old, line)) {
      long long step = 0;
      if (std::sscanf(line.c_str(), "step=%lld", &step) == 1 && step <= state.optimizer.step) kept += line + "\n";
    }
  }
  write_text(log_path, kept);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot open " + log_path);

  const std::map<std::string, std::string> metadata{{"kind", "pretrain"},
                                                    {"run.seed", std::to_string(cfg.seed)},
                                                    {"run.loss", std::string(loss_variant_name(cfg.loss))},
                                                    {"run.p_mmm", get_config_value(cfg, "mask.p_mmm")},
                                                    {"run.min_text_len", get_config_value(cfg, "clips.min_text_len")}};
  const std::string ck_path = out_file(cfg, files::checkpoint);
  const std::int64_t report_every = std::max<std::int64_t>(1, cfg.steps / 20);

  TrainerHooks hooks;
  hooks.on_step = [&](const StepRecord& r) {
    log << format_step_record(r) << "\n" << std::flush;
    if (r.step % report_every == 0 || r.step == cfg.steps) {
      status << "step " << r.step << "/" << cfg.steps << " loss " << r.loss << "\n";
    }
  };
  hooks.on_checkpoint = [&](const TrainingState& s) { save_checkpoint(ck_path, make_checkpoint(model, s, metadata)); };

  try {
    pretrain(state, model, corpus_batches(videos, model, cfg.masking, cfg.batching, cfg.seed), cfg.trainer_config(),
             hooks);
  } catch (const NumericError&) {
    status << "aborted on a non-finite loss; " << (fs::exists(ck_path) ? ck_path + " holds the last good state" : "no checkpoint was written") << "\n";
    throw;
  }
  save_checkpoint(ck_path, make_checkpoint(model, state, metadata));
  status << "checkpoint written to " << ck_path << "\n";
}

TaskReport cmd_finetune(const RunConfig& cfg, std::ostream& status, bool dump) {
  cfg.validate();
  const ModelConfig model = cfg.model_config();
  TrainingState state;
  if (cfg.from_scratch) {
    state.params = init_params(model, cfg.seed);
  } else {
    if (cfg.checkpoint.empty()) throw ConfigError("checkpoint: required unless from_scratch = true");
    const Checkpoint ck = load_matching_checkpoint(cfg, model);
    require_task_matches(ck, cfg);
    state.params = training_state(ck).params;
  }
  install_head(state.params, cfg, model);
  const TaskData data = task_data(cfg);
  prepare_out_dir(cfg);
  write_text(out_file(cfg, files::config), format_run_config(cfg));

  std::string log;
  char buf[64];
  finetune(state, model, task_loss(cfg, data), cfg.finetune_config(), [&](std::int64_t k, double loss) {
    std::snprintf(buf, sizeof buf, "step=%lld loss=%.9g\n", static_cast<long long>(k), loss);
    log += buf;
  });
  write_text(out_file(cfg, files::finetune_log), log);

  Checkpoint out{model,
                 {{"kind", "finetune"}, {"task", std::string(task_name(cfg.task))}, {"run.seed", std::to_string(cfg.seed)}},
                 state.params};
  save_checkpoint(out_file(cfg, files::finetuned), out);

  TaskReport report = evaluate_task(cfg, data, state.params, model);
  write_report(cfg, report);
  if (dump) dump_attention(cfg, data, state.params, model, status);
  status << format_report(report) << "\n";
  return report;
}

TaskReport cmd_eval(const RunConfig& cfg, std::ostream& status, bool dump) {
  cfg.validate();
  if (cfg.checkpoint.empty()) throw ConfigError("checkpoint: eval needs a checkpoint");
  const ModelConfig model = cfg.model_config();
  const Checkpoint ck = load_matching_checkpoint(cfg, model);
  require_task_matches(ck, cfg);
  const ModelParams<double> params = training_state(ck).params;
  if (cfg.task == TaskKind::segmentation) segmentation_labels(params, model);
  const TaskData data = task_data(cfg);
  prepare_out_dir(cfg);
  TaskReport report = evaluate_task(cfg, data, params, model);
  write_report(cfg, report);
  if (dump) dump_attention(cfg, data, params, model, status);
  status << format_report(report) << "\n";
  return report;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& status) {
  cfg.validate();
  const std::string key = axis_key(cfg.ablate_axis);
  const auto values = split_list(cfg.ablate_values);
  if (values.empty()) throw ConfigError("ablate.values: empty axis list");
  prepare_out_dir(cfg);
  write_text(out_file(cfg, files::config), format_run_config(cfg));

  std::string table = "axis\tvalue\tseed\theld_in.R@1\theld_out.R@1\theld_out.R@5\theld_out.R@10\theld_out.MedianR\tstatus\n";
  int first_failure = 0;
  for (const auto& value : values) {
    for (std::size_t s = 0; s < cfg.ablate_seeds; ++s) {
      RunConfig cell = cfg;
      cell.seed = cfg.seed + s;
      const std::string cell_dir = cfg.ablate_axis + "-" + value + "-seed" + std::to_string(cell.seed);
      cell.out = (fs::path(cfg.out) / cell_dir).string();
      std::string row = cfg.ablate_axis + "\t" + value + "\t" + std::to_string(cell.seed);
      try {
        set_config_value(cell, key, value);
        cell.checkpoint.clear();
        cell.from_scratch = false;
        status << "cell " << cell_dir << "\n";
        cmd_pretrain(cell, status);
        cell.checkpoint = out_file(cell, files::checkpoint);
        cell.task = TaskKind::retrieval;
        const TaskReport r = cmd_finetune(cell, status);
        char buf[160];
        std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f\t%.4f\t%.4f\t%.1f\tok", r.metrics.at("held_in.R@1"),
                      r.metrics.at("held_out.R@1"), r.metrics.at("held_out.R@5"), r.metrics.at("held_out.R@10"),
                      r.metrics.at("held_out.MedianR"));
        row += buf;
      } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        if (first_failure == 0) first_failure = code;
        status << "cell " << cell_dir << " failed: " << e.what() << "\n";
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\t', ' ');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        row += "\t-\t-\t-\t-\t-\terror: " + msg;
      }
      table += row + "\n";
      write_text(out_file(cfg, files::ablation), table);
    }
  }
  status << table;
  return first_failure;
}

std::string cmd_dump_masks(MaskGeometry geometry, std::size_t video_tokens, std::size_t text_tokens, std::size_t pad,
                           const ModelConfig& model) {
  if (video_tokens == 0 || text_tokens == 0) throw ConfigError("dump-masks: --video and --text must be at least 1");
  std::vector<int> text(text_tokens, model.tokens.first_regular_id);
  const std::size_t length = video_tokens + text_tokens + ModelConfig::kStructuralTokens + pad;
  ModelConfig m = model;
  m.max_len = std::max(m.max_len, length);
  m.max_video_tokens = std::max(m.max_video_tokens, video_tokens);
  const SequenceLayout layout = assemble_layout(video_tokens, text, m, length);
  return format_mask_grid(build_mask(geometry, layout).allow);
}

void cmd_gen_data(const RunConfig& cfg, std::ostream& status) {
  cfg.validate();
  if (cfg.data_source != "synthetic") throw ConfigError("data.source: gen-data writes synthetic data only");
  prepare_out_dir(cfg);
  const auto pre = generate_corpus(cfg.data_videos, cfg.data_seed, corpus_config(cfg));
  const auto ft = generate_corpus(2 * cfg.ft_pairs, cfg.ft_data_seed + cfg.seed, corpus_config(cfg));
  std::vector<SyntheticVideo> all = pre;
  all.insert(all.end(), ft.begin(), ft.end());
  std::vector<std::pair<std::string, std::string>> manifest;
  for (const auto& v : pre) manifest.emplace_back(v.id, "pretrain");
  for (std::size_t i = 0; i < ft.size(); ++i) manifest.emplace_back(ft[i].id, i < cfg.ft_pairs ? "train" : "test");
  write_feature_file(out_file(cfg, files::features), all, cfg.corpus.d_video_feat);
  write_manifest(out_file(cfg, files::manifest), manifest);
  write_text(out_file(cfg, files::config), format_run_config(cfg));
  status << "wrote " << all.size() << " videos to " << out_file(cfg, files::features) << "\n";
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const ContractViolation*>(&error)) return 2;
  if (dynamic_cast<const NumericError*>(&error)) return 3;
  if (dynamic_cast<const IoError*>(&error)) return 4;
  return 1;
}

}  // namespace vlm
