#include "vlm/data/corpus.hpp"

#include "vlm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vlm {
namespace {

double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

// Draws the token stream of [begin, end) seconds and writes the matching
// feature rows. topic < 0 means background: uniform words, no prototype.
void fill_span(SyntheticVideo& video, std::size_t begin, std::size_t end, int topic, const SyntheticWorld& world,
               const CorpusConfig& cfg, std::mt19937_64& rng) {
  std::exponential_distribution<double> gap(cfg.tokens_per_second);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> any_word(cfg.first_regular_id, static_cast<int>(cfg.vocab_size) - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(cfg.d_video_feat);

  std::vector<std::vector<int>> spoken(end - begin);
  double t = static_cast<double>(begin) + gap(rng);
  while (t < static_cast<double>(end)) {
    int word = 0;
    if (topic >= 0 && unit(rng) < cfg.topic_word_prob) {
      const auto& list = world.topic_words[static_cast<std::size_t>(topic)];
      std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
      word = list[pick(rng)];
    } else {
      word = any_word(rng);
    }
    const double stamp = to_float_precision(t);
    const auto second = std::min(static_cast<std::size_t>(stamp), end - 1);
    video.tokens.push_back(word);
    video.timestamps.push_back(stamp);
    spoken[second - begin].push_back(word);
    t += gap(rng);
  }

  for (std::size_t s = begin; s < end; ++s) {
    RowVectorXr row = RowVectorXr::Zero(d);
    if (topic >= 0) row += cfg.topic_scale * world.prototypes.row(topic);
    const auto& words = spoken[s - begin];
    if (!words.empty()) {
      RowVectorXr mean = RowVectorXr::Zero(d);
      for (int w : words) mean += world.word_features.row(w);
      row += cfg.grounding * mean / static_cast<double>(words.size());
    }
    for (Eigen::Index k = 0; k < d; ++k) row(k) += cfg.noise * normal(rng);
    video.features.row(static_cast<Eigen::Index>(s)) = row.unaryExpr(&to_float_precision);
  }
}

std::string video_id(std::uint64_t seed, std::size_t index) {
  return "vid" + std::to_string(seed) + "_" + std::to_string(index);
}

}  // namespace

bool same_record(const SyntheticVideo& a, const SyntheticVideo& b) {
  return a.id == b.id && a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
         a.features == b.features && a.tokens == b.tokens && a.timestamps == b.timestamps;
}

void CorpusConfig::validate() const {
  if (seconds == 0) throw ConfigError("data.seconds must be positive");
  if (d_video_feat == 0) throw ConfigError("data.d_video_feat must be positive");
  if (n_topics == 0 || words_per_topic == 0) throw ConfigError("data.n_topics and words_per_topic must be positive");
  if (first_regular_id < 0 || static_cast<std::size_t>(first_regular_id) >= vocab_size) {
    throw ConfigError("data.vocab_size leaves no regular words");
  }
  if (n_topics * words_per_topic > vocab_size - static_cast<std::size_t>(first_regular_id)) {
    throw ConfigError("data: n_topics * words_per_topic exceeds the regular vocabulary");
  }
  if (!(tokens_per_second > 0.0)) throw ConfigError("data.tokens_per_second must be positive");
  if (topic_word_prob < 0.0 || topic_word_prob > 1.0) throw ConfigError("data.topic_word_prob must lie in [0, 1]");
  if (noise < 0.0) throw ConfigError("data.noise must be non-negative");
}

SyntheticWorld make_world(const CorpusConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.world_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(cfg.d_video_feat);
  SyntheticWorld world;
  world.prototypes.resize(static_cast<Eigen::Index>(cfg.n_topics), d);
  for (Eigen::Index i = 0; i < world.prototypes.size(); ++i) world.prototypes.data()[i] = normal(rng);
  world.word_features.resize(static_cast<Eigen::Index>(cfg.vocab_size), d);
  for (Eigen::Index i = 0; i < world.word_features.size(); ++i) world.word_features.data()[i] = normal(rng);
  std::vector<int> regular(cfg.vocab_size - static_cast<std::size_t>(cfg.first_regular_id));
  std::iota(regular.begin(), regular.end(), cfg.first_regular_id);
  std::shuffle(regular.begin(), regular.end(), rng);
  for (std::size_t k = 0; k < cfg.n_topics; ++k) {
    world.topic_words.emplace_back(regular.begin() + static_cast<std::ptrdiff_t>(k * cfg.words_per_topic),
                                   regular.begin() + static_cast<std::ptrdiff_t>((k + 1) * cfg.words_per_topic));
  }
  return world;
}

std::vector<SyntheticVideo> generate_corpus(std::size_t n_videos, std::uint64_t seed, const CorpusConfig& config) {
  if (n_videos == 0) throw ConfigError("generate_corpus: n_videos must be at least 1");
  const SyntheticWorld world = make_world(config);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> topic_dist(0, static_cast<int>(config.n_topics) - 1);
  std::vector<SyntheticVideo> out;
  out.reserve(n_videos);
  for (std::size_t i = 0; i < n_videos; ++i) {
    SyntheticVideo v;
    v.id = video_id(seed, i);
    v.topic = topic_dist(rng);
    v.features.resize(static_cast<Eigen::Index>(config.seconds), static_cast<Eigen::Index>(config.d_video_feat));
    fill_span(v, 0, config.seconds, v.topic, world, config, rng);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<LabeledVideo> generate_segmented_corpus(std::size_t n_videos, std::uint64_t seed,
                                                    const CorpusConfig& config,
                                                    const SegmentedCorpusConfig& segments) {
  if (n_videos == 0) throw ConfigError("generate_segmented_corpus: n_videos must be at least 1");
  if (segments.frames == 0 || segments.min_segment == 0 || segments.min_segment > segments.max_segment) {
    throw ConfigError("segmented corpus needs frames > 0 and 0 < min_segment <= max_segment");
  }
  const SyntheticWorld world = make_world(config);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> topic_dist(0, static_cast<int>(config.n_topics) - 1);
  std::uniform_int_distribution<std::size_t> length_dist(segments.min_segment, segments.max_segment);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<LabeledVideo> out;
  for (std::size_t i = 0; i < n_videos; ++i) {
    LabeledVideo lv;
    lv.video.id = "seg" + std::to_string(seed) + "_" + std::to_string(i);
    lv.video.features.resize(static_cast<Eigen::Index>(segments.frames),
                             static_cast<Eigen::Index>(config.d_video_feat));
    std::size_t at = 0;
    while (at < segments.frames) {
      const std::size_t end = std::min(segments.frames, at + length_dist(rng));
      const int topic = unit(rng) < segments.background_prob ? -1 : topic_dist(rng);
      fill_span(lv.video, at, end, topic, world, config, rng);
      lv.frame_labels.insert(lv.frame_labels.end(), end - at, topic + 1);
      at = end;
    }
    out.push_back(std::move(lv));
  }
  return out;
}

void check_compatible(const CorpusConfig& corpus, const ModelConfig& model) {
  if (corpus.d_video_feat != model.d_video_feat) {
    throw ConfigError("data.d_video_feat " + std::to_string(corpus.d_video_feat) + " does not match model width " +
                      std::to_string(model.d_video_feat));
  }
  if (corpus.vocab_size > model.vocab_size) throw ConfigError("data.vocab_size exceeds the model vocabulary");
}

void check_compatible(const std::vector<SyntheticVideo>& videos, const ModelConfig& model) {
  for (const auto& v : videos) {
    if (v.features.cols() != static_cast<Eigen::Index>(model.d_video_feat)) {
      throw ConfigError("video " + v.id + " has feature width " + std::to_string(v.features.cols()) +
                        ", model expects " + std::to_string(model.d_video_feat));
    }
    for (int t : v.tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= model.vocab_size) {
        throw ConfigError("video " + v.id + " holds token id " + std::to_string(t) + " outside the vocabulary");
      }
    }
  }
}

}  // namespace vlm
