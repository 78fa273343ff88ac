#pragma once

#include "vlm/model/config.hpp"
#include "vlm/numerics/matrix.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vlm {

// One video: per-second features plus a timestamped token stream. Values
// are kept at float precision so they survive the feature file unchanged.
struct SyntheticVideo {
  std::string id;
  MatrixXr features;               // seconds x d_video_feat
  std::vector<int> tokens;
  std::vector<double> timestamps;  // seconds, non-decreasing, one per token
  int topic = -1;                  // -1 when unknown (e.g. read from a file)
};

bool same_record(const SyntheticVideo& a, const SyntheticVideo& b);

// Generative story: every video draws a latent topic. Words come from the
// topic's word list with probability `topic_word_prob`, otherwise uniformly
// from the regular vocabulary, at Poisson times with rate `tokens_per_second`.
// The feature of second s is
//   topic_scale * prototype[topic] + grounding * mean(word_feature[w] for w spoken in s) + noise * N(0, 1).
// Prototypes, word features and word lists depend only on `world_seed`, so
// corpora drawn with different seeds share one world.
struct CorpusConfig {
  std::size_t seconds = 60;
  std::size_t d_video_feat = 16;
  std::size_t vocab_size = 512;
  int first_regular_id = 5;
  std::size_t n_topics = 128;
  std::size_t words_per_topic = 3;
  double topic_word_prob = 0.8;
  double tokens_per_second = 2.0;
  double topic_scale = 1.0;
  double grounding = 1.0;
  double noise = 0.1;
  std::uint64_t world_seed = 7;

  void validate() const;
};

std::vector<SyntheticVideo> generate_corpus(std::size_t n_videos, std::uint64_t seed, const CorpusConfig& config);

// The shared world behind a corpus configuration.
struct SyntheticWorld {
  MatrixXr prototypes;                        // n_topics x d_video_feat
  MatrixXr word_features;                     // vocab_size x d_video_feat
  std::vector<std::vector<int>> topic_words;  // n_topics lists
};

SyntheticWorld make_world(const CorpusConfig& config);

// Long videos made of consecutive segments, each either a topic segment
// (label topic + 1) or background (label 0), for segmentation and step
// localization.
struct LabeledVideo {
  SyntheticVideo video;
  std::vector<int> frame_labels;  // one per second
};

struct SegmentedCorpusConfig {
  std::size_t frames = 24;
  std::size_t min_segment = 3;
  std::size_t max_segment = 8;
  double background_prob = 0.2;
};

std::vector<LabeledVideo> generate_segmented_corpus(std::size_t n_videos, std::uint64_t seed,
                                                    const CorpusConfig& config,
                                                    const SegmentedCorpusConfig& segments);

// Throws ConfigError when feature width or vocabulary disagree with the model.
void check_compatible(const CorpusConfig& corpus, const ModelConfig& model);
void check_compatible(const std::vector<SyntheticVideo>& videos, const ModelConfig& model);

}  // namespace vlm
