#include "doctest.h"
#include "support/fixtures.hpp"
#include "vlm/errors.hpp"
#include "vlm/masking/attention_mask.hpp"
#include "vlm/masking/mask_plan.hpp"

#include <cmath>

using namespace vlm;

namespace {

const ModelConfig kDesk = ModelConfig::desk();

SequenceLayout layout(std::size_t m, std::size_t n, std::size_t padded = 0) {
  return assemble_layout(m, std::vector<int>(n, 11), kDesk, padded ? padded : m + n + 3);
}

bool allowed(const AttentionMask& a, std::size_t i, std::size_t j) {
  return a.allow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

}  // namespace

TEST_CASE("full mask: all-true without padding, PAD rows and columns blocked") {
  CHECK(build_full_mask(layout(2, 2)).allow.all());
  const auto a = build_full_mask(layout(2, 2, 10));
  CHECK(a.allow.topLeftCorner(7, 7).all());
  CHECK(!a.allow.rightCols(3).any());
  CHECK(!a.allow.bottomRows(3).any());
}

TEST_CASE("isolated mask: golden grid for two video and two text tokens") {
  const auto a = build_isolated_mask(layout(2, 2));
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      const bool want = (i == 0 && j == 0) || (i >= 1 && i <= 3 && j >= 1 && j <= 3) || (i >= 4 && j >= 4);
      CHECK(allowed(a, i, j) == want);
    }
  }
  CHECK(format_mask_grid(a.allow) == "1000000\n0111000\n0111000\n0111000\n0000111\n0000111\n0000111\n");
}

TEST_CASE("caption mask: first text token and video rows") {
  const auto L = layout(3, 4, 12);
  const auto a = build_caption_mask(L);
  const std::size_t t1 = L.text_begin();
  for (std::size_t j = 0; j < L.padded_length(); ++j) CHECK(allowed(a, t1, j) == (j <= t1));
  for (std::size_t i = 0; i <= L.first_sep(); ++i) {
    for (std::size_t j = L.text_begin(); j <= L.second_sep(); ++j) CHECK(!allowed(a, i, j));
  }
  CHECK(format_mask_grid(build_caption_mask(layout(1, 2)).allow) == "111000\n111000\n111000\n111100\n111110\n111111\n");
}

TEST_CASE("mask invariants hold for every geometry and shape") {
  for (MaskGeometry g : {MaskGeometry::full, MaskGeometry::isolated, MaskGeometry::caption_causal}) {
    for (std::size_t m = 1; m <= 8; m += 3) {
      for (std::size_t n = 1; n <= 12; n += 4) {
        const auto L = layout(m, n, 32);
        const auto a = build_mask(g, L);
        CHECK_NOTHROW(validate_mask(a, L));
        for (std::size_t i = 0; i < L.length(); ++i) CHECK(a.allow.row(static_cast<Eigen::Index>(i)).any());
        for (std::size_t j = L.length(); j < 32; ++j) CHECK(!a.allow.col(static_cast<Eigen::Index>(j)).any());
        const auto vb = static_cast<Eigen::Index>(L.video_begin());
        const auto tb = static_cast<Eigen::Index>(L.text_begin());
        const auto vn = static_cast<Eigen::Index>(m + 1);
        const auto tn = static_cast<Eigen::Index>(n + 1);
        if (g == MaskGeometry::isolated) {
          CHECK(!a.allow.block(vb, tb, vn, tn).any());
          CHECK(!a.allow.block(tb, vb, tn, vn).any());
        }
        if (g == MaskGeometry::caption_causal) {
          for (Eigen::Index i = 0; i < tn; ++i) {
            for (Eigen::Index j = 0; j < tn; ++j) CHECK(a.allow(tb + i, tb + j) == (j <= i));
          }
        }
      }
    }
  }
}

TEST_CASE("validate_mask catches a broken block") {
  const auto L = layout(2, 2);
  auto a = build_isolated_mask(L);
  a.allow(1, 5) = true;
  CHECK_THROWS_AS(validate_mask(a, L), ContractViolation);
  CHECK_THROWS_AS(parse_geometry("diagonal"), ConfigError);
  CHECK(parse_geometry(geometry_name(MaskGeometry::caption_causal)) == MaskGeometry::caption_causal);
}

TEST_CASE("mask plan: whole-text branch masks every text token and no video") {
  const auto L = layout(4, 6, 32);
  MaskingConfig cfg;
  cfg.p_mmm = 1.0;
  bool seen = false;
  for (std::uint64_t seed = 0; seed < 20 && !seen; ++seed) {
    std::mt19937_64 rng(seed);
    const MaskPlan plan = sample_mask_plan(L, rng, cfg, kDesk);
    if (plan.scheme != MaskScheme::mmm_text) continue;
    seen = true;
    for (std::size_t i = 0; i < L.padded_length(); ++i) {
      const MaskAction want = L.kinds[i] == TokenKind::text ? MaskAction::mask_token : MaskAction::keep;
      CHECK(plan.actions[i] == want);
    }
    CHECK(plan.predict_positions.size() == 6);
  }
  CHECK(seen);
}

TEST_CASE("mask plan: p_mmm = 0 always picks token masking with strict subsets") {
  const auto L = layout(3, 4, 32);
  MaskingConfig cfg;
  cfg.p_mmm = 0.0;
  cfg.p_token = 0.9;
  std::mt19937_64 rng(1);
  for (int k = 0; k < 500; ++k) {
    const MaskPlan plan = sample_mask_plan(L, rng, cfg, kDesk);
    CHECK(plan.scheme == MaskScheme::mfm_mlm);
    std::size_t video = 0, text = 0;
    for (std::size_t i = 0; i < L.padded_length(); ++i) {
      video += plan.actions[i] == MaskAction::mask_zero;
      text += L.kinds[i] == TokenKind::text && plan.actions[i] != MaskAction::keep;
      if (L.kinds[i] == TokenKind::cls || L.kinds[i] == TokenKind::sep || L.kinds[i] == TokenKind::pad) {
        CHECK(plan.actions[i] == MaskAction::keep);
      }
    }
    CHECK(video < 3);
    CHECK(text < 4);
  }
}

TEST_CASE("mask plan: whole-modality plans never mix modalities and replay from a seed") {
  const auto L = layout(5, 7, 32);
  MaskingConfig cfg;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    std::mt19937_64 a(seed), b(seed);
    const MaskPlan p = sample_mask_plan(L, a, cfg, kDesk);
    const MaskPlan q = sample_mask_plan(L, b, cfg, kDesk);
    CHECK(p.actions == q.actions);
    CHECK(p.replacement_ids == q.replacement_ids);
    if (p.scheme == MaskScheme::mfm_mlm) continue;
    for (std::size_t i = 0; i < L.padded_length(); ++i) {
      const bool touched = p.actions[i] != MaskAction::keep;
      if (p.scheme == MaskScheme::mmm_video) CHECK(touched == (L.kinds[i] == TokenKind::video));
      if (p.scheme == MaskScheme::mmm_text) CHECK(touched == (L.kinds[i] == TokenKind::text));
    }
  }
}

TEST_CASE("mask plan statistics over 10,000 draws") {
  const auto L = layout(8, 12, 32);
  const MaskingConfig cfg;
  std::mt19937_64 rng(2024);
  const int draws = 10000;
  int video = 0, text = 0;
  double masked = 0.0, positions = 0.0;
  for (int k = 0; k < draws; ++k) {
    const MaskPlan p = sample_mask_plan(L, rng, cfg, kDesk);
    video += p.scheme == MaskScheme::mmm_video;
    text += p.scheme == MaskScheme::mmm_text;
    if (p.scheme == MaskScheme::mfm_mlm) {
      for (std::size_t i = 0; i < L.padded_length(); ++i) {
        if (L.kinds[i] != TokenKind::video && L.kinds[i] != TokenKind::text) continue;
        masked += p.actions[i] != MaskAction::keep;
        positions += 1.0;
      }
    }
  }
  const double band = 3.0 * std::sqrt(0.25 * 0.75 / draws);
  CHECK(std::abs(video / double(draws) - 0.25) <= band);
  CHECK(std::abs(text / double(draws) - 0.25) <= band);
  const double rate = masked / positions;
  CHECK(std::abs(rate - 0.15) <= 3.0 * std::sqrt(0.15 * 0.85 / positions));
}

TEST_CASE("apply plan: identity plan, zeroed video and keep-predict text") {
  const ModelConfig c = vlm::testing::tiny_config();
  std::mt19937_64 rng(7);
  const MatrixXr tokens = MatrixXr::Random(3, 16);
  const MultimodalSequence s = assemble_sequence(tokens, std::vector<int>{10, 11, 12}, c);

  MaskPlan none;
  none.actions.assign(s.layout.padded_length(), MaskAction::keep);
  none.replacement_ids.assign(s.layout.padded_length(), -1);
  const auto id = apply_mask_plan(s, none, c);
  CHECK(id.sequence.video_tokens == s.video_tokens);
  CHECK(id.sequence.layout.token_ids == s.layout.token_ids);
  CHECK(id.targets.positions.empty());

  MaskPlan video = none;
  video.scheme = MaskScheme::mmm_video;
  for (std::size_t i = 1; i <= 3; ++i) {
    video.actions[i] = MaskAction::mask_zero;
    video.predict_positions.push_back(i);
  }
  const auto zeroed = apply_mask_plan(s, video, c);
  CHECK(zeroed.sequence.video_tokens.isZero(0.0));
  CHECK(zeroed.targets.video == tokens);

  MaskPlan keep = none;
  keep.actions[s.layout.text_begin() + 1] = MaskAction::keep_predict;
  keep.predict_positions.push_back(s.layout.text_begin() + 1);
  const auto kept = apply_mask_plan(s, keep, c);
  CHECK(kept.sequence.layout.token_ids == s.layout.token_ids);
  CHECK(kept.targets.positions == std::vector<std::size_t>{s.layout.text_begin() + 1});
  CHECK(kept.targets.text_ids == std::vector<int>{11});
}
