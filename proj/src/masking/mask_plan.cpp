#include "vlm/masking/mask_plan.hpp"

#include "vlm/errors.hpp"

#include <string>

namespace vlm {

void MaskingConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(p_mmm)) throw ConfigError("p_mmm must lie in [0, 1], got " + std::to_string(p_mmm));
  if (!in_unit(p_token)) throw ConfigError("p_token must lie in [0, 1], got " + std::to_string(p_token));
  if (!in_unit(mask_token_fraction) || !in_unit(random_token_fraction) ||
      mask_token_fraction + random_token_fraction > 1.0) {
    throw ConfigError("text corruption fractions must be in [0, 1] and sum to at most 1");
  }
}

const char* scheme_name(MaskScheme scheme) {
  switch (scheme) {
    case MaskScheme::mfm_mlm:
      return "mfm_mlm";
    case MaskScheme::mmm_video:
      return "mmm_video";
    case MaskScheme::mmm_text:
      return "mmm_text";
  }
  return "unknown";
}

MaskPlan sample_mask_plan(const SequenceLayout& layout, std::mt19937_64& rng, const MaskingConfig& masking,
                          const ModelConfig& model) {
  masking.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MaskPlan plan;
  const std::size_t n = layout.padded_length();
  plan.actions.assign(n, MaskAction::keep);
  plan.replacement_ids.assign(n, -1);

  const double u = unit(rng);
  if (u < masking.p_mmm / 2.0) {
    plan.scheme = MaskScheme::mmm_video;
  } else if (u < masking.p_mmm) {
    plan.scheme = MaskScheme::mmm_text;
  } else {
    plan.scheme = MaskScheme::mfm_mlm;
  }

  const std::size_t v0 = layout.video_begin(), t0 = layout.text_begin();
  switch (plan.scheme) {
    case MaskScheme::mmm_video:
      for (std::size_t i = 0; i < layout.video_count; ++i) plan.actions[v0 + i] = MaskAction::mask_zero;
      break;
    case MaskScheme::mmm_text:
      for (std::size_t i = 0; i < layout.text_count; ++i) plan.actions[t0 + i] = MaskAction::mask_token;
      break;
    case MaskScheme::mfm_mlm: {
      auto select = [&](std::size_t count) {
        std::vector<bool> chosen(count);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < count; ++i) {
          chosen[i] = unit(rng) < masking.p_token;
          hits += chosen[i] ? 1 : 0;
        }
        if (count > 0 && hits == count) {
          std::uniform_int_distribution<std::size_t> pick(0, count - 1);
          chosen[pick(rng)] = false;
        }
        return chosen;
      };
      const auto video = select(layout.video_count);
      const auto text = select(layout.text_count);
      for (std::size_t i = 0; i < video.size(); ++i) {
        if (video[i]) plan.actions[v0 + i] = MaskAction::mask_zero;
      }
      std::uniform_int_distribution<int> word(model.tokens.first_regular_id, static_cast<int>(model.vocab_size) - 1);
      for (std::size_t i = 0; i < text.size(); ++i) {
        if (!text[i]) continue;
        const double r = unit(rng);
        if (r < masking.mask_token_fraction) {
          plan.actions[t0 + i] = MaskAction::mask_token;
        } else if (r < masking.mask_token_fraction + masking.random_token_fraction) {
          plan.actions[t0 + i] = MaskAction::random_token;
          plan.replacement_ids[t0 + i] = word(rng);
        } else {
          plan.actions[t0 + i] = MaskAction::keep_predict;
        }
      }
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (plan.actions[i] != MaskAction::keep) plan.predict_positions.push_back(i);
  }
  return plan;
}

MaskedLayout apply_mask_plan(const SequenceLayout& layout, const MaskPlan& plan, const ModelConfig& model) {
  if (plan.actions.size() != layout.padded_length() || plan.replacement_ids.size() != layout.padded_length()) {
    throw ContractViolation("mask plan length does not match the sequence layout");
  }
  MaskedLayout out{layout, std::vector<double>(layout.video_count, 1.0), {}, {}, {}};
  for (std::size_t i = 0; i < layout.padded_length(); ++i) {
    const MaskAction action = plan.actions[i];
    if (action == MaskAction::keep) continue;
    const TokenKind kind = layout.kinds[i];
    if (action == MaskAction::mask_zero) {
      if (kind != TokenKind::video) throw ContractViolation("plan zeroes non-video position " + std::to_string(i));
      const std::size_t v = i - layout.video_begin();
      out.video_keep[v] = 0.0;
      out.predict_video.push_back(v);
      continue;
    }
    if (kind != TokenKind::text) throw ContractViolation("plan corrupts non-text position " + std::to_string(i));
    out.predict_text.push_back(i);
    out.text_targets.push_back(layout.token_ids[i]);
    if (action == MaskAction::mask_token) {
      out.layout.token_ids[i] = model.tokens.mask;
    } else if (action == MaskAction::random_token) {
      const int id = plan.replacement_ids[i];
      if (id < model.tokens.first_regular_id || static_cast<std::size_t>(id) >= model.vocab_size) {
        throw ContractViolation("plan carries an invalid replacement id at " + std::to_string(i));
      }
      out.layout.token_ids[i] = id;
    }
  }
  return out;
}

MaskedSequence apply_mask_plan(const MultimodalSequence& sequence, const MaskPlan& plan, const ModelConfig& model) {
  MaskedLayout masked = apply_mask_plan(sequence.layout, plan, model);
  MaskedSequence out{MultimodalSequence{masked.layout, sequence.video_tokens}, {}};
  out.targets.positions = plan.predict_positions;
  out.targets.video.resize(static_cast<Eigen::Index>(masked.predict_video.size()), sequence.video_tokens.cols());
  for (std::size_t k = 0; k < masked.predict_video.size(); ++k) {
    const auto v = static_cast<Eigen::Index>(masked.predict_video[k]);
    out.targets.video.row(static_cast<Eigen::Index>(k)) = sequence.video_tokens.row(v);
    out.sequence.video_tokens.row(v).setZero();
  }
  out.targets.text_ids = masked.text_targets;
  return out;
}

}  // namespace vlm
