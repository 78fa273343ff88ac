#include "vlm/masking/attention_mask.hpp"

#include "vlm/errors.hpp"

#include <vector>

namespace vlm {
namespace {

enum class Side { cls, video, text, pad };

// Which diagonal block each position belongs to.
std::vector<Side> sides(const SequenceLayout& layout) {
  std::vector<Side> out(layout.padded_length(), Side::pad);
  out[0] = Side::cls;
  for (std::size_t i = layout.video_begin(); i <= layout.first_sep(); ++i) out[i] = Side::video;
  for (std::size_t i = layout.text_begin(); i <= layout.second_sep(); ++i) out[i] = Side::text;
  return out;
}

BoolMatrix blank(const SequenceLayout& layout) {
  const auto n = static_cast<Eigen::Index>(layout.padded_length());
  return BoolMatrix::Constant(n, n, false);
}

}  // namespace

AttentionMask build_full_mask(const SequenceLayout& layout) {
  BoolMatrix allow = blank(layout);
  const auto n = static_cast<Eigen::Index>(layout.length());
  allow.topLeftCorner(n, n).setConstant(true);
  return {std::move(allow), MaskGeometry::full};
}

AttentionMask build_isolated_mask(const SequenceLayout& layout) {
  BoolMatrix allow = blank(layout);
  allow(0, 0) = true;
  const auto video_begin = static_cast<Eigen::Index>(layout.video_begin());
  const auto video_span = static_cast<Eigen::Index>(layout.video_count + 1);
  const auto text_begin = static_cast<Eigen::Index>(layout.text_begin());
  const auto text_span = static_cast<Eigen::Index>(layout.text_count + 1);
  allow.block(video_begin, video_begin, video_span, video_span).setConstant(true);
  allow.block(text_begin, text_begin, text_span, text_span).setConstant(true);
  return {std::move(allow), MaskGeometry::isolated};
}

AttentionMask build_caption_mask(const SequenceLayout& layout) {
  if (layout.text_count == 0) throw ContractViolation("caption mask needs a non-empty text block");
  BoolMatrix allow = blank(layout);
  const auto video_side = static_cast<Eigen::Index>(layout.first_sep() + 1);  // [CLS] + video + [SEP]
  allow.topLeftCorner(video_side, video_side).setConstant(true);
  const auto text_begin = static_cast<Eigen::Index>(layout.text_begin());
  const auto text_end = static_cast<Eigen::Index>(layout.second_sep());
  for (Eigen::Index i = text_begin; i <= text_end; ++i) {
    allow.row(i).head(video_side).setConstant(true);
    for (Eigen::Index j = text_begin; j <= i; ++j) allow(i, j) = true;
  }
  return {std::move(allow), MaskGeometry::caption_causal};
}

AttentionMask build_mask(MaskGeometry geometry, const SequenceLayout& layout) {
  switch (geometry) {
    case MaskGeometry::full:
      return build_full_mask(layout);
    case MaskGeometry::isolated:
      return build_isolated_mask(layout);
    case MaskGeometry::caption_causal:
      return build_caption_mask(layout);
  }
  throw ContractViolation("unknown mask geometry");
}

void validate_mask(const AttentionMask& mask, const SequenceLayout& layout) {
  const auto n = static_cast<Eigen::Index>(layout.padded_length());
  const BoolMatrix& a = mask.allow;
  if (a.rows() != n || a.cols() != n) throw ContractViolation("mask shape does not match layout");
  const auto side = sides(layout);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Side si = side[static_cast<std::size_t>(i)];
    if (si == Side::pad) {
      if (a.col(i).any()) throw ContractViolation("PAD column " + std::to_string(i) + " is readable");
      continue;
    }
    if (!a.row(i).any()) throw ContractViolation("row " + std::to_string(i) + " allows no key");
    for (Eigen::Index j = 0; j < n; ++j) {
      const Side sj = side[static_cast<std::size_t>(j)];
      if (sj == Side::pad) continue;
      bool expected = true;
      switch (mask.geometry) {
        case MaskGeometry::full:
          break;
        case MaskGeometry::isolated:
          expected = (si == Side::cls) ? (j == 0) : (si == sj);
          break;
        case MaskGeometry::caption_causal:
          expected = (si == Side::text) ? (sj != Side::text || j <= i) : (sj != Side::text);
          break;
      }
      if (a(i, j) != expected) {
        throw ContractViolation("mask entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") breaks the " + std::string(geometry_name(mask.geometry)) + " structure");
      }
    }
  }
}

std::string format_mask_grid(const BoolMatrix& allow) {
  std::string out;
  out.reserve(static_cast<std::size_t>(allow.rows() * (allow.cols() + 1)));
  for (Eigen::Index i = 0; i < allow.rows(); ++i) {
    for (Eigen::Index j = 0; j < allow.cols(); ++j) out.push_back(allow(i, j) ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

MaskGeometry parse_geometry(std::string_view name) {
  if (name == "full") return MaskGeometry::full;
  if (name == "isolated") return MaskGeometry::isolated;
  if (name == "caption" || name == "caption_causal") return MaskGeometry::caption_causal;
  throw ConfigError("unknown mask geometry '" + std::string(name) + "' (expected full, isolated or caption)");
}

std::string_view geometry_name(MaskGeometry geometry) {
  switch (geometry) {
    case MaskGeometry::full:
      return "full";
    case MaskGeometry::isolated:
      return "isolated";
    case MaskGeometry::caption_causal:
      return "caption";
  }
  return "unknown";
}

}  // namespace vlm
