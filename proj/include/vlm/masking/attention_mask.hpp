#pragma once

#include "vlm/model/sequence.hpp"
#include "vlm/numerics/matrix.hpp"

#include <string>
#include <string_view>

namespace vlm {

enum class MaskGeometry { full, isolated, caption_causal };

struct AttentionMask {
  BoolMatrix allow;  // allow(i, j): query i may read key j
  MaskGeometry geometry = MaskGeometry::full;
};

// Every non-PAD position attends to every non-PAD position.
AttentionMask build_full_mask(const SequenceLayout& layout);

// Two diagonal squares: (video block + first [SEP]) and (text block + second
// [SEP]). [CLS] attends only to itself and no other row reads it.
AttentionMask build_isolated_mask(const SequenceLayout& layout);

// [CLS], the video block and the first [SEP] attend bidirectionally among
// themselves and never to text. Text rows (the second [SEP] counts as the
// last text row) read the whole video side plus text positions up to and
// including their own.
AttentionMask build_caption_mask(const SequenceLayout& layout);

AttentionMask build_mask(MaskGeometry geometry, const SequenceLayout& layout);

// Checks the shared invariants (PAD columns false, no empty non-PAD row)
// and the geometry's block structure. Throws ContractViolation.
void validate_mask(const AttentionMask& mask, const SequenceLayout& layout);

// One row per line, '1' allowed and '0' blocked, trailing newline.
std::string format_mask_grid(const BoolMatrix& allow);

MaskGeometry parse_geometry(std::string_view name);
std::string_view geometry_name(MaskGeometry geometry);

}  // namespace vlm
