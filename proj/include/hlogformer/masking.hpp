#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "hlogformer/errors.hpp"
#include "hlogformer/rng.hpp"
#include "hlogformer/segments.hpp"

namespace hlog {

struct MaskedToken {
  std::size_t step = 0;    // index into SegmentPlan::steps
  std::size_t offset = 0;  // position inside that step's segment
  TokenOrigin origin;      // identity shared with the linearized record
  int target = 0;          // original token id

  bool operator==(const MaskedToken&) const = default;
};

/// Masked positions in (step, offset) order with their original ids.
struct MaskPlan {
  std::vector<MaskedToken> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool operator==(const MaskPlan&) const = default;
};

inline std::size_t masked_count(std::size_t maskable, double rate) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(rate * static_cast<double>(maskable))));
}

/// Uniform sampling without replacement among key/value tokens with
/// regular ids; every selected token is replaced by MASK.
inline MaskPlan apply_masking(const SegmentPlan& plan, double rate, Rng& rng) {
  if (!(rate > 0.0 && rate < 1.0)) throw config_error("mask rate must be in (0, 1)");
  std::vector<MaskedToken> candidates;
  for (std::size_t s = 0; s < plan.steps.size(); ++s) {
    const Segment& seg = plan.steps[s];
    for (std::size_t o = 0; o < seg.token_ids.size(); ++o) {
      if (is_maskable(seg.origins[o], seg.token_ids[o]))
        candidates.push_back({s, o, seg.origins[o], seg.token_ids[o]});
    }
  }
  if (candidates.empty()) throw NoMaskablePositions();
  MaskPlan out;
  for (std::size_t i : sample_without_replacement(candidates.size(),
                                                  masked_count(candidates.size(), rate), rng))
    out.entries.push_back(candidates[i]);
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    return a.step != b.step ? a.step < b.step : a.offset < b.offset;
  });
  return out;
}

}  // namespace hlog
