#pragma once

// Attention-memory accounting. The cost of one encoder window of n rows is
// n², the size of its attention matrix; a pass costs the sum over windows.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "hlogformer/hlogformer.hpp"

namespace hlog {

struct AttentionCost {
  std::size_t tokens = 0;             // L
  std::size_t steps = 0;
  std::size_t hierarchical = 0;       // one pass: sum_t (k + n_t + k)^2
  std::size_t passes = 1;
  std::size_t hierarchical_total = 0; // all passes
  std::size_t max_window = 0;         // largest hierarchical window
  std::size_t flat = 0;               // sum over W-windows of n^2
  std::size_t flat_windows = 0;

  double ratio() const {
    return flat == 0 ? 0.0 : static_cast<double>(hierarchical) / static_cast<double>(flat);
  }

  AttentionCost& operator+=(const AttentionCost& o) {
    tokens += o.tokens;
    steps += o.steps;
    hierarchical += o.hierarchical;
    hierarchical_total += o.hierarchical_total;
    max_window = std::max(max_window, o.max_window);
    flat += o.flat;
    flat_windows += o.flat_windows;
    return *this;
  }
};

/// Flat cost of `linear_len` tokens cut into windows of at most `window`.
inline std::size_t flat_cost(std::size_t linear_len, std::size_t window, std::size_t* windows = nullptr) {
  std::size_t cost = 0, count = 0;
  for (std::size_t start = 0; start < linear_len; start += window, ++count) {
    const std::size_t n = std::min(window, linear_len - start);
    cost += n * n;
  }
  if (windows) *windows = count;
  return cost;
}

/// `slots` may be zero here (pure segment accounting), unlike the model.
inline AttentionCost attention_cost(std::span<const std::size_t> segment_lengths, std::size_t slots,
                                    std::size_t linear_len, std::size_t window, std::size_t passes = 1) {
  AttentionCost c;
  c.tokens = linear_len;
  c.steps = segment_lengths.size();
  c.passes = passes;
  for (std::size_t n : segment_lengths) {
    const std::size_t w = slots + n + slots;
    c.hierarchical += w * w;
    c.max_window = std::max(c.max_window, w);
  }
  c.hierarchical_total = c.hierarchical * passes;
  c.flat = flat_cost(linear_len, window, &c.flat_windows);
  return c;
}

inline std::size_t passes_for(Mode m) { return m == Mode::Bidirectional ? 2 : 1; }

inline AttentionCost attention_cost(const PreparedRecord& rec, const EncoderConfig& cfg,
                                    Mode mode = Mode::Bidirectional) {
  std::vector<std::size_t> lens;
  for (const auto& s : rec.plan.steps) lens.push_back(s.token_ids.size());
  return attention_cost(lens, cfg.summary_slots, rec.linear.token_ids.size(), cfg.window,
                        passes_for(mode));
}

}  // namespace hlog
