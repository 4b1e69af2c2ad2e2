#pragma once

// Summary-vector recurrence over a segment schedule.
//
// Every step encodes one window laid out as
//
//   [ k rows: incoming summary (dense) | segment tokens | k SUM placeholders ]
//
// with positions added across the whole window. The hidden states at the
// segment rows are the step's token representations Z, and the hidden
// states at the trailing SUM rows become the outgoing summary. The summary
// is one sequential chain through the steps: forward (children before
// parents), then in bidirectional mode a reverse pass seeded with the
// forward pass's final summary.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hlogformer/encoder.hpp"
#include "hlogformer/masking.hpp"
#include "hlogformer/segments.hpp"

namespace hlog {

enum class Mode { Bidirectional, ForwardOnly, NoSummary, Flat };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Bidirectional: return "hlog";
    case Mode::ForwardOnly: return "forward-only";
    case Mode::NoSummary: return "no-summary";
    case Mode::Flat: return "flat";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "hlog" || s == "bidirectional") return Mode::Bidirectional;
  if (s == "forward-only") return Mode::ForwardOnly;
  if (s == "no-summary") return Mode::NoSummary;
  if (s == "flat") return Mode::Flat;
  throw config_error("unknown mode '" + s + "' (expected hlog|flat|forward-only|no-summary)");
}

template <class T>
struct SummaryState {
  Matrix<T> slots;  // k x d
};

template <class T>
struct StepOutput {
  Matrix<T> z;  // n_seg x d
  SummaryState<T> sigma_next;
};

template <class T>
struct PassOutput {
  std::vector<Matrix<T>> z;  // one per step, in plan order
  SummaryState<T> final_state;
};

/// A record with everything the encoder needs precomputed.
struct PreparedRecord {
  LogTree tree;
  SegmentPlan plan;
  LinearRecord linear;
};

/// Longest segment a step may hold: the window minus both summary blocks.
inline std::size_t max_segment_len(const EncoderConfig& c) { return c.window - 2 * c.summary_slots; }

inline PreparedRecord prepare_record(LogTree tree, const Vocab& vocab, const EncoderConfig& cfg) {
  PreparedRecord r;
  r.plan = build_segments(tree, vocab, max_segment_len(cfg));
  r.linear = linearize(tree, vocab);
  r.tree = std::move(tree);
  return r;
}

template <class T>
SummaryState<T> init_summary(const EncoderStack<T>& stack) {
  return {stack.global(kSigmaInit)};
}

namespace detail {

inline constexpr double kSlotNormEps = 1e-5;

/// Summary slots enter a window layer-normalized without an affine part.
/// The carried state is a raw residual stream; normalizing it keeps its scale
/// from compounding over dozens of chained steps.
template <class T>
Matrix<T> normalize_slots(const Matrix<T>& sigma, kernels::LayerNormCache<T>* cache = nullptr) {
  const Matrix<T> ones(1, sigma.cols(), T{1}), zeros(1, sigma.cols());
  return kernels::layer_norm_rows(sigma, ones, zeros, static_cast<T>(kSlotNormEps), cache);
}

/// Gradient with respect to the raw slots, given the gradient at the
/// normalized ones.
template <class T>
Matrix<T> normalize_slots_backward(const Matrix<T>& sigma, const Matrix<T>& dnormalized) {
  kernels::LayerNormCache<T> cache;
  normalize_slots(sigma, &cache);
  const Matrix<T> ones(1, sigma.cols(), T{1});
  Matrix<T> dscale(1, sigma.cols()), dshift(1, sigma.cols());
  return kernels::layer_norm_rows_backward(dnormalized, cache, ones, dscale, dshift);
}

template <class T>
Matrix<T> window_input(const EncoderStack<T>& stack, const Matrix<T>* sigma,
                       std::span<const int> ids) {
  const auto& cfg = stack.config;
  const std::size_t k = sigma ? cfg.summary_slots : 0;
  const std::size_t n = ids.size() + 2 * k;
  if (n > cfg.window) throw WindowOverflow(n, cfg.window);
  const std::size_t d = cfg.d_model;
  const Matrix<T>& emb = stack.global(kTokEmb);
  const Matrix<T>& pos = stack.global(kPosEmb);
  const Matrix<T> slots = sigma ? normalize_slots(*sigma) : Matrix<T>{};
  Matrix<T> x(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const T* src;
    if (r < k) {
      src = slots.data() + r * d;
    } else if (r < k + ids.size()) {
      const int id = ids[r - k];
      if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
        throw data_error("token id " + std::to_string(id) + " outside vocabulary");
      src = emb.data() + static_cast<std::size_t>(id) * d;
    } else {
      src = emb.data() + static_cast<std::size_t>(kSum) * d;
    }
    const T* p = pos.data() + r * d;
    T* dst = x.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] + p[j];
  }
  return x;
}

}  // namespace detail

/// One application of the recurrence: (Z, sigma_next) = LM([sigma_prev, S, SUM...]).
template <class T>
StepOutput<T> step(const EncoderStack<T>& stack, const SummaryState<T>& sigma_prev,
                   std::span<const int> segment) {
  const std::size_t k = stack.config.summary_slots;
  Matrix<T> x = detail::window_input(stack, &sigma_prev.slots, segment);
  std::vector<char> mask(x.rows(), 1);
  Matrix<T> h = encode(stack, std::move(x), mask);
  return {slice_rows(h, k, segment.size()), {slice_rows(h, k + segment.size(), k)}};
}

/// Chains the summary through `plan.steps` in order. With `reset` every
/// step starts from the initial summary instead (the no-summary ablation).
template <class T>
PassOutput<T> forward_pass(const EncoderStack<T>& stack, const SegmentPlan& plan,
                           bool reset = false) {
  if (plan.steps.empty()) throw config_error("forward_pass: empty plan");
  PassOutput<T> out;
  SummaryState<T> sigma = init_summary(stack);
  for (const Segment& seg : plan.steps) {
    StepOutput<T> s = step(stack, reset ? init_summary(stack) : sigma, seg.token_ids);
    out.z.push_back(std::move(s.z));
    sigma = std::move(s.sigma_next);
  }
  out.final_state = std::move(sigma);
  return out;
}

/// Same mechanics over the steps in reverse order, starting from `sigma_start`.
/// Z is still indexed by plan order.
template <class T>
PassOutput<T> reverse_pass(const EncoderStack<T>& stack, const SegmentPlan& plan,
                           const SummaryState<T>& sigma_start) {
  if (plan.steps.empty()) throw config_error("reverse_pass: empty plan");
  PassOutput<T> out;
  out.z.resize(plan.steps.size());
  SummaryState<T> sigma = sigma_start;
  for (std::size_t s = plan.steps.size(); s-- > 0;) {
    StepOutput<T> r = step(stack, sigma, plan.steps[s].token_ids);
    out.z[s] = std::move(r.z);
    sigma = std::move(r.sigma_next);
  }
  out.final_state = std::move(sigma);
  return out;
}

struct RunOptions {
  Mode mode = Mode::Bidirectional;
  /// Bidirectional only: read token representations from the forward pass
  /// instead of the reverse pass. The record summary is unaffected.
  bool tokens_from_forward_pass = false;
};

template <class T>
struct RecordOutputs {
  Matrix<T> logits;            // one row per masked token, V wide
  std::vector<int> targets;    // original ids, aligned with logits rows
  Matrix<T> record_summary;    // 1 x d
  std::vector<Matrix<T>> z;    // final-pass token representations per step (per window in flat mode)
  std::optional<SummaryState<T>> forward_final;
  std::optional<SummaryState<T>> reverse_final;
};

/// Everything run_record needs to replay the record backwards.
template <class T>
struct RecordTape {
  struct Window {
    std::size_t n_seg = 0;
    bool has_summary = false;
    std::optional<std::size_t> sigma_from;  // window that produced the incoming summary
    std::vector<int> ids;
    EncodeCache<T> cache;
    Matrix<T> hidden;
  };
  std::vector<Window> windows;
  std::vector<std::pair<std::size_t, std::size_t>> gathered;  // (window, row) per masked token
  Matrix<T> z_masked;
  std::size_t summary_window = 0;  // hierarchical: window holding the final summary
  bool flat = false;
  std::size_t flat_positions = 0;
};

namespace detail {

template <class T>
std::size_t run_window(const EncoderStack<T>& stack, const Matrix<T>* sigma,
                       std::optional<std::size_t> sigma_from, std::vector<int> ids,
                       std::vector<typename RecordTape<T>::Window>& windows, bool keep_cache) {
  typename RecordTape<T>::Window w;
  w.n_seg = ids.size();
  w.has_summary = sigma != nullptr;
  w.sigma_from = sigma_from;
  Matrix<T> x = window_input(stack, sigma, ids);
  std::vector<char> mask(x.rows(), 1);
  w.hidden = encode(stack, std::move(x), mask, keep_cache ? &w.cache : nullptr);
  w.ids = std::move(ids);
  windows.push_back(std::move(w));
  return windows.size() - 1;
}

template <class T>
Matrix<T> trailing_summary(const EncoderStack<T>& stack, const typename RecordTape<T>::Window& w) {
  const std::size_t k = stack.config.summary_slots;
  return slice_rows(w.hidden, k + w.n_seg, k);
}

}  // namespace detail

/// Runs one record: masks the inputs, runs the passes selected by `opts`,
/// projects masked positions through the tied head, and averages the final
/// summary slots into the record summary (mean-pooled hidden states in flat
/// mode, which has no summary). Pass `tape` to enable backward_record.
template <class T>
RecordOutputs<T> run_record(const EncoderStack<T>& stack, const PreparedRecord& rec,
                            const MaskPlan& mask, const RunOptions& opts,
                            RecordTape<T>* tape = nullptr) {
  const auto& cfg = stack.config;
  const std::size_t d = cfg.d_model, k = cfg.summary_slots;
  RecordTape<T> local;
  RecordTape<T>& tp = tape ? *tape : local;
  tp = RecordTape<T>{};
  const bool keep = tape != nullptr;
  RecordOutputs<T> out;

  if (opts.mode == Mode::Flat) {
    tp.flat = true;
    std::vector<int> ids = rec.linear.token_ids;
    std::map<TokenOrigin, std::size_t> where;
    for (std::size_t i = 0; i < rec.linear.origins.size(); ++i) where[rec.linear.origins[i]] = i;
    std::vector<std::size_t> positions;
    for (const auto& m : mask.entries) {
      auto it = where.find(m.origin);
      if (it == where.end()) throw config_error("mask entry has no position in linearized record");
      ids[it->second] = kMask;
      positions.push_back(it->second);
    }
    const std::size_t W = cfg.window;
    for (std::size_t start = 0; start < ids.size(); start += W) {
      const std::size_t end = std::min(ids.size(), start + W);
      detail::run_window<T>(stack, nullptr, std::nullopt,
                            std::vector<int>(ids.begin() + start, ids.begin() + end), tp.windows,
                            keep);
    }
    for (std::size_t p : positions) tp.gathered.emplace_back(p / W, p % W);
    out.record_summary = Matrix<T>(1, d);
    for (const auto& w : tp.windows) {
      for (std::size_t r = 0; r < w.hidden.rows(); ++r)
        for (std::size_t j = 0; j < d; ++j) out.record_summary[j] += w.hidden(r, j);
      out.z.push_back(w.hidden);
    }
    tp.flat_positions = ids.size();
    for (std::size_t j = 0; j < d; ++j) out.record_summary[j] /= static_cast<T>(ids.size());
  } else {
    const auto& steps = rec.plan.steps;
    if (steps.empty()) throw config_error("run_record: empty plan");
    std::vector<std::vector<int>> inputs(steps.size());
    for (std::size_t s = 0; s < steps.size(); ++s) inputs[s] = steps[s].token_ids;
    for (const auto& m : mask.entries) {
      if (m.step >= steps.size() || m.offset >= inputs[m.step].size())
        throw config_error("mask entry outside the segment plan");
      inputs[m.step][m.offset] = kMask;
    }
    const Matrix<T>& sigma_init = stack.global(kSigmaInit);
    const bool reset = opts.mode == Mode::NoSummary;
    std::vector<std::size_t> fwd(steps.size()), rev(steps.size());
    std::optional<std::size_t> prev;
    for (std::size_t s = 0; s < steps.size(); ++s) {
      Matrix<T> sig;
      const Matrix<T>* sp = &sigma_init;
      if (prev && !reset) {
        sig = detail::trailing_summary<T>(stack, tp.windows[*prev]);
        sp = &sig;
      }
      fwd[s] = detail::run_window(stack, sp, reset ? std::nullopt : prev, inputs[s], tp.windows,
                                  keep);
      prev = fwd[s];
    }
    out.forward_final = SummaryState<T>{detail::trailing_summary<T>(stack, tp.windows[*prev])};
    const std::vector<std::size_t>* final_pass = &fwd;
    if (opts.mode == Mode::Bidirectional) {
      for (std::size_t s = steps.size(); s-- > 0;) {
        Matrix<T> sig = detail::trailing_summary<T>(stack, tp.windows[*prev]);
        rev[s] = detail::run_window(stack, &sig, prev, inputs[s], tp.windows, keep);
        prev = rev[s];
      }
      out.reverse_final = SummaryState<T>{detail::trailing_summary<T>(stack, tp.windows[*prev])};
      if (!opts.tokens_from_forward_pass) final_pass = &rev;
    }
    tp.summary_window = *prev;
    for (std::size_t s = 0; s < steps.size(); ++s)
      out.z.push_back(slice_rows(tp.windows[(*final_pass)[s]].hidden, k, steps[s].token_ids.size()));
    for (const auto& m : mask.entries) tp.gathered.emplace_back((*final_pass)[m.step], k + m.offset);
    const auto& last = tp.windows[tp.summary_window];
    out.record_summary = Matrix<T>(1, d);
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t j = 0; j < d; ++j) out.record_summary[j] += last.hidden(k + last.n_seg + r, j);
    for (std::size_t j = 0; j < d; ++j) out.record_summary[j] /= static_cast<T>(k);
  }

  tp.z_masked = Matrix<T>(tp.gathered.size(), d);
  for (std::size_t i = 0; i < tp.gathered.size(); ++i) {
    auto [w, r] = tp.gathered[i];
    auto src = tp.windows[w].hidden.row(r);
    std::copy(src.begin(), src.end(), tp.z_masked.row(i).begin());
  }
  out.logits = kernels::matmul_nt(tp.z_masked, stack.global(kTokEmb));
  for (const auto& m : mask.entries) out.targets.push_back(m.target);
  return out;
}

/// Accumulates into `grads` the gradient of a loss whose derivatives with
/// respect to the masked logits and the record summary are given.
template <class T>
void backward_record(const EncoderStack<T>& stack, const RecordTape<T>& tape,
                     const Matrix<T>& dlogits, const Matrix<T>& dsummary, TensorList<T>& grads) {
  const auto& cfg = stack.config;
  const std::size_t d = cfg.d_model, k = cfg.summary_slots;
  Matrix<T>& demb = grads[kTokEmb];
  Matrix<T>& dpos = grads[kPosEmb];
  Matrix<T>& dsigma_init = grads[kSigmaInit];

  std::vector<Matrix<T>> dh;
  dh.reserve(tape.windows.size());
  for (const auto& w : tape.windows) dh.emplace_back(w.hidden.rows(), d);

  if (dlogits.rows() > 0) {
    kernels::matmul_tn_acc(dlogits, tape.z_masked, demb);
    Matrix<T> dz = kernels::matmul(dlogits, stack.global(kTokEmb));
    for (std::size_t i = 0; i < tape.gathered.size(); ++i) {
      auto [w, r] = tape.gathered[i];
      for (std::size_t j = 0; j < d; ++j) dh[w](r, j) += dz(i, j);
    }
  }
  if (!dsummary.empty()) {
    if (tape.flat) {
      const T scale = T{1} / static_cast<T>(tape.flat_positions);
      for (auto& m : dh)
        for (std::size_t r = 0; r < m.rows(); ++r)
          for (std::size_t j = 0; j < d; ++j) m(r, j) += dsummary[j] * scale;
    } else {
      const auto& w = tape.windows[tape.summary_window];
      const T scale = T{1} / static_cast<T>(k);
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < d; ++j) dh[tape.summary_window](k + w.n_seg + r, j) += dsummary[j] * scale;
    }
  }

  for (std::size_t wi = tape.windows.size(); wi-- > 0;) {
    const auto& w = tape.windows[wi];
    Matrix<T> dx = encode_backward(stack, w.cache, std::move(dh[wi]), grads);
    const std::size_t kk = w.has_summary ? k : 0;
    if (kk) {
      const Matrix<T> dslots = detail::normalize_slots_backward(
          w.sigma_from ? detail::trailing_summary<T>(stack, tape.windows[*w.sigma_from]) : stack.global(kSigmaInit),
          slice_rows(dx, 0, k));
      Matrix<T>& target = w.sigma_from ? dh[*w.sigma_from] : dsigma_init;
      const std::size_t row0 = w.sigma_from ? k + tape.windows[*w.sigma_from].n_seg : 0;
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < d; ++j) target(row0 + r, j) += dslots(r, j);
    }
    for (std::size_t r = 0; r < dx.rows(); ++r) {
      auto g = dx.row(r);
      auto p = dpos.row(r);
      for (std::size_t j = 0; j < d; ++j) p[j] += g[j];
      if (r < kk) continue;
      T* dst;
      if (r < kk + w.n_seg) {
        dst = &demb(static_cast<std::size_t>(w.ids[r - kk]), 0);
      } else {
        dst = &demb(static_cast<std::size_t>(kSum), 0);
      }
      for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
    }
  }
}

}  // namespace hlog
