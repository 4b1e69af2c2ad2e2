#pragma once

// Self-supervised objective and training loop.
//
//   L_MLM   mean negative log-likelihood over every masked token in a batch
//   L_VHM   mean Euclidean distance of record summaries to their batch mean;
//           the center is held constant when differentiating
//   total   L_MLM + lambda * L_VHM

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hlogformer/encoder.hpp"
#include "hlogformer/gradcheck.hpp"
#include "hlogformer/hlogformer.hpp"
#include "hlogformer/log.hpp"
#include "hlogformer/masking.hpp"
#include "hlogformer/optimizer.hpp"
#include "hlogformer/rng.hpp"

namespace hlog {

struct TrainConfig {
  double mask_rate = 0.2;
  double lambda_vhm = 0.1;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  AdamConfig adam;
  Mode mode = Mode::Bidirectional;
  bool tokens_from_forward_pass = false;
  std::uint64_t seed = 0;
  bool record_wallclock = false;
  /// Global gradient-norm ceiling; 0 disables clipping.
  double clip_norm = 1.0;

  void validate() const {
    if (clip_norm < 0.0) throw config_error("clip_norm must be >= 0");
    if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw config_error("mask_rate must be in (0, 1)");
    if (lambda_vhm < 0.0) throw config_error("lambda_vhm must be >= 0");
    if (batch_size == 0) throw config_error("batch_size must be positive");
    if (lambda_vhm > 0.0 && adam.weight_decay <= 0.0)
      throw config_error("weight_decay must be nonzero when lambda_vhm > 0");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double mlm = 0, vhm = 0, total = 0;
  std::optional<double> wallclock;
};

struct LossBreakdown {
  double mlm = 0;
  double vhm = 0;
  double total = 0;
  std::size_t masked_tokens = 0;
};

/// Mean NLL over all masked tokens of a batch of record outputs.
template <class T>
double mlm_loss(std::span<const RecordOutputs<T>> outputs) {
  double sum = 0;
  std::size_t count = 0;
  for (const auto& o : outputs) {
    if (o.logits.rows() != o.targets.size()) throw config_error("mlm_loss: logits/targets misaligned");
    for (std::size_t i = 0; i < o.logits.rows(); ++i) {
      if (o.targets[i] < 0 || static_cast<std::size_t>(o.targets[i]) >= o.logits.cols())
        throw config_error("mlm_loss: target outside vocabulary");
      sum += kernels::row_nll<T>(o.logits.row(i), static_cast<std::size_t>(o.targets[i]));
    }
    count += o.logits.rows();
  }
  if (count == 0) throw config_error("mlm_loss: no masked tokens");
  return sum / static_cast<double>(count);
}

/// Record summaries (N x d) and their center c (column mean).
template <class T>
struct BatchSummaries {
  Matrix<T> s;
  Matrix<T> c;

  // Mean taken relative to the first row, so identical rows give a center
  // equal to that row exactly.
  explicit BatchSummaries(Matrix<T> summaries) : s(std::move(summaries)), c(1, s.cols()) {
    if (s.rows() == 0) return;
    for (std::size_t j = 0; j < s.cols(); ++j) {
      double acc = 0;
      for (std::size_t i = 1; i < s.rows(); ++i)
        acc += static_cast<double>(s(i, j)) - static_cast<double>(s(0, j));
      c[j] = static_cast<T>(static_cast<double>(s(0, j)) + acc / static_cast<double>(s.rows()));
    }
  }
};

template <class T>
double distance_to(std::span<const T> v, std::span<const T> c) {
  double acc = 0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double diff = static_cast<double>(v[j]) - static_cast<double>(c[j]);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

/// Mean distance of each summary to the batch center. Fewer than two
/// records leave nothing to contract, so the loss is 0 (with a warning).
template <class T>
double vhm_loss(const BatchSummaries<T>& b) {
  if (b.s.rows() < 2) {
    log_warning("vhm_loss: fewer than 2 summaries, loss defined as 0");
    return 0.0;
  }
  double acc = 0;
  for (std::size_t i = 0; i < b.s.rows(); ++i) acc += distance_to<T>(b.s.row(i), b.c.row(0));
  return acc / static_cast<double>(b.s.rows());
}

inline double total_loss(double mlm, double vhm, double lambda) { return mlm + lambda * vhm; }

struct DatasetSplit {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle, then contiguous 5:1:1 (remainder to train).
inline DatasetSplit split_dataset(std::size_t n, std::uint64_t seed) {
  if (n < 7) throw data_error("split_dataset: need at least 7 records, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "split"));
  shuffle(idx, rng);
  const std::size_t holdout = n / 7;
  const std::size_t n_train = n - 2 * holdout;
  DatasetSplit s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + holdout);
  s.test.assign(idx.begin() + n_train + holdout, idx.end());
  return s;
}

/// The mask a record receives under a given stream: deterministic in
/// (seed, stream, index) and shared by hierarchical and flat runs.
inline MaskPlan mask_for(const PreparedRecord& rec, double rate, std::uint64_t seed,
                         std::string_view stream, std::uint64_t index) {
  Rng rng(derive_seed(seed, stream, index));
  return apply_masking(rec.plan, rate, rng);
}

/// Forward (and optionally backward) over one batch. `fixed_center`, when
/// given, replaces the batch mean as the VHM center.
template <class T>
LossBreakdown batch_objective(const EncoderStack<T>& stack,
                              std::span<const PreparedRecord* const> records,
                              std::span<const MaskPlan> masks, const RunOptions& opts,
                              double lambda, const Matrix<T>* fixed_center, TensorList<T>* grads,
                              Matrix<T>* center_out = nullptr) {
  const std::size_t n = records.size();
  const std::size_t d = stack.config.d_model;
  std::vector<RecordTape<T>> tapes(grads ? n : 0);
  std::vector<RecordOutputs<T>> outs;
  outs.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    outs.push_back(run_record(stack, *records[i], masks[i], opts, grads ? &tapes[i] : nullptr));

  LossBreakdown lb;
  double nll = 0;
  for (const auto& o : outs) {
    lb.masked_tokens += o.logits.rows();
    for (std::size_t r = 0; r < o.logits.rows(); ++r)
      nll += kernels::row_nll<T>(o.logits.row(r), static_cast<std::size_t>(o.targets[r]));
  }
  if (lb.masked_tokens == 0) throw config_error("batch has no masked tokens");
  lb.mlm = nll / static_cast<double>(lb.masked_tokens);

  Matrix<T> summaries(n, d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(outs[i].record_summary.data(), outs[i].record_summary.data() + d, summaries.row(i).begin());
  BatchSummaries<T> bs(std::move(summaries));
  const Matrix<T>& center = fixed_center ? *fixed_center : bs.c;
  if (center_out) *center_out = center;
  std::vector<double> dist(n, 0.0);
  const bool vhm_active = fixed_center || n >= 2;
  if (!vhm_active && lambda > 0) log_warning("vhm_loss: fewer than 2 summaries, loss defined as 0");
  if (vhm_active) {
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = distance_to<T>(bs.s.row(i), center.row(0));
      lb.vhm += dist[i];
    }
    lb.vhm /= static_cast<double>(n);
  }
  lb.total = total_loss(lb.mlm, lb.vhm, lambda);

  if (grads) {
    const double inv_m = 1.0 / static_cast<double>(lb.masked_tokens);
    for (std::size_t i = 0; i < n; ++i) {
      Matrix<T> dlogits = outs[i].logits;
      for (std::size_t r = 0; r < dlogits.rows(); ++r) {
        auto row = dlogits.row(r);
        kernels::softmax_inplace(row);
        row[static_cast<std::size_t>(outs[i].targets[r])] -= T{1};
        for (T& v : row) v = static_cast<T>(v * inv_m);
      }
      Matrix<T> dsum(1, d);
      if (vhm_active && lambda > 0 && dist[i] > 0) {
        const double scale = lambda / (dist[i] * static_cast<double>(n));
        for (std::size_t j = 0; j < d; ++j)
          dsum[j] = static_cast<T>(scale * (static_cast<double>(bs.s(i, j)) - static_cast<double>(center[j])));
      }
      backward_record(stack, tapes[i], dlogits, dsum, *grads);
    }
  }
  return lb;
}

template <class T>
struct TrainResult {
  EncoderStack<T> stack;   // best-validation parameters
  Matrix<T> center;        // training-set summary center under `stack`
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
  bool diverged = false;
};

/// Token-weighted MLM and mean center distance over a record set, with
/// fixed masks drawn from `stream`. The center is the set's own mean unless
/// `center` is given.
template <class T>
LossBreakdown evaluate_set(const EncoderStack<T>& stack, std::span<const PreparedRecord> records,
                           const RunOptions& opts, double mask_rate, std::uint64_t seed,
                           std::string_view stream, double lambda,
                           const Matrix<T>* center = nullptr) {
  std::vector<const PreparedRecord*> ptrs;
  std::vector<MaskPlan> masks;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ptrs.push_back(&records[i]);
    masks.push_back(mask_for(records[i], mask_rate, seed, stream, i));
  }
  return batch_objective<T>(stack, ptrs, masks, opts, lambda, center, nullptr);
}

/// Center of the masked-input summaries of `records` (the persisted
/// reference for detection-time distances).
template <class T>
Matrix<T> summary_center(const EncoderStack<T>& stack, std::span<const PreparedRecord> records,
                         const RunOptions& opts, double mask_rate, std::uint64_t seed) {
  std::vector<const PreparedRecord*> ptrs;
  std::vector<MaskPlan> masks;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ptrs.push_back(&records[i]);
    masks.push_back(mask_for(records[i], mask_rate, seed, "center", i));
  }
  Matrix<T> c;
  batch_objective<T>(stack, ptrs, masks, opts, 0.0, nullptr, nullptr, &c);
  return c;
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping. Non-finite norms are left for the
/// optimizer's guard to report.
template <class T>
double clip_gradients(TensorList<T>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.size(); ++i) sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && std::isfinite(norm) && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
  }
  return norm;
}

inline bool loss_is_finite(const LossBreakdown& lb) {
  return std::isfinite(lb.mlm) && std::isfinite(lb.vhm) && std::isfinite(lb.total);
}

/// Trains from a fresh seeded initialization. Per epoch it logs train and
/// validation losses; the parameters with the lowest validation total are
/// returned. A non-finite loss or gradient stops training and returns the
/// last good checkpoint with `diverged` set.
template <class T>
TrainResult<T> train(const EncoderConfig& enc, const TrainConfig& tc,
                     std::span<const PreparedRecord> train_set,
                     std::span<const PreparedRecord> val_set,
                     const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  tc.validate();
  if (train_set.empty() || val_set.empty()) throw data_error("train: empty train or validation split");
  const RunOptions opts{tc.mode, tc.tokens_from_forward_pass};
  EncoderStack<T> stack = init_stack<T>(enc);
  AdamW<T> opt(tc.adam, stack.tensors);
  TrainResult<T> result;
  result.stack = stack;
  double best = std::numeric_limits<double>::infinity();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&]() -> std::optional<double> {
    if (!tc.record_wallclock) return std::nullopt;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= tc.epochs && !result.diverged; ++epoch) {
    Rng order_rng(derive_seed(tc.seed, "order", epoch));
    shuffle(order, order_rng);
    double nll_sum = 0, vhm_sum = 0;
    std::size_t masked = 0, batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::vector<const PreparedRecord*> ptrs;
      std::vector<MaskPlan> masks;
      for (std::size_t i = start; i < end; ++i) {
        ptrs.push_back(&train_set[order[i]]);
        masks.push_back(mask_for(train_set[order[i]], tc.mask_rate, tc.seed, "train",
                                 epoch * 0x100000000ULL + order[i]));
      }
      TensorList<T> grads = zeros_like(stack);
      const LossBreakdown lb = batch_objective<T>(stack, ptrs, masks, opts, tc.lambda_vhm, nullptr, &grads);
      if (!loss_is_finite(lb)) {
        log_warning("train: non-finite loss at epoch " + std::to_string(epoch) + ", stopping");
        result.diverged = true;
        break;
      }
      clip_gradients(grads, tc.clip_norm);
      try {
        opt.step(stack.tensors, grads, stack.names);
      } catch (const NonFiniteGradient& e) {
        log_warning(std::string("train: ") + e.what() + ", stopping");
        result.diverged = true;
        break;
      }
      nll_sum += lb.mlm * static_cast<double>(lb.masked_tokens);
      masked += lb.masked_tokens;
      vhm_sum += lb.vhm;
      ++batches;
    }
    if (result.diverged) break;

    EpochMetrics tr;
    tr.epoch = epoch;
    tr.split = "train";
    tr.mlm = nll_sum / static_cast<double>(masked);
    tr.vhm = vhm_sum / static_cast<double>(batches);
    tr.total = total_loss(tr.mlm, tr.vhm, tc.lambda_vhm);
    tr.wallclock = elapsed();

    const LossBreakdown v = evaluate_set<T>(stack, val_set, opts, tc.mask_rate, tc.seed, "val", tc.lambda_vhm);
    if (!loss_is_finite(v)) {
      log_warning("train: non-finite validation loss at epoch " + std::to_string(epoch));
      result.diverged = true;
      break;
    }
    EpochMetrics va{epoch, "val", v.mlm, v.vhm, v.total, elapsed()};
    result.history.push_back(tr);
    result.history.push_back(va);
    if (on_epoch) {
      on_epoch(tr);
      on_epoch(va);
    }
    if (v.total < best) {
      best = v.total;
      result.best_epoch = epoch;
      result.stack = stack;
    }
  }
  result.center = summary_center<T>(result.stack, train_set, opts, tc.mask_rate, tc.seed);
  return result;
}

/// The flat baseline: identical protocol on linearized records with
/// `backbone_blocks` encoder blocks.
template <class T>
TrainResult<T> train_flat_baseline(EncoderConfig enc, TrainConfig tc, std::size_t backbone_blocks,
                                   std::span<const PreparedRecord> train_set,
                                   std::span<const PreparedRecord> val_set,
                                   const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  enc.blocks = backbone_blocks;
  tc.mode = Mode::Flat;
  return train<T>(enc, tc, train_set, val_set, on_epoch);
}

/// Adds N(0, scale^2) noise to every parameter. Freshly initialized stacks
/// map all records to nearly the same summary, which puts each VHM distance
/// next to the kink of the norm at zero; gradient checks run from a
/// jittered point instead.
inline EncoderStack<double> jittered(EncoderStack<double> stack, double scale, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "jitter"));
  for (auto& t : stack.tensors)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += scale * standard_normal(rng);
  return stack;
}

/// Finite-difference check of the full batch objective in double precision.
/// The VHM center is frozen at its value for the unperturbed parameters, the
/// same stop-gradient the analytic pass applies.
inline GradCheckResult model_grad_check(const EncoderStack<double>& base,
                                        std::span<const PreparedRecord> records, const TrainConfig& tc,
                                        std::size_t probes, double eps, std::uint64_t seed) {
  const RunOptions opts{tc.mode, tc.tokens_from_forward_pass};
  std::vector<const PreparedRecord*> ptrs;
  std::vector<MaskPlan> masks;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ptrs.push_back(&records[i]);
    masks.push_back(mask_for(records[i], tc.mask_rate, seed, "gradcheck", i));
  }
  Matrix<double> center;
  batch_objective<double>(base, ptrs, masks, opts, tc.lambda_vhm, nullptr, nullptr, &center);
  EncoderStack<double> work = base;
  LossFn loss = [&](const std::vector<Matrix<double>>& params, std::vector<Matrix<double>>* grads) {
    work.tensors = params;
    if (grads)
      for (auto& g : *grads) g.fill(0.0);
    return batch_objective<double>(work, ptrs, masks, opts, tc.lambda_vhm, &center, grads).total;
  };
  return grad_check(loss, base.tensors, probes, eps, seed);
}

}  // namespace hlog
