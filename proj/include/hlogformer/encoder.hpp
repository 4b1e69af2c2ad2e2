#pragma once

// Transformer encoder stack with hand-written reverse-mode gradients.
//
// Parameters live in one flat list of named tensors in a fixed declared
// order; optimizer state, gradients and checkpoints all share that layout.
//
//   0 tok_emb     V x d   token embeddings, also the tied output head
//   1 pos_emb     W x d   learned absolute positions
//   2 sigma_init  k x d   initial summary state
//   then per block b, 16 tensors (see BlockParam).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hlogformer/errors.hpp"
#include "hlogformer/kernels.hpp"
#include "hlogformer/matrix.hpp"
#include "hlogformer/rng.hpp"

namespace hlog {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t blocks = 1;
  std::size_t window = 128;
  std::size_t summary_slots = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocab_size < 4) throw config_error("vocab_size must be at least 4");
    if (d_model == 0 || heads == 0 || d_model % heads != 0)
      throw config_error("d_model must be a positive multiple of heads");
    if (ffn == 0) throw config_error("ffn must be positive");
    if (summary_slots < 1) throw config_error("summary_slots must be >= 1");
    if (window < 2 * summary_slots + 4) throw config_error("window must be >= 2*summary_slots + 4");
  }

  bool operator==(const EncoderConfig&) const = default;
};

/// Parameters per encoder block.
inline std::size_t block_param_count(std::size_t d, std::size_t f) {
  return 4 * (d * d + d) + (d * f + f) + (f * d + d) + 2 * 2 * d;
}

/// Closed-form parameter count; the tied output head adds nothing.
inline std::size_t count_params(const EncoderConfig& c) {
  return c.vocab_size * c.d_model + c.window * c.d_model + c.summary_slots * c.d_model +
         c.blocks * block_param_count(c.d_model, c.ffn);
}

enum GlobalParam : std::size_t { kTokEmb = 0, kPosEmb = 1, kSigmaInit = 2, kGlobalCount = 3 };

enum BlockParam : std::size_t {
  kLn1Scale, kLn1Shift, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo,
  kLn2Scale, kLn2Shift, kW1, kB1, kW2, kB2, kBlockParamCount
};

inline constexpr const char* kBlockParamNames[kBlockParamCount] = {
    "ln1_scale", "ln1_shift", "wq", "bq", "wk", "bk", "wv", "bv",
    "wo", "bo", "ln2_scale", "ln2_shift", "w1", "b1", "w2", "b2"};

inline std::size_t block_param_index(std::size_t block, BlockParam p) {
  return kGlobalCount + block * kBlockParamCount + p;
}

template <class T>
using TensorList = std::vector<Matrix<T>>;

template <class T>
struct EncoderStack {
  EncoderConfig config;
  std::vector<std::string> names;
  TensorList<T> tensors;

  Matrix<T>& param(std::size_t block, BlockParam p) { return tensors[block_param_index(block, p)]; }
  const Matrix<T>& param(std::size_t block, BlockParam p) const {
    return tensors[block_param_index(block, p)];
  }
  Matrix<T>& global(GlobalParam p) { return tensors[p]; }
  const Matrix<T>& global(GlobalParam p) const { return tensors[p]; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
};

/// Allocates every tensor with its declared shape, all zeros.
template <class T>
EncoderStack<T> make_zero_stack(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderStack<T> s;
  s.config = cfg;
  const std::size_t d = cfg.d_model, f = cfg.ffn;
  auto add = [&](std::string name, std::size_t r, std::size_t c) {
    s.names.push_back(std::move(name));
    s.tensors.emplace_back(r, c);
  };
  add("tok_emb", cfg.vocab_size, d);
  add("pos_emb", cfg.window, d);
  add("sigma_init", cfg.summary_slots, d);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    const std::size_t shapes[kBlockParamCount][2] = {
        {1, d}, {1, d}, {d, d}, {1, d}, {d, d}, {1, d}, {d, d}, {1, d},
        {d, d}, {1, d}, {1, d}, {1, d}, {d, f}, {1, f}, {f, d}, {1, d}};
    for (std::size_t i = 0; i < kBlockParamCount; ++i) {
      add(p + kBlockParamNames[i], shapes[i][0], shapes[i][1]);
    }
  }
  return s;
}

/// Normal(0, 0.02) weights, zero biases and shifts, unit layer-norm scales.
template <class T>
EncoderStack<T> init_stack(const EncoderConfig& cfg) {
  EncoderStack<T> s = make_zero_stack<T>(cfg);
  Rng rng(derive_seed(cfg.seed, "init"));
  auto normal_fill = [&](Matrix<T>& m) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(0.02 * standard_normal(rng));
  };
  normal_fill(s.global(kTokEmb));
  normal_fill(s.global(kPosEmb));
  normal_fill(s.global(kSigmaInit));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    s.param(b, kLn1Scale).fill(T{1});
    s.param(b, kLn2Scale).fill(T{1});
    for (BlockParam p : {kWq, kWk, kWv, kWo, kW1, kW2}) normal_fill(s.param(b, p));
  }
  return s;
}

template <class T>
TensorList<T> zeros_like(const EncoderStack<T>& s) {
  TensorList<T> g;
  g.reserve(s.tensors.size());
  for (const auto& t : s.tensors) g.emplace_back(t.rows(), t.cols());
  return g;
}

template <class To, class From>
EncoderStack<To> stack_cast(const EncoderStack<From>& s) {
  EncoderStack<To> out;
  out.config = s.config;
  out.names = s.names;
  for (const auto& t : s.tensors) out.tensors.push_back(matrix_cast<To>(t));
  return out;
}

template <class T>
struct BlockCache {
  Matrix<T> x_in;
  kernels::LayerNormCache<T> ln1;
  Matrix<T> a, q, k, v;
  std::vector<Matrix<T>> probs;  // per head, n x n, zero where masked
  Matrix<T> attn;
  kernels::LayerNormCache<T> ln2;
  Matrix<T> c, u, g;
};

template <class T>
struct EncodeCache {
  std::vector<BlockCache<T>> blocks;
  std::vector<char> mask;
};

inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

template <class T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> y = kernels::matmul(x, w);
  kernels::add_row_vector(y, b);
  return y;
}

template <class T>
Matrix<T> attention_forward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                            std::span<const char> mask, std::size_t heads,
                            std::vector<Matrix<T>>* probs_out) {
  const std::size_t n = q.rows(), d = q.cols(), dh = d / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  Matrix<T> out(n, d);
  if (probs_out) probs_out->assign(heads, Matrix<T>(n, n));
  std::vector<T> scores(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      const T* qi = q.data() + i * d + off;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        const T* kj = k.data() + j * d + off;
        T acc{0};
        for (std::size_t t = 0; t < dh; ++t) acc += qi[t] * kj[t];
        scores[j] = acc * scale;
        mx = std::max(mx, scores[j]);
      }
      T sum{0};
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      T* oi = out.data() + i * d + off;
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        const T p = scores[j] / sum;
        if (probs_out) (*probs_out)[h](i, j) = p;
        const T* vj = v.data() + j * d + off;
        for (std::size_t t = 0; t < dh; ++t) oi[t] += p * vj[t];
      }
    }
  }
  return out;
}

template <class T>
void attention_backward(const Matrix<T>& dout, const BlockCache<T>& c, std::span<const char> mask,
                        std::size_t heads, Matrix<T>& dq, Matrix<T>& dk, Matrix<T>& dv) {
  const std::size_t n = c.q.rows(), d = c.q.cols(), dh = d / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  dq = Matrix<T>(n, d);
  dk = Matrix<T>(n, d);
  dv = Matrix<T>(n, d);
  std::vector<T> dp(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    const Matrix<T>& P = c.probs[h];
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      const T* doi = dout.data() + i * d + off;
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        const T* vj = c.v.data() + j * d + off;
        T acc{0};
        for (std::size_t t = 0; t < dh; ++t) acc += doi[t] * vj[t];
        dp[j] = acc;
        dot += P(i, j) * acc;
        T* dvj = dv.data() + j * d + off;
        const T pij = P(i, j);
        for (std::size_t t = 0; t < dh; ++t) dvj[t] += pij * doi[t];
      }
      const T* qi = c.q.data() + i * d + off;
      T* dqi = dq.data() + i * d + off;
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        const T ds = P(i, j) * (dp[j] - dot) * scale;
        if (ds == T{0}) continue;
        const T* kj = c.k.data() + j * d + off;
        T* dkj = dk.data() + j * d + off;
        for (std::size_t t = 0; t < dh; ++t) {
          dqi[t] += ds * kj[t];
          dkj[t] += ds * qi[t];
        }
      }
    }
  }
}

}  // namespace detail

/// Runs every block over `x` (n x d, positions already added). `mask[i]`
/// false marks padding: padded positions neither attend nor are attended
/// to, and their output rows are not meaningful.
template <class T>
Matrix<T> encode(const EncoderStack<T>& stack, Matrix<T> x, std::span<const char> mask,
                 EncodeCache<T>* cache = nullptr) {
  const auto& cfg = stack.config;
  if (x.rows() > cfg.window) throw WindowOverflow(x.rows(), cfg.window);
  const T eps = static_cast<T>(kLayerNormEps);
  if (cache) {
    cache->blocks.assign(cfg.blocks, {});
    cache->mask.assign(mask.begin(), mask.end());
  }
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    BlockCache<T> local;
    BlockCache<T>& c = cache ? cache->blocks[b] : local;
    c.x_in = x;
    c.a = kernels::layer_norm_rows(x, stack.param(b, kLn1Scale), stack.param(b, kLn1Shift), eps,
                                   &c.ln1);
    c.q = detail::affine(c.a, stack.param(b, kWq), stack.param(b, kBq));
    c.k = detail::affine(c.a, stack.param(b, kWk), stack.param(b, kBk));
    c.v = detail::affine(c.a, stack.param(b, kWv), stack.param(b, kBv));
    c.attn = detail::attention_forward(c.q, c.k, c.v, mask, cfg.heads, cache ? &c.probs : nullptr);
    Matrix<T> y = detail::affine(c.attn, stack.param(b, kWo), stack.param(b, kBo));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
    c.c = kernels::layer_norm_rows(x, stack.param(b, kLn2Scale), stack.param(b, kLn2Shift), eps,
                                   &c.ln2);
    c.u = detail::affine(c.c, stack.param(b, kW1), stack.param(b, kB1));
    c.g = c.u;
    for (std::size_t i = 0; i < c.g.size(); ++i) c.g[i] = kernels::gelu(c.g[i]);
    Matrix<T> z = detail::affine(c.g, stack.param(b, kW2), stack.param(b, kB2));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += z[i];
  }
  return x;
}

/// Backpropagates `dh` (gradient w.r.t. the encoder output) through a
/// cached forward run. Accumulates parameter gradients into `grads` and
/// returns the gradient w.r.t. the encoder input.
template <class T>
Matrix<T> encode_backward(const EncoderStack<T>& stack, const EncodeCache<T>& cache, Matrix<T> dh,
                          TensorList<T>& grads) {
  const auto& cfg = stack.config;
  std::span<const char> mask(cache.mask);
  for (std::size_t bb = cfg.blocks; bb-- > 0;) {
    const BlockCache<T>& c = cache.blocks[bb];
    auto G = [&](BlockParam p) -> Matrix<T>& { return grads[block_param_index(bb, p)]; };

    // FFN branch.
    kernels::matmul_tn_acc(c.g, dh, G(kW2));
    kernels::add_column_sums(dh, G(kB2));
    Matrix<T> du = kernels::matmul_nt(dh, stack.param(bb, kW2));
    for (std::size_t i = 0; i < du.size(); ++i) du[i] *= kernels::gelu_grad(c.u[i]);
    kernels::matmul_tn_acc(c.c, du, G(kW1));
    kernels::add_column_sums(du, G(kB1));
    Matrix<T> dc = kernels::matmul_nt(du, stack.param(bb, kW1));
    Matrix<T> dx1 = kernels::layer_norm_rows_backward(dc, c.ln2, stack.param(bb, kLn2Scale),
                                                      G(kLn2Scale), G(kLn2Shift));
    for (std::size_t i = 0; i < dx1.size(); ++i) dx1[i] += dh[i];

    // Attention branch.
    kernels::matmul_tn_acc(c.attn, dx1, G(kWo));
    kernels::add_column_sums(dx1, G(kBo));
    Matrix<T> dattn = kernels::matmul_nt(dx1, stack.param(bb, kWo));
    Matrix<T> dq, dk, dv;
    detail::attention_backward(dattn, c, mask, cfg.heads, dq, dk, dv);
    kernels::matmul_tn_acc(c.a, dq, G(kWq));
    kernels::add_column_sums(dq, G(kBq));
    kernels::matmul_tn_acc(c.a, dk, G(kWk));
    kernels::add_column_sums(dk, G(kBk));
    kernels::matmul_tn_acc(c.a, dv, G(kWv));
    kernels::add_column_sums(dv, G(kBv));
    Matrix<T> da = kernels::matmul_nt(dq, stack.param(bb, kWq));
    Matrix<T> tmp = kernels::matmul_nt(dk, stack.param(bb, kWk));
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += tmp[i];
    tmp = kernels::matmul_nt(dv, stack.param(bb, kWv));
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += tmp[i];
    Matrix<T> dx = kernels::layer_norm_rows_backward(da, c.ln1, stack.param(bb, kLn1Scale),
                                                     G(kLn1Scale), G(kLn1Shift));
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx1[i];
    dh = std::move(dx);
  }
  return dh;
}

}  // namespace hlog
