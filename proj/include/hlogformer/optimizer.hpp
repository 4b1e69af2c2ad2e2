#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hlogformer/errors.hpp"
#include "hlogformer/matrix.hpp"

namespace hlog {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay: the bias-corrected adaptive step is
/// applied first, then every parameter is shrunk by (1 - lr * weight_decay).
template <class T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(AdamConfig cfg, const std::vector<Matrix<T>>& params) : cfg_(cfg) {
    for (const auto& p : params) {
      m_.emplace_back(p.rows(), p.cols());
      v_.emplace_back(p.rows(), p.cols());
    }
  }

  const AdamConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return t_; }
  const std::vector<Matrix<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Matrix<T>>& second_moments() const noexcept { return v_; }

  /// `names` is used only for the error raised on a non-finite gradient.
  void step(std::vector<Matrix<T>>& params, const std::vector<Matrix<T>>& grads,
            const std::vector<std::string>& names = {}) {
    if (params.size() != grads.size() || params.size() != m_.size())
      throw config_error("AdamW: parameter/gradient count mismatch");
    for (std::size_t p = 0; p < grads.size(); ++p) {
      if (grads[p].size() != params[p].size())
        throw config_error("AdamW: shape mismatch for tensor " + std::to_string(p));
      for (std::size_t i = 0; i < grads[p].size(); ++i) {
        if (!std::isfinite(static_cast<double>(grads[p][i])))
          throw NonFiniteGradient(p < names.size() ? names[p] : "tensor " + std::to_string(p));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T decay = static_cast<T>(1.0 - cfg_.lr * cfg_.weight_decay);
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = params[p];
      auto& m = m_[p];
      auto& v = v_[p];
      const auto& g = grads[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (T{1} - b1) * g[i];
        v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
        const double mhat = static_cast<double>(m[i]) / bc1;
        const double vhat = static_cast<double>(v[i]) / bc2;
        w[i] -= static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        w[i] *= decay;
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

}  // namespace hlog
