#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hlogformer/matrix.hpp"
#include "hlogformer/rng.hpp"

namespace hlog {

/// A loss over a list of tensors. When `grads` is non-null it must be
/// filled with the analytic gradient (same shapes as the parameters).
using LossFn =
    std::function<double(const std::vector<Matrix<double>>& params, std::vector<Matrix<double>>* grads)>;

/// Probe predicate: return true to drop (tensor, index) from the probe set,
/// e.g. a ReLU input sitting exactly on its kink.
using ProbeFilter = std::function<bool(std::size_t tensor, std::size_t index)>;

struct GradCheckProbe {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::vector<GradCheckProbe> probes;
};

/// Entries whose gradient is structurally zero (a key bias under softmax)
/// give a numeric estimate of pure roundoff, so the denominator is floored.
inline constexpr double kGradFloor = 1e-5;

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kGradFloor});
}

/// Central finite differences on `probes` randomly chosen entries. The
/// first probes visit every non-empty tensor once so each parameter group
/// is covered; the rest are uniform over all entries.
inline GradCheckResult grad_check(const LossFn& loss, std::vector<Matrix<double>> params,
                                  std::size_t probes, double eps, std::uint64_t seed,
                                  const ProbeFilter& skip = {}) {
  std::vector<Matrix<double>> grads;
  for (const auto& p : params) grads.emplace_back(p.rows(), p.cols());
  loss(params, &grads);

  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  GradCheckResult result;
  if (total == 0) return result;

  Rng rng(derive_seed(seed, "gradcheck"));
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  for (std::size_t t = 0; t < params.size() && chosen.size() < probes; ++t) {
    if (params[t].empty()) continue;
    chosen.emplace_back(t, uniform_index(rng, params[t].size()));
  }
  std::size_t attempts = 0;
  while (chosen.size() < probes && attempts++ < probes * 100) {
    std::uint64_t flat = uniform_index(rng, total);
    std::size_t t = 0;
    while (flat >= params[t].size()) flat -= params[t++].size();
    chosen.emplace_back(t, static_cast<std::size_t>(flat));
  }

  for (auto [t, i] : chosen) {
    if (skip && skip(t, i)) continue;
    const double orig = params[t][i];
    params[t][i] = orig + eps;
    const double up = loss(params, nullptr);
    params[t][i] = orig - eps;
    const double down = loss(params, nullptr);
    params[t][i] = orig;
    GradCheckProbe probe{t, i, grads[t][i], (up - down) / (2 * eps), 0};
    probe.rel_error = relative_error(probe.analytic, probe.numeric);
    result.max_rel_error = std::max(result.max_rel_error, probe.rel_error);
    result.probes.push_back(probe);
  }
  return result;
}

}  // namespace hlog
