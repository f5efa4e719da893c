// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "effcrn/ops.hpp"
#include "effcrn/tape.hpp"

namespace effcrn {

// Compares analytic gradients against central finite differences on a sampled
// subset of each parameter's elements. The graph builder must produce a scalar
// from a fresh tape on every call. Relative error uses
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
//
// A probe whose difference quotient straddles a leaky-relu kink is not a
// derivative estimate at all; such mismatches shrink linearly as the step
// shrinks, while genuine gradient defects stay put. Probes over
// retry_threshold therefore re-run with successively smaller steps and the
// smallest error is kept.
template <typename T>
struct GradCheckOptions {
  T eps_scale = T(1e-3);
  int max_checks_per_param = 6;
  unsigned seed = 7;
  double floor = 1e-6;
  int kink_retries = 2;
  double retry_threshold = 1e-4;
};

template <typename T>
double grad_check(const std::function<VarT<T>(TapeT<T>&)>& build_scalar,
                  const std::vector<ParameterT<T>*>& params,
                  const GradCheckOptions<T>& opt = {}) {
  for (ParameterT<T>* p : params) p->zero_grad();
  {
    TapeT<T> tape;
    VarT<T> loss = build_scalar(tape);
    tape.backward(loss);
  }

  auto eval = [&]() -> double {
    TapeT<T> tape;
    return double(build_scalar(tape).value[0]);
  };

  std::mt19937 rng(opt.seed);
  double worst = 0.0;
  for (ParameterT<T>* p : params) {
    const std::int64_t n = p->value.numel();
    std::vector<std::int64_t> picks;
    if (n <= opt.max_checks_per_param) {
      for (std::int64_t i = 0; i < n; ++i) picks.push_back(i);
    } else {
      std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
      for (int i = 0; i < opt.max_checks_per_param; ++i)
        picks.push_back(dist(rng));
    }
    for (std::int64_t idx : picks) {
      T* slot = p->value.data() + idx;
      const T v0 = *slot;
      const double analytic = double(p->grad[idx]);
      auto rel = [&](double numeric) {
        const double denom =
            std::max({std::abs(analytic), std::abs(numeric), opt.floor});
        return std::abs(analytic - numeric) / denom;
      };
      T eps = opt.eps_scale * std::max(std::abs(v0), T(1));
      double best = std::numeric_limits<double>::infinity();
      double j_mid = std::numeric_limits<double>::quiet_NaN();
      for (int attempt = 0; attempt <= opt.kink_retries; ++attempt) {
        *slot = v0 + eps;
        const double j_hi = eval();
        *slot = v0 - eps;
        const double j_lo = eval();
        *slot = v0;
        best = std::min(best, rel((j_hi - j_lo) / (2.0 * double(eps))));
        if (best <= opt.retry_threshold) break;
        // A probe sitting exactly on a kink (zero-padded regions put
        // pre-activations right at a zero bias) averages the two slopes in
        // the central difference no matter how small the step; the analytic
        // gradient then matches one of the one-sided quotients instead.
        if (std::isnan(j_mid)) j_mid = eval();
        best = std::min(best, rel((j_hi - j_mid) / double(eps)));
        best = std::min(best, rel((j_mid - j_lo) / double(eps)));
        if (best <= opt.retry_threshold) break;
        eps /= T(8);
      }
      worst = std::max(worst, best);
    }
  }
  return worst;
}

}  // namespace effcrn
