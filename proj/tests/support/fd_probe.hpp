#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "cot2/common/rng.hpp"
#include "cot2/model/params.hpp"

namespace cot2::testing {

// Loss of the parameters; accumulates the gradient into `grads` when given.
using ParamLoss = std::function<double(const model::LmParams&, model::LmParams*)>;

struct ProbeReport {
  double worst_relative_error = 0.0;
  int probes = 0;
};

// Central differences along random directions: |g.u - (L(p+hu)-L(p-hu))/2h|
// relative to max(|g.u|, |fd|, 1e-8), worst case over the probes.
inline ProbeReport directional_probes(const model::LmParams& params,
                                      const ParamLoss& loss, int probes,
                                      std::uint64_t seed, double step = 1e-5) {
  model::LmParams grads = model::LmParams::zeros_like(params);
  loss(params, &grads);
  Stream rng(seed, {0xfdu});
  ProbeReport report;
  for (int k = 0; k < probes; ++k) {
    model::LmParams dir = model::LmParams::zeros_like(params);
    for (auto& [name, t] : dir.named())
      for (double& x : t->values()) x = 2.0 * rng.uniform() - 1.0;
    double analytic = 0.0;
    const auto g = grads.named();
    const auto u = dir.named();
    for (std::size_t n = 0; n < g.size(); ++n)
      for (std::size_t i = 0; i < g[n].second->size(); ++i)
        analytic += (*g[n].second)[i] * (*u[n].second)[i];
    model::LmParams up = params, down = params;
    up.axpy(step, dir);
    down.axpy(-step, dir);
    const double numeric = (loss(up, nullptr) - loss(down, nullptr)) / (2.0 * step);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    report.worst_relative_error = std::max(report.worst_relative_error, rel);
    ++report.probes;
  }
  return report;
}

// Random perturbation so layer norms and attention are away from the
// symmetric initialization.
inline void jitter(model::LmParams& params, std::uint64_t seed, double scale) {
  Stream rng(seed, {0x717u});
  for (auto& [name, t] : params.named())
    for (double& x : t->values()) x += scale * (2.0 * rng.uniform() - 1.0);
}

}  // namespace cot2::testing
