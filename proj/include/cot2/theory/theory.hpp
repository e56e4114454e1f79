#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "cot2/common/rng.hpp"

namespace cot2::theory {

/// m-step token dynamics where each next-token distribution depends only on
/// the last token: alpha_{t+1} = alpha_t M_t.
struct DecoupledChain {
  std::size_t v = 0;
  std::size_t m = 0;
  std::vector<double> initial;
  /// m - 1 row-stochastic v x v matrices, row-major; row j is the next-token
  /// distribution after token j.
  std::vector<std::vector<double>> transitions;

  std::span<const double> row(std::size_t t, std::size_t j) const {
    return std::span<const double>(transitions[t]).subspan(j * v, v);
  }
  /// Throws InvariantError when a row is off the simplex or shapes disagree.
  void validate() const;
};

/// Rows and the initial distribution drawn from Dirichlet(1).
DecoupledChain random_chain(std::size_t v, std::size_t m, std::uint64_t seed);

/// Chain over signed partial sums -S..S (index s + S): the first step holds
/// +-d_1 with mass 1/2 each, step t moves s to s +- d_{t+1} with mass 1/2
/// each. Rows of unreachable sums stay on themselves.
DecoupledChain mnns_chain(std::span<const int> digits, int sum_bound);

/// alpha_1 M_1 ... M_{m-1}.
std::vector<double> base_cot2_evolve(const DecoupledChain& chain);

/// Token drawn at each of the m steps of one discrete trace.
std::vector<std::size_t> discrete_trace(const DecoupledChain& chain, Stream& rng);

struct MtsTrace {
  /// K draws at each of steps 1..m-1.
  std::vector<std::vector<std::size_t>> draws;
  /// Mixtures alpha_1, then the mean of the drawn rows after each step.
  std::vector<std::vector<double>> mixtures;
};

/// K i.i.d. draws from the current mixture per step; the next mixture is the
/// mean of the corresponding rows. K = 1 draws exactly the tokens of
/// discrete_trace on the same stream.
MtsTrace mts_trace(const DecoupledChain& chain, std::size_t k, Stream& rng);

/// Mean of N final one-hot tokens of discrete traces. Trace i draws from the
/// stream keyed by (seed, i).
std::vector<double> simulate_discrete(const DecoupledChain& chain, std::size_t n_traces,
                                      std::uint64_t seed);
/// Mean of N per-trace final MTS mixtures; same stream keying.
std::vector<double> simulate_mts(const DecoupledChain& chain, std::size_t k, std::size_t n_traces,
                                 std::uint64_t seed);

double l1_distance(std::span<const double> a, std::span<const double> b);

struct ScalingConfig {
  std::vector<std::size_t> ks{1, 2, 4, 8};
  std::vector<std::size_t> ns{1000, 3000, 10000, 30000, 100000};
  std::vector<double> epsilons{0.05, 0.02, 0.01};
  std::size_t repetitions = 50;
  /// N at which the error ratio between K and 2K is reported.
  std::size_t reference_n = 10000;
  std::uint64_t seed = 0;
};

struct ScalingCell {
  std::size_t k = 0, n = 0;
  double mean_l1 = 0.0, std_l1 = 0.0;
  std::size_t repetitions = 0;
};

struct ScalingReport {
  std::size_t v = 0, m = 0;
  std::vector<ScalingCell> cells;
  /// Least-squares slope of log mean_l1 against log N, per K in config order.
  std::vector<double> slopes;
  /// mean_l1(K) / mean_l1(2K) at reference_n for every K whose double is in
  /// the grid, as (K, ratio).
  std::vector<std::pair<std::size_t, double>> doubling_ratios;
  /// Traces needed for each epsilon per K, from the fitted power law.
  std::vector<std::vector<double>> traces_for_epsilon;
  ScalingConfig config;

  const ScalingCell& cell(std::size_t k, std::size_t n) const;
};

/// Mean L1 error of simulate_mts against the exact alpha_m over repetitions
/// for every (K, N).
ScalingReport sample_complexity_experiment(const DecoupledChain& chain, const ScalingConfig& config);

/// Least-squares slope of y on x.
double fit_slope(std::span<const double> x, std::span<const double> y);

void write_scaling_csv(const std::filesystem::path& path, const ScalingReport& report);
nlohmann::json scaling_summary(const ScalingReport& report);

}  // namespace cot2::theory
