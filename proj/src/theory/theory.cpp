#include "cot2/theory/theory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include "cot2/common/error.hpp"
#include "cot2/common/parallel.hpp"
#include "cot2/common/simplex.hpp"

namespace cot2::theory {
namespace {

constexpr std::uint64_t kTraceSalt = 0x7ace;
constexpr std::size_t kChunk = 1024;

std::vector<double> dirichlet_one(std::size_t v, Stream& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(v);
  double total = 0.0;
  for (double& x : p) total += x = e(rng);
  for (double& x : p) x /= total;
  return p;
}

// Sum over traces of per-trace vectors, accumulated in fixed chunks so the
// result does not depend on the thread count.
template <typename PerTrace>
std::vector<double> trace_mean(std::size_t v, std::size_t n, const PerTrace& per_trace) {
  if (n == 0) throw UsageError("simulate: at least one trace is required");
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(v, 0.0));
  parallel_for(chunks, [&](std::size_t c) {
    for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) per_trace(i, partial[c]);
  });
  std::vector<double> mean(v, 0.0);
  for (const auto& p : partial)
    for (std::size_t j = 0; j < v; ++j) mean[j] += p[j];
  for (double& x : mean) x /= static_cast<double>(n);
  return mean;
}

}  // namespace

void DecoupledChain::validate() const {
  if (v == 0 || m == 0) throw InvariantError("chain: v and m must be positive");
  if (initial.size() != v || transitions.size() + 1 != m) {
    throw InvariantError("chain: expected an initial distribution over v tokens and m - 1 matrices");
  }
  check_simplex(initial, 1e-9);
  for (std::size_t t = 0; t < transitions.size(); ++t) {
    if (transitions[t].size() != v * v) throw InvariantError("chain: transition matrix is not v x v");
    for (std::size_t j = 0; j < v; ++j) check_simplex(row(t, j), 1e-9);
  }
}

DecoupledChain random_chain(std::size_t v, std::size_t m, std::uint64_t seed) {
  if (v == 0 || m == 0) throw UsageError("random_chain: v and m must be positive");
  Stream rng(seed, {0xc4a1});
  DecoupledChain chain{v, m, dirichlet_one(v, rng), {}};
  for (std::size_t t = 0; t + 1 < m; ++t) {
    std::vector<double> mat;
    for (std::size_t j = 0; j < v; ++j) {
      const auto r = dirichlet_one(v, rng);
      mat.insert(mat.end(), r.begin(), r.end());
    }
    chain.transitions.push_back(std::move(mat));
  }
  return chain;
}

DecoupledChain mnns_chain(std::span<const int> digits, int sum_bound) {
  if (digits.empty()) throw UsageError("mnns_chain: no digits");
  long total = 0;
  for (int d : digits) total += std::abs(d);
  if (total > sum_bound) throw UsageError("mnns_chain: digits can exceed the sum bound");
  const std::size_t v = static_cast<std::size_t>(2 * sum_bound + 1);
  const auto index = [&](long s) { return static_cast<std::size_t>(s + sum_bound); };
  DecoupledChain chain{v, digits.size(), std::vector<double>(v, 0.0), {}};
  chain.initial[index(digits[0])] += 0.5;
  chain.initial[index(-digits[0])] += 0.5;
  for (std::size_t t = 1; t < digits.size(); ++t) {
    std::vector<double> mat(v * v, 0.0);
    for (long s = -sum_bound; s <= sum_bound; ++s) {
      double* row = mat.data() + index(s) * v;
      const long up = s + digits[t], down = s - digits[t];
      if (std::abs(up) <= sum_bound && std::abs(down) <= sum_bound) {
        row[index(up)] += 0.5;
        row[index(down)] += 0.5;
      } else {
        row[index(s)] = 1.0;
      }
    }
    chain.transitions.push_back(std::move(mat));
  }
  return chain;
}

std::vector<double> base_cot2_evolve(const DecoupledChain& chain) {
  chain.validate();
  std::vector<double> alpha = chain.initial;
  for (std::size_t t = 0; t + 1 < chain.m; ++t) {
    std::vector<double> next(chain.v, 0.0);
    for (std::size_t j = 0; j < chain.v; ++j) {
      if (alpha[j] == 0.0) continue;
      const auto r = chain.row(t, j);
      for (std::size_t i = 0; i < chain.v; ++i) next[i] += alpha[j] * r[i];
    }
    alpha = std::move(next);
  }
  return alpha;
}

std::vector<std::size_t> discrete_trace(const DecoupledChain& chain, Stream& rng) {
  std::vector<std::size_t> tokens{sample_categorical(chain.initial, rng)};
  for (std::size_t t = 0; t + 1 < chain.m; ++t) {
    tokens.push_back(sample_categorical(chain.row(t, tokens.back()), rng));
  }
  return tokens;
}

MtsTrace mts_trace(const DecoupledChain& chain, std::size_t k, Stream& rng) {
  if (k == 0) throw UsageError("mts_trace: K must be at least 1");
  MtsTrace out;
  out.mixtures.push_back(chain.initial);
  for (std::size_t t = 0; t + 1 < chain.m; ++t) {
    const std::vector<double>& mix = out.mixtures.back();
    std::vector<std::size_t> draws(k);
    std::vector<double> next(chain.v, 0.0);
    for (std::size_t r = 0; r < k; ++r) {
      draws[r] = sample_categorical(mix, rng);
      const auto row = chain.row(t, draws[r]);
      for (std::size_t i = 0; i < chain.v; ++i) next[i] += row[i];
    }
    for (double& x : next) x /= static_cast<double>(k);
    out.draws.push_back(std::move(draws));
    out.mixtures.push_back(std::move(next));
  }
  return out;
}

std::vector<double> simulate_discrete(const DecoupledChain& chain, std::size_t n_traces,
                                      std::uint64_t seed) {
  chain.validate();
  return trace_mean(chain.v, n_traces, [&](std::size_t i, std::vector<double>& acc) {
    Stream rng(seed, {kTraceSalt, i});
    acc[discrete_trace(chain, rng).back()] += 1.0;
  });
}

std::vector<double> simulate_mts(const DecoupledChain& chain, std::size_t k, std::size_t n_traces,
                                 std::uint64_t seed) {
  chain.validate();
  if (k == 0) throw UsageError("simulate_mts: K must be at least 1");
  return trace_mean(chain.v, n_traces, [&](std::size_t i, std::vector<double>& acc) {
    Stream rng(seed, {kTraceSalt, i});
    const MtsTrace trace = mts_trace(chain, k, rng);
    const auto& last = trace.mixtures.back();
    for (std::size_t j = 0; j < chain.v; ++j) acc[j] += last[j];
  });
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("l1_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("fit_slope: need two or more points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw UsageError("fit_slope: x values are all equal");
  return sxy / sxx;
}

const ScalingCell& ScalingReport::cell(std::size_t k, std::size_t n) const {
  for (const auto& c : cells)
    if (c.k == k && c.n == n) return c;
  throw UsageError("scaling report: no cell for K=" + std::to_string(k) + ", N=" + std::to_string(n));
}

ScalingReport sample_complexity_experiment(const DecoupledChain& chain, const ScalingConfig& config) {
  if (config.ks.empty() || config.ns.size() < 2 || config.repetitions == 0) {
    throw ConfigError("theory: need at least one K, two N values and one repetition");
  }
  const std::vector<double> exact = base_cot2_evolve(chain);
  ScalingReport report{chain.v, chain.m, {}, {}, {}, {}, config};
  for (std::size_t k : config.ks) {
    std::vector<double> log_n, log_err;
    for (std::size_t n : config.ns) {
      std::vector<double> errs;
      for (std::size_t r = 0; r < config.repetitions; ++r) {
        const std::uint64_t seed = Stream(config.seed, {0x5ca1e, k, n, r})();
        errs.push_back(l1_distance(simulate_mts(chain, k, n, seed), exact));
      }
      double mean = 0.0, var = 0.0;
      for (double e : errs) mean += e / static_cast<double>(errs.size());
      for (double e : errs) var += (e - mean) * (e - mean) / static_cast<double>(errs.size());
      report.cells.push_back({k, n, mean, std::sqrt(var), config.repetitions});
      log_n.push_back(std::log(static_cast<double>(n)));
      log_err.push_back(std::log(mean));
    }
    const double slope = fit_slope(log_n, log_err);
    report.slopes.push_back(slope);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < log_n.size(); ++i) {
      mx += log_n[i] / static_cast<double>(log_n.size());
      my += log_err[i] / static_cast<double>(log_n.size());
    }
    // log err = my + slope (log N - mx), solved for err = epsilon
    std::vector<double> needed;
    for (double eps : config.epsilons) needed.push_back(std::exp(mx + (std::log(eps) - my) / slope));
    report.traces_for_epsilon.push_back(std::move(needed));
  }
  const bool has_ref = std::find(config.ns.begin(), config.ns.end(), config.reference_n) != config.ns.end();
  if (has_ref) {
    for (std::size_t k : config.ks) {
      if (std::find(config.ks.begin(), config.ks.end(), 2 * k) == config.ks.end()) continue;
      report.doubling_ratios.emplace_back(
          k, report.cell(k, config.reference_n).mean_l1 / report.cell(2 * k, config.reference_n).mean_l1);
    }
  }
  return report;
}

void write_scaling_csv(const std::filesystem::path& path, const ScalingReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(10);
  out << "v,m,K,N,mean_L1,std_L1,repetitions\n";
  for (const auto& c : report.cells) {
    out << report.v << ',' << report.m << ',' << c.k << ',' << c.n << ',' << c.mean_l1 << ','
        << c.std_l1 << ',' << c.repetitions << '\n';
  }
}

nlohmann::json scaling_summary(const ScalingReport& report) {
  nlohmann::json j;
  j["v"] = report.v;
  j["m"] = report.m;
  j["repetitions"] = report.config.repetitions;
  j["reference_n"] = report.config.reference_n;
  nlohmann::json per_k = nlohmann::json::array();
  for (std::size_t i = 0; i < report.config.ks.size(); ++i) {
    nlohmann::json e;
    e["K"] = report.config.ks[i];
    e["slope"] = report.slopes[i];
    nlohmann::json need = nlohmann::json::array();
    for (std::size_t q = 0; q < report.config.epsilons.size(); ++q) {
      need.push_back({{"epsilon", report.config.epsilons[q]}, {"traces", report.traces_for_epsilon[i][q]}});
    }
    e["traces_for_epsilon"] = need;
    per_k.push_back(e);
  }
  j["per_k"] = per_k;
  nlohmann::json ratios = nlohmann::json::array();
  for (const auto& [k, r] : report.doubling_ratios) ratios.push_back({{"K", k}, {"K2", 2 * k}, {"ratio", r}});
  j["doubling_ratios"] = ratios;
  return j;
}

}  // namespace cot2::theory
