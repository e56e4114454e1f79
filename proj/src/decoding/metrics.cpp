#include "cot2/decoding/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cot2/common/error.hpp"
#include "cot2/common/parallel.hpp"

namespace cot2::decoding {
namespace {

constexpr std::uint64_t kTieKey = 0x71eb;

MetricPoint summarize(std::size_t k, const std::vector<double>& per_run) {
  MetricPoint p;
  p.k = k;
  p.runs = per_run.size();
  for (double x : per_run) p.mean += x;
  p.mean /= static_cast<double>(per_run.size());
  for (double x : per_run) p.std += (x - p.mean) * (x - p.mean);
  p.std = std::sqrt(p.std / static_cast<double>(per_run.size()));
  return p;
}

void check_ks(const std::vector<std::size_t>& ks, std::size_t runs) {
  if (ks.empty() || runs == 0) {
    throw UsageError("metrics: need at least one k and one run");
  }
  for (std::size_t k : ks) {
    if (k == 0) throw UsageError("metrics: k must be positive");
  }
}

}  // namespace

double accuracy(const model::LmParams& params,
                const std::vector<tasks::Example>& examples, std::size_t steps,
                const DecoderSpec& spec, std::uint64_t seed) {
  if (examples.empty()) return 0.0;
  std::vector<int> correct(examples.size(), 0);
  parallel_for(examples.size(), [&](std::size_t i) {
    Stream rng(seed, {i});
    correct[i] = decode(params, examples[i].prompt, steps, spec, rng).answer ==
                 examples[i].answer();
  });
  double n = 0.0;
  for (int c : correct) n += c;
  return n / static_cast<double>(examples.size());
}

std::vector<std::vector<std::vector<std::size_t>>> sample_answers(
    const model::LmParams& params, const std::vector<tasks::Example>& examples,
    std::size_t steps, const DecoderSpec& spec, std::size_t k_max,
    std::size_t runs, std::uint64_t seed) {
  std::vector<std::vector<std::vector<std::size_t>>> out(
      runs, std::vector<std::vector<std::size_t>>(examples.size(),
                                                  std::vector<std::size_t>(k_max)));
  parallel_for(runs * examples.size(), [&](std::size_t job) {
    const std::size_t r = job / examples.size(), i = job % examples.size();
    for (std::size_t s = 0; s < k_max; ++s) {
      Stream rng(seed, {r, i, s});
      out[r][i][s] = decode(params, examples[i].prompt, steps, spec, rng).answer;
    }
  });
  return out;
}

std::vector<MetricPoint> pass_at_k(const model::LmParams& params,
                                   const std::vector<tasks::Example>& examples,
                                   std::size_t steps, const DecoderSpec& spec,
                                   const std::vector<std::size_t>& ks,
                                   std::size_t runs, std::uint64_t seed) {
  check_ks(ks, runs);
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
  const auto answers = sample_answers(params, examples, steps, spec, k_max, runs, seed);
  std::vector<MetricPoint> curve;
  for (std::size_t k : ks) {
    std::vector<double> per_run(runs, 0.0);
    for (std::size_t r = 0; r < runs; ++r) {
      for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& a = answers[r][i];
        per_run[r] += std::find(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k),
                                examples[i].answer()) != a.begin() + static_cast<std::ptrdiff_t>(k);
      }
      per_run[r] /= static_cast<double>(std::max<std::size_t>(examples.size(), 1));
    }
    curve.push_back(summarize(k, per_run));
  }
  return curve;
}

std::size_t majority_vote(const std::vector<std::size_t>& votes, Stream& rng) {
  if (votes.empty()) {
    throw UsageError("majority_vote: no votes");
  }
  std::map<std::size_t, std::size_t> tally;
  for (std::size_t v : votes) ++tally[v];
  std::size_t top = 0;
  for (const auto& [answer, count] : tally) top = std::max(top, count);
  std::vector<std::size_t> tied;
  for (const auto& [answer, count] : tally) {
    if (count == top) tied.push_back(answer);
  }
  if (tied.size() == 1) return tied.front();
  const auto pick = std::min(tied.size() - 1,
                             static_cast<std::size_t>(rng.uniform() * static_cast<double>(tied.size())));
  return tied[pick];
}

std::vector<MetricPoint> maj_at_k(const model::LmParams& params,
                                  const std::vector<tasks::Example>& examples,
                                  std::size_t steps, const DecoderSpec& spec,
                                  const std::vector<std::size_t>& ks,
                                  std::size_t runs, std::uint64_t seed) {
  check_ks(ks, runs);
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
  const auto answers = sample_answers(params, examples, steps, spec, k_max, runs, seed);
  std::vector<MetricPoint> curve;
  for (std::size_t k : ks) {
    std::vector<double> per_run(runs, 0.0);
    for (std::size_t r = 0; r < runs; ++r) {
      for (std::size_t i = 0; i < examples.size(); ++i) {
        const std::vector<std::size_t> votes(answers[r][i].begin(),
                                             answers[r][i].begin() + static_cast<std::ptrdiff_t>(k));
        Stream tie(seed, {kTieKey, r, i, k});
        per_run[r] += majority_vote(votes, tie) == examples[i].answer();
      }
      per_run[r] /= static_cast<double>(std::max<std::size_t>(examples.size(), 1));
    }
    curve.push_back(summarize(k, per_run));
  }
  return curve;
}

double step_entropy(const TokenDistribution& alpha) { return entropy(alpha.probs()); }

std::vector<double> mean_step_entropy(const model::LmParams& params,
                                      const std::vector<tasks::Example>& examples,
                                      std::size_t steps, const DecoderSpec& spec,
                                      std::uint64_t seed) {
  std::vector<std::vector<double>> per(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) {
    Stream rng(seed, {i});
    per[i] = decode(params, examples[i].prompt, steps, spec, rng).entropy;
  });
  std::vector<double> mean(steps, 0.0);
  for (const auto& e : per)
    for (std::size_t t = 0; t < steps; ++t) mean[t] += e[t];
  for (double& x : mean) x /= static_cast<double>(std::max<std::size_t>(examples.size(), 1));
  return mean;
}

}  // namespace cot2::decoding
