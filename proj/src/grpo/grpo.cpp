#include "cot2/grpo/grpo.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "cot2/common/error.hpp"
#include "cot2/common/parallel.hpp"
#include "cot2/decoding/metrics.hpp"
#include "cot2/tensor/ops.hpp"

namespace cot2::grpo {
namespace {

using tensor::GatherEntry;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

std::vector<double> floored(std::span<const double> alpha) {
  std::vector<double> a(alpha.begin(), alpha.end());
  double total = 0.0;
  for (double& x : a) {
    x = std::max(x, kDirichletFloor);
    total += x;
  }
  for (double& x : a) x /= total;
  return a;
}

double clamped_log_ratio(double now, double old) {
  return std::clamp(now - old, -kLogRatioClamp, kLogRatioClamp);
}

// sum_t min(r_t A, clip(r_t) A) over a 1 x m row of new log terms.
Var clipped_surrogate(Var now, std::vector<double> old, double adv, double eps) {
  const Tensor& x = now.value();
  double total = 0.0;
  std::vector<double> slope(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double lr = clamped_log_ratio(x[t], old[t]);
    const double r = std::exp(lr);
    const double plain = r * adv;
    const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps) * adv;
    if (plain <= clipped) {
      total += plain;
      const bool saturated = std::abs(x[t] - old[t]) > kLogRatioClamp;
      slope[t] = saturated ? 0.0 : plain;
    } else {
      total += clipped;
    }
  }
  Tensor out = Tensor::zeros(1, 1);
  out[0] = total;
  return now.tape().record(std::move(out), {now}, [slope](const tensor::AdjointContext& ctx) {
    Tensor* g = ctx.input_grad(0);
    const double up = ctx.out_grad()[0];
    for (std::size_t t = 0; t < slope.size(); ++t) (*g)[t] += up * slope[t];
  });
}

// sum_t kl_schulman(ref_t, cur_t) over a 1 x m row of current log terms.
Var schulman_kl(Var cur, std::vector<double> ref) {
  const Tensor& x = cur.value();
  double total = 0.0;
  std::vector<double> slope(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double lr = std::clamp(ref[t] - x[t], -kLogRatioClamp, kLogRatioClamp);
    total += std::exp(lr) - lr - 1.0;
    slope[t] = std::abs(ref[t] - x[t]) > kLogRatioClamp ? 0.0 : 1.0 - std::exp(lr);
  }
  Tensor out = Tensor::zeros(1, 1);
  out[0] = total;
  return cur.tape().record(std::move(out), {cur}, [slope](const tensor::AdjointContext& ctx) {
    Tensor* g = ctx.input_grad(0);
    const double up = ctx.out_grad()[0];
    for (std::size_t t = 0; t < slope.size(); ++t) (*g)[t] += up * slope[t];
  });
}

std::vector<double> log_term_values(const model::LmParams& params, const tasks::Example& e,
                                    const Trajectory& traj, const GrpoConfig& config) {
  Tape tape;
  const auto bound = model::bind(tape, params, nullptr);
  const Tensor& v = trajectory_log_terms(bound, e.prompt, traj, config).value();
  return {v.values().begin(), v.values().end()};
}

std::vector<double> power_normalize(const TokenDistribution& alpha, double inv_k) {
  std::vector<double> q(alpha.size(), 0.0);
  double mx = 0.0;
  for (double a : alpha.probs()) mx = std::max(mx, a);
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = alpha[i] > 0.0 ? std::exp((std::log(alpha[i]) - std::log(mx)) * inv_k) : 0.0;
    total += q[i];
  }
  for (double& x : q) x /= total;
  return q;
}

}  // namespace

const char* rollout_sampler_name(RolloutSampler s) {
  return s == RolloutSampler::Mts ? "mts" : "dirichlet";
}

RolloutSampler parse_rollout_sampler(const std::string& name) {
  if (name == "mts") return RolloutSampler::Mts;
  if (name == "dirichlet") return RolloutSampler::Dirichlet;
  throw ConfigError("unknown rollout sampler '" + name + "'");
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo: group_size must be at least 2");
  if (k == 0) throw ConfigError("grpo: k must be at least 1");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("grpo: clip must lie in (0, 1)");
  if (!(dirichlet_scale > 0.0)) throw ConfigError("grpo: dirichlet_scale must be positive");
  if (kl_weight < 0.0) throw ConfigError("grpo: kl_weight must be nonnegative");
  if (batch_size == 0) throw ConfigError("grpo: batch_size must be positive");
  if (eval_runs == 0) throw ConfigError("grpo: eval_runs must be positive");
}

std::vector<double> advantage(std::span<const double> rewards) {
  std::vector<double> out(rewards.size(), 0.0);
  if (rewards.empty()) return out;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + kAdvantageGuard);
  return out;
}

double mts_ratio(std::span<const double> new_logprobs, std::span<const double> old_logprobs) {
  if (new_logprobs.size() != old_logprobs.size() || new_logprobs.empty()) {
    throw UsageError("mts_ratio: expected K matching log-probabilities");
  }
  double diff = 0.0;
  for (std::size_t k = 0; k < new_logprobs.size(); ++k) diff += new_logprobs[k] - old_logprobs[k];
  diff /= static_cast<double>(new_logprobs.size());
  return std::exp(std::clamp(diff, -kLogRatioClamp, kLogRatioClamp));
}

double discrete_ratio(double new_logprob, double old_logprob) {
  return std::exp(clamped_log_ratio(new_logprob, old_logprob));
}

double kl_schulman(double logp_ref, double logp_cur) {
  const double lr = logp_ref - logp_cur;
  // expm1 keeps r - 1 accurate near zero; the result is never negative.
  return std::max(0.0, std::expm1(lr) - lr);
}

std::vector<double> dirichlet_concentration(const TokenDistribution& alpha, double gamma) {
  if (!(gamma > 0.0)) throw UsageError("dirichlet: gamma must be positive");
  std::vector<double> a = floored(alpha.probs());
  for (double& x : a) x *= gamma;
  return a;
}

std::vector<double> dirichlet_log_sample(const TokenDistribution& alpha, double gamma,
                                         Stream& rng) {
  const std::vector<double> a = dirichlet_concentration(alpha, gamma);
  std::vector<double> lg(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] >= 1.0) {
      std::gamma_distribution<double> g(a[i], 1.0);
      lg[i] = std::log(g(rng));
    } else {
      std::gamma_distribution<double> g(a[i] + 1.0, 1.0);
      const double u = 1.0 - rng.uniform();
      lg[i] = std::log(g(rng)) + std::log(u) / a[i];
    }
  }
  const double mx = *std::max_element(lg.begin(), lg.end());
  double z = 0.0;
  for (double x : lg) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  for (double& x : lg) x -= lse;
  return lg;
}

TokenDistribution dirichlet_sample(const TokenDistribution& alpha, double gamma, Stream& rng) {
  std::vector<double> p = dirichlet_log_sample(alpha, gamma, rng);
  for (double& x : p) x = std::exp(x);
  return TokenDistribution(std::move(p));
}

double dirichlet_log_density_at_log(std::span<const double> log_point,
                                    const TokenDistribution& alpha, double gamma) {
  const std::vector<double> a = dirichlet_concentration(alpha, gamma);
  if (log_point.size() != a.size()) throw UsageError("dirichlet: point size mismatch");
  double out = std::lgamma(std::accumulate(a.begin(), a.end(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) out += (a[i] - 1.0) * log_point[i] - std::lgamma(a[i]);
  return out;
}

double dirichlet_log_density(const TokenDistribution& point, const TokenDistribution& alpha,
                             double gamma) {
  std::vector<double> lp(point.size());
  for (std::size_t i = 0; i < lp.size(); ++i) lp[i] = std::log(point[i]);
  return dirichlet_log_density_at_log(lp, alpha, gamma);
}

Var dirichlet_log_density(Var alpha, std::span<const double> log_point, double gamma) {
  const Tensor& x = alpha.value();
  if (x.rows() != 1 || x.cols() != log_point.size()) {
    throw UsageError("dirichlet_log_density: alpha must be a 1 x v row matching the point");
  }
  std::vector<double> raw(x.values().begin(), x.values().end());
  const std::vector<double> norm = floored(raw);
  double total_floored = 0.0;
  for (double r : raw) total_floored += std::max(r, kDirichletFloor);
  double value = std::lgamma(gamma);
  // g_i = d value / d alpha'_i
  std::vector<double> g(norm.size());
  for (std::size_t i = 0; i < norm.size(); ++i) {
    const double a = gamma * norm[i];
    value += (a - 1.0) * log_point[i] - std::lgamma(a);
    g[i] = gamma * (log_point[i] - boost::math::digamma(a));
  }
  double centre = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) centre += g[i] * norm[i];
  std::vector<double> slope(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    slope[i] = raw[i] > kDirichletFloor ? (g[i] - centre) / total_floored : 0.0;
  }
  Tensor out = Tensor::zeros(1, 1);
  out[0] = value;
  return alpha.tape().record(std::move(out), {alpha}, [slope](const tensor::AdjointContext& ctx) {
    Tensor* grad = ctx.input_grad(0);
    const double up = ctx.out_grad()[0];
    for (std::size_t i = 0; i < slope.size(); ++i) (*grad)[i] += up * slope[i];
  });
}

Var trajectory_log_terms(const model::BoundParams& p, std::span<const std::size_t> prompt,
                         const Trajectory& traj, const GrpoConfig& config) {
  const std::size_t m = traj.steps.size();
  const std::size_t v = p.params->config.vocab;
  if (m == 0 || traj.fed.size() + 1 != m) {
    throw DataError("grpo: trajectory has " + std::to_string(m) + " steps and " +
                    std::to_string(traj.fed.size()) + " fed rows");
  }
  Tape& tape = p.token_embedding.tape();
  Var mix;
  if (m > 1) {
    Tensor rows = Tensor::zeros(m - 1, v);
    for (std::size_t t = 0; t + 1 < m; ++t) std::copy(traj.fed[t].begin(), traj.fed[t].end(), rows.row(t).begin());
    mix = tape.constant(std::move(rows));
  }
  Var logits = tensor::slice_rows(model::forward_logits(p, prompt, mix), prompt.size() - 1, m);
  Var logp = tensor::log_softmax_rows(logits);
  std::vector<Var> parts;
  if (m > 1) {
    if (config.sampler == RolloutSampler::Mts) {
      Var source = config.scale_logits_by_k
                       ? tensor::log_softmax_rows(tensor::scale(logits, 1.0 / static_cast<double>(config.k)))
                       : logp;
      const double w = config.scale_logits_by_k ? 1.0 : 1.0 / static_cast<double>(config.k);
      std::vector<std::vector<GatherEntry>> groups(m - 1);
      for (std::size_t t = 0; t + 1 < m; ++t) {
        if (traj.steps[t].tokens.size() != config.k) {
          throw DataError("grpo: MTS step does not hold K tokens");
        }
        for (std::size_t tok : traj.steps[t].tokens) groups[t].push_back({t, tok, w});
      }
      parts.push_back(tensor::gather_weighted(source, groups));
    } else {
      Var alpha = tensor::softmax_rows(tensor::slice_rows(logits, 0, m - 1));
      for (std::size_t t = 0; t + 1 < m; ++t) {
        if (traj.steps[t].log_point.size() != v) {
          throw DataError("grpo: Dirichlet step does not hold a simplex point");
        }
        parts.push_back(dirichlet_log_density(tensor::slice_rows(alpha, t, 1),
                                              traj.steps[t].log_point, config.dirichlet_scale));
      }
    }
  }
  const auto& last = traj.steps.back().tokens;
  if (last.size() != 1 || last[0] >= v) throw DataError("grpo: final step must hold one token");
  parts.push_back(tensor::gather_weighted(logp, {{{m - 1, last[0], 1.0}}}));
  return parts.size() == 1 ? parts[0] : tensor::concat_cols(parts);
}

std::vector<Trajectory> sample_group(const model::LmParams& old_params,
                                     const tasks::Example& example, const GrpoConfig& config,
                                     const Stream& rng) {
  const std::size_t m = example.trace.length();
  const std::size_t v = old_params.config.vocab;
  if (config.sampler == RolloutSampler::Mts && (config.k == 0 || config.k > v)) {
    throw ConfigError("grpo: K must lie in 1..v");
  }
  old_params.config.require_fits(example.prompt.size(), m - 1);
  std::vector<Trajectory> group(config.group_size);
  for (std::size_t g = 0; g < config.group_size; ++g) {
    Stream s = rng.fork(g);
    Trajectory& traj = group[g];
    model::Prefix prefix{example.prompt, {}};
    for (std::size_t t = 0; t < m; ++t) {
      const TokenDistribution alpha = model::next_distribution(old_params, prefix);
      traj.entropy.push_back(entropy(alpha.probs()));
      StepAction act;
      if (t + 1 == m) {
        act.tokens.push_back(sample_categorical(alpha.probs(), s));
        traj.answer = act.tokens[0];
      } else if (config.sampler == RolloutSampler::Mts) {
        const std::vector<double> q =
            config.scale_logits_by_k ? power_normalize(alpha, 1.0 / static_cast<double>(config.k))
                                     : alpha.vector();
        for (std::size_t k = 0; k < config.k; ++k) act.tokens.push_back(sample_categorical(q, s));
        traj.fed.push_back(decoding::average_draws(act.tokens, v));
      } else {
        act.log_point = dirichlet_log_sample(alpha, config.dirichlet_scale, s);
        std::vector<double> row(v);
        for (std::size_t i = 0; i < v; ++i) row[i] = std::exp(act.log_point[i]);
        traj.fed.push_back(std::move(row));
      }
      if (t + 1 < m) prefix.continuous.push_back(traj.fed.back());
      traj.steps.push_back(std::move(act));
    }
    traj.reward = traj.answer == example.answer() ? 1.0 : 0.0;
    traj.old_log_terms = log_term_values(old_params, example, traj, config);
  }
  std::vector<double> rewards;
  for (const auto& t : group) rewards.push_back(t.reward);
  const std::vector<double> adv = advantage(rewards);
  for (std::size_t g = 0; g < group.size(); ++g) group[g].advantage = adv[g];
  return group;
}

Var grpo_loss(const model::BoundParams& p, const Group& group, const GrpoConfig& config,
              const model::LmParams* reference) {
  if (group.example == nullptr || group.trajectories.empty()) {
    throw DataError("grpo: empty group");
  }
  const tasks::Example& e = *group.example;
  const std::size_t m = e.trace.length();
  const double norm = 1.0 / static_cast<double>(group.trajectories.size() * m);
  std::vector<Var> terms;
  for (const Trajectory& traj : group.trajectories) {
    if (traj.old_log_terms.size() != m) {
      throw DataError("grpo: trajectory is missing its rollout log-probabilities");
    }
    Var now = trajectory_log_terms(p, e.prompt, traj, config);
    terms.push_back(tensor::scale(clipped_surrogate(now, traj.old_log_terms, traj.advantage, config.clip), -norm));
    if (config.kl_weight > 0.0) {
      if (reference == nullptr) throw UsageError("grpo: KL weight set without a reference policy");
      terms.push_back(tensor::scale(schulman_kl(now, log_term_values(*reference, e, traj, config)),
                                    config.kl_weight * norm));
    }
  }
  Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = tensor::add(total, terms[i]);
  return total;
}

RatioStats ratio_stats(const model::LmParams& params, const std::vector<Group>& groups,
                       const GrpoConfig& config) {
  std::vector<std::vector<double>> per_group(groups.size());
  parallel_for(groups.size(), [&](std::size_t i) {
    for (const Trajectory& traj : groups[i].trajectories) {
      const std::vector<double> now = log_term_values(params, *groups[i].example, traj, config);
      for (std::size_t t = 0; t < now.size(); ++t) {
        per_group[i].push_back(std::exp(clamped_log_ratio(now[t], traj.old_log_terms[t])));
      }
    }
  });
  RatioStats stats;
  double total = 0.0, clipped = 0.0, n = 0.0;
  for (const auto& rs : per_group) {
    for (double r : rs) {
      total += r;
      clipped += (r < 1.0 - config.clip || r > 1.0 + config.clip) ? 1.0 : 0.0;
      n += 1.0;
    }
  }
  if (n > 0.0) {
    stats.mean_ratio = total / n;
    stats.clip_fraction = clipped / n;
  }
  return stats;
}

decoding::DecoderSpec inference_decoder(const GrpoConfig& config) {
  if (config.sampler == RolloutSampler::Mts) {
    return {.sampler = decoding::Sampler::Mts, .k = config.k, .temperature = 1.0};
  }
  return {};
}

double grpo_val_accuracy(const model::LmParams& params, const tasks::Dataset& data,
                         const GrpoConfig& config) {
  const auto points = decoding::pass_at_k(params, data.val, data.steps, inference_decoder(config),
                                          {1}, config.eval_runs, Stream::mix(config.seed ^ 0x7a1de));
  return points[0].mean;
}

GrpoResult grpo_train(const model::LmParams& params, const tasks::Dataset& data,
                      const GrpoConfig& config,
                      const std::function<void(const GrpoStepMetrics&)>& on_step) {
  config.validate();
  if (data.train.empty()) throw DataError("grpo: empty training split");
  const model::LmParams reference = params;
  GrpoResult result{params, {}};
  model::LmParams& theta = result.params;
  training::AdamW optimizer(theta, config.optimizer);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    Stream shuffle(config.seed, {0x6a90, epoch});
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(shuffle.uniform() * static_cast<double>(i)));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - b);
      const model::LmParams old = theta;
      std::vector<Group> groups(n);
      std::vector<model::LmParams> grads(n, model::LmParams::zeros_like(theta));
      std::vector<double> losses(n, 0.0);
      parallel_for(n, [&](std::size_t i) {
        const std::size_t idx = order[b + i];
        groups[i].example = &data.train[idx];
        groups[i].trajectories =
            sample_group(old, data.train[idx], config, Stream(config.seed, {0x9e0, step, idx}));
        Tape tape;
        const auto bound = model::bind(tape, theta, &grads[i]);
        Var loss = tensor::scale(grpo_loss(bound, groups[i], config, &reference),
                                 1.0 / static_cast<double>(n));
        tape.backward(loss);
        losses[i] = loss.value()[0];
      });
      model::LmParams total = model::LmParams::zeros_like(theta);
      double loss_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        total.axpy(1.0, grads[i]);
        loss_sum += losses[i];
      }
      if (!std::isfinite(loss_sum) || !total.all_finite()) {
        throw NumericError("grpo: non-finite loss at step " + std::to_string(step));
      }
      optimizer.step(theta, total);
      ++step;

      GrpoStepMetrics metrics;
      metrics.step = step;
      double rewards = 0.0, count = 0.0;
      const std::size_t m = data.steps;
      metrics.entropy.assign(m, 0.0);
      for (const Group& g : groups) {
        for (const Trajectory& t : g.trajectories) {
          rewards += t.reward;
          count += 1.0;
          for (std::size_t s = 0; s < m && s < t.entropy.size(); ++s) metrics.entropy[s] += t.entropy[s];
        }
      }
      metrics.mean_reward = rewards / count;
      for (double& h : metrics.entropy) h /= count;
      const RatioStats stats = ratio_stats(theta, groups, config);
      metrics.mean_ratio = stats.mean_ratio;
      metrics.clip_fraction = stats.clip_fraction;
      metrics.val_accuracy = std::numeric_limits<double>::quiet_NaN();
      if (config.eval_every > 0 && step % config.eval_every == 0 && !data.val.empty()) {
        metrics.val_accuracy = grpo_val_accuracy(theta, data, config);
      }
      if (on_step) on_step(metrics);
      result.log.push_back(std::move(metrics));
    }
  }
  return result;
}

void write_grpo_csv(const std::filesystem::path& path, const std::vector<GrpoStepMetrics>& log,
                    std::size_t steps) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,mean_reward,val_acc";
  for (std::size_t t = 1; t <= steps; ++t) out << ",entropy_pos_" << t;
  out << ",mean_ratio,clip_fraction\n";
  out.precision(10);
  for (const auto& row : log) {
    out << row.step << ',' << row.mean_reward << ',';
    if (std::isfinite(row.val_accuracy)) out << row.val_accuracy;
    for (std::size_t t = 0; t < steps; ++t) out << ',' << (t < row.entropy.size() ? row.entropy[t] : 0.0);
    out << ',' << row.mean_ratio << ',' << row.clip_fraction << '\n';
  }
}

}  // namespace cot2::grpo
