#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cot2/common/rng.hpp"
#include "cot2/common/simplex.hpp"
#include "cot2/decoding/decoders.hpp"
#include "cot2/model/params.hpp"
#include "cot2/model/transformer.hpp"
#include "cot2/tasks/dataset.hpp"
#include "cot2/tensor/tape.hpp"
#include "cot2/training/optimizer.hpp"

namespace cot2::grpo {

enum class RolloutSampler { Mts, Dirichlet };

const char* rollout_sampler_name(RolloutSampler s);
RolloutSampler parse_rollout_sampler(const std::string& name);

inline constexpr double kDirichletFloor = 1e-4;
inline constexpr double kAdvantageGuard = 1e-4;
inline constexpr double kLogRatioClamp = 20.0;

struct GrpoConfig {
  std::size_t group_size = 8;
  std::size_t k = 3;
  double clip = 0.1;
  double kl_weight = 0.0;
  double dirichlet_scale = 20.0;
  RolloutSampler sampler = RolloutSampler::Mts;
  /// Sample continuous steps from softmax(logits / K) and use the plain product
  /// of the K token ratios instead of their geometric mean. Off by default:
  /// rollouts then drift from the distribution the SFT model was trained on.
  bool scale_logits_by_k = false;
  training::AdamWConfig optimizer{.learning_rate = 5e-5, .weight_decay = 0.01};
  std::size_t batch_size = 16;
  /// Passes over the training split.
  std::size_t epochs = 1;
  /// Validate every this many optimizer steps (0: never during training).
  std::size_t eval_every = 10;
  /// Independent decodes per validation example when measuring accuracy.
  std::size_t eval_runs = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One generation step of a rollout. MTS steps t < m record K tokens, Dirichlet
/// steps t < m a simplex point; the final step records one token.
struct StepAction {
  std::vector<std::size_t> tokens;
  std::vector<double> log_point;
};

struct Trajectory {
  std::vector<StepAction> steps;
  /// Weights over the vocabulary fed back after steps 1..m-1.
  std::vector<std::vector<double>> fed;
  /// Per-step log-probability terms under the rollout policy (see
  /// trajectory_log_terms).
  std::vector<double> old_log_terms;
  /// Per-step entropy of the rollout policy's alpha_t.
  std::vector<double> entropy;
  std::size_t answer = 0;
  double reward = 0.0;
  double advantage = 0.0;
};

/// (r - mean) / (population std + 1e-4); zeros when all rewards agree.
std::vector<double> advantage(std::span<const double> rewards);

/// exp((sum new - sum old) / K), in log space.
double mts_ratio(std::span<const double> new_logprobs, std::span<const double> old_logprobs);
double discrete_ratio(double new_logprob, double old_logprob);
/// r - ln r - 1 with r = exp(logp_ref - logp_cur).
double kl_schulman(double logp_ref, double logp_cur);

/// Concentration gamma * alpha' where alpha' is alpha floored at 1e-4 and
/// renormalized.
std::vector<double> dirichlet_concentration(const TokenDistribution& alpha, double gamma);

/// Log of a Dir(gamma alpha') draw. Gamma variates with shape below one are
/// drawn as log G(a+1) + log(U)/a so tiny shapes do not underflow.
std::vector<double> dirichlet_log_sample(const TokenDistribution& alpha, double gamma,
                                         Stream& rng);
TokenDistribution dirichlet_sample(const TokenDistribution& alpha, double gamma, Stream& rng);

double dirichlet_log_density_at_log(std::span<const double> log_point,
                                    const TokenDistribution& alpha, double gamma);
double dirichlet_log_density(const TokenDistribution& point, const TokenDistribution& alpha,
                             double gamma);

/// Dirichlet log-density of a fixed point as a function of the 1 x v row
/// alpha on the tape.
tensor::Var dirichlet_log_density(tensor::Var alpha, std::span<const double> log_point,
                                  double gamma);

/// 1 x m row of per-step log terms of a trajectory under `p`, from one forward
/// pass over the prompt and the trajectory's fed rows: the mean of the K token
/// log-probs (or their sum with logit scaling) for MTS steps, the Dirichlet
/// log-density for Dirichlet steps, and the answer log-prob at step m.
tensor::Var trajectory_log_terms(const model::BoundParams& p, std::span<const std::size_t> prompt,
                                 const Trajectory& trajectory, const GrpoConfig& config);

/// G rollouts of the frozen policy `old_params`. Trajectory g draws from the
/// stream rng.fork(g). Rewards and advantages are filled in.
std::vector<Trajectory> sample_group(const model::LmParams& old_params,
                                     const tasks::Example& example, const GrpoConfig& config,
                                     const Stream& rng);

/// A group together with the example it was rolled out on.
struct Group {
  const tasks::Example* example = nullptr;
  std::vector<Trajectory> trajectories;
};

/// -(1/(G m)) sum_i sum_t min(r A, clip(r, 1-eps, 1+eps) A) plus beta times
/// the mean Schulman KL to `reference` (ignored when beta is 0).
tensor::Var grpo_loss(const model::BoundParams& p, const Group& group, const GrpoConfig& config,
                      const model::LmParams* reference = nullptr);

struct RatioStats {
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
};

RatioStats ratio_stats(const model::LmParams& params, const std::vector<Group>& groups,
                       const GrpoConfig& config);

struct GrpoStepMetrics {
  std::size_t step = 0;
  double mean_reward = 0.0;
  /// NaN when the step was not validated.
  double val_accuracy = 0.0;
  std::vector<double> entropy;
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
};

struct GrpoResult {
  model::LmParams params;
  std::vector<GrpoStepMetrics> log;
};

/// Decoder matching the rollout sampler: MTS with K draws, or base CoT2 for
/// Dirichlet-trained models.
decoding::DecoderSpec inference_decoder(const GrpoConfig& config);

/// Validation accuracy averaged over config.eval_runs decodes.
double grpo_val_accuracy(const model::LmParams& params, const tasks::Dataset& data,
                         const GrpoConfig& config);

/// Reference policy is `params` as given and never updated; the old policy is
/// refreshed before every batch.
GrpoResult grpo_train(const model::LmParams& params, const tasks::Dataset& data,
                      const GrpoConfig& config,
                      const std::function<void(const GrpoStepMetrics&)>& on_step = {});

void write_grpo_csv(const std::filesystem::path& path, const std::vector<GrpoStepMetrics>& log,
                    std::size_t steps);

}  // namespace cot2::grpo
