#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "cot2/common/error.hpp"
#include "cot2/model/transformer.hpp"
#include "cot2/tasks/mnns.hpp"
#include "cot2/tensor/functional.hpp"
#include "cot2/tensor/ops.hpp"
#include "cot2/training/losses.hpp"
#include "cot2/training/optimizer.hpp"
#include "cot2/training/trainer.hpp"
#include "fd_probe.hpp"

namespace cot2::training {
namespace {

using model::LmParams;
using model::ModelConfig;
using tasks::Example;

// Synthetic 2-step examples over a 10-token vocabulary.
Example toy_example(Stream& rng) {
  Example e;
  e.prompt = {0, 1 + rng() % 4, 1 + rng() % 4};
  std::vector<std::pair<std::size_t, std::uint64_t>> counts;
  for (int k = 0; k < 3; ++k) counts.emplace_back(5 + rng() % 5, 1 + rng() % 3);
  e.trace.steps.push_back(tasks::SparseStep::from_counts(counts));
  const std::size_t answer = 5 + rng() % 5;
  e.trace.steps.push_back(tasks::SparseStep::one_hot(answer));
  e.path = {e.trace.steps[0].index.front(), answer};
  e.split_key = "toy";
  return e;
}

ModelConfig toy_config(std::uint64_t seed) {
  ModelConfig c;
  c.layers = 1;
  c.heads = 1;
  c.dim = 8;
  c.vocab = 10;
  c.context = 6;
  c.seed = seed;
  return c;
}

tasks::Dataset small_mnns(int digits, int max_digit, double ratio, std::uint64_t seed) {
  tasks::MnnsGenConfig g;
  g.digits = digits;
  g.min_digit = 1;
  g.max_digit = max_digit;
  g.train_ratio = ratio;
  g.seed = seed;
  return tasks::gen_mnns(g);
}

ModelConfig mnns_config(const tasks::Dataset& d, std::size_t dim, std::uint64_t seed) {
  ModelConfig c;
  c.dim = dim;
  c.vocab = d.vocabulary.size();
  c.context = d.max_prompt_length() + d.steps;
  c.seed = seed;
  return c;
}

// Independent recomputation from the model's distributions.
double oracle_csft(const LmParams& p, const Example& e) {
  model::Prefix prefix{e.prompt, {}};
  const auto targets = e.trace.dense(p.config.vocab);
  for (std::size_t t = 0; t + 1 < targets.size(); ++t) prefix.continuous.push_back(targets[t].vector());
  const auto dists = model::all_distributions(p, prefix);
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    loss += tensor::soft_cross_entropy(targets[t], dists[e.prompt.size() - 1 + t]);
  }
  return loss;
}

double oracle_sft_term(const LmParams& p, const Example& e, std::size_t step) {
  std::vector<std::size_t> tokens = e.prompt;
  tokens.insert(tokens.end(), e.path.begin(), e.path.end() - 1);
  const auto dists = model::all_distributions(p, model::Prefix{tokens, {}});
  return -std::log(dists[e.prompt.size() - 1 + (step - 1)][e.path[step - 1]]);
}

TEST(Losses, CsftEqualsSftForOneHotTraces) {
  Stream rng(1);
  const LmParams p = LmParams::init(toy_config(3));
  for (int i = 0; i < 100; ++i) {
    Example e = toy_example(rng);
    e.trace = tasks::SupervisionTrace::from_path(e.path);
    EXPECT_LE(std::abs(csft_loss_value(p, e) - sft_loss_value(p, e)), 1e-9);
  }
}

TEST(Losses, CsftMatchesIndependentSummation) {
  const auto data = small_mnns(3, 9, 1.0, 0);
  const LmParams p = LmParams::init(mnns_config(data, 16, 4));
  for (const auto& e : data.train) {
    if (e.digits == std::vector<int>{2, 1, 4}) {
      EXPECT_NEAR(csft_loss_value(p, e), oracle_csft(p, e), 1e-10);
    }
  }
}

TEST(Losses, UniformPredictorGivesStepsTimesLogV) {
  LmParams p = LmParams::init(toy_config(5));
  p.token_embedding.fill(0.0);
  Stream rng(2);
  const Example e = toy_example(rng);
  EXPECT_NEAR(sft_loss_value(p, e), 2.0 * std::log(10.0), 1e-12);
}

TEST(Losses, SparseSftSubsets) {
  const auto data = small_mnns(3, 9, 1.0, 0);
  const LmParams p = LmParams::init(mnns_config(data, 16, 6));
  const Example* fig = nullptr;
  for (const auto& e : data.train)
    if (e.digits == std::vector<int>{2, 1, 4}) fig = &e;
  ASSERT_NE(fig, nullptr);
  tensor::Tape tape;
  const auto bound = model::bind(tape, p, nullptr);
  const std::vector<std::size_t> all{1, 2, 3}, answer_only{3}, ends{1, 3};
  EXPECT_EQ(sparse_sft_loss(bound, *fig, all).value()[0], sft_loss(bound, *fig).value()[0]);
  EXPECT_NEAR(sparse_sft_loss(bound, *fig, answer_only).value()[0], oracle_sft_term(p, *fig, 3), 1e-12);
  EXPECT_NEAR(sparse_sft_loss(bound, *fig, ends).value()[0],
              oracle_sft_term(p, *fig, 1) + oracle_sft_term(p, *fig, 3), 1e-12);
  const std::vector<std::size_t> bad{4};
  EXPECT_THROW(sparse_sft_loss(bound, *fig, bad), DataError);
}

TEST(Losses, TraceLengthMismatchIsDataError) {
  Stream rng(3);
  const LmParams p = LmParams::init(toy_config(1));
  Example e = toy_example(rng);
  e.path.pop_back();
  EXPECT_THROW(csft_loss_value(p, e), DataError);
  e = toy_example(rng);
  e.path[0] = 99;
  EXPECT_THROW(sft_loss_value(p, e), DataError);
}

double loss_with_grads(const LmParams& p, LmParams* g, const std::vector<Example>& xs,
                       Objective objective) {
  double total = 0.0;
  for (const auto& e : xs) {
    tensor::Tape tape;
    const auto bound = model::bind(tape, p, g);
    tensor::Var loss = objective == Objective::Csft ? csft_loss(bound, e) : sft_loss(bound, e);
    if (g) tape.backward(loss);
    total += loss.value()[0];
  }
  return total;
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Stream rng(4);
  std::vector<Example> xs;
  for (int i = 0; i < 3; ++i) xs.push_back(toy_example(rng));
  LmParams p = LmParams::init(toy_config(9));
  testing::jitter(p, 9, 0.2);
  for (Objective obj : {Objective::Csft, Objective::Sft}) {
    const auto report = testing::directional_probes(
        p, [&](const LmParams& q, LmParams* g) { return loss_with_grads(q, g, xs, obj); }, 50, 17);
    EXPECT_LE(report.worst_relative_error, 1e-4);
  }
}

TEST(Losses, TeacherForcedTargetsReceiveGradient) {
  Stream rng(5);
  const Example e = toy_example(rng);
  const LmParams p = LmParams::init(toy_config(2));
  tensor::Tape tape;
  const auto bound = model::bind(tape, p, nullptr);
  tensor::Tensor mix = tensor::Tensor::zeros(1, 10);
  const auto target = e.trace.steps[0].dense(10);
  std::copy(target.probs().begin(), target.probs().end(), mix.row(0).begin());
  tensor::Var fed = tape.variable(mix);
  tensor::Var loss = csft_loss_given_prefix(bound, e, fed);
  tape.backward(loss);
  double norm = 0.0;
  for (double g : fed.grad().values()) norm += g * g;
  EXPECT_GT(norm, 0.0);
  EXPECT_EQ(loss.value()[0], csft_loss_value(p, e));
}

TEST(Losses, TeacherForcingIgnoresModelPredictions) {
  Stream rng(6);
  const Example e = toy_example(rng);
  LmParams a = LmParams::init(toy_config(1));
  LmParams b = a;
  // Changing the model changes its own alpha_1 but not the teacher-forced input.
  testing::jitter(b, 3, 0.5);
  EXPECT_NE(self_feeding_prefixes(a, e), self_feeding_prefixes(b, e));
  EXPECT_NEAR(csft_loss_value(b, e), oracle_csft(b, e), 1e-10);
  PrefixOptions self;
  self.regime = PrefixRegime::SelfFeeding;
  EXPECT_NE(csft_loss_value(b, e, self), csft_loss_value(b, e));
}

TEST(Losses, SelfFeedingFirstStepMatchesTeacherForcing) {
  Stream rng(7);
  const Example e = toy_example(rng);
  const LmParams p = LmParams::init(toy_config(4));
  const auto fed = self_feeding_prefixes(p, e);
  ASSERT_EQ(fed.size(), 1u);
  EXPECT_EQ(fed[0], model::next_distribution(p, model::Prefix{e.prompt, {}}).vector());
  EXPECT_EQ(fed, self_feeding_prefixes(p, e));
}

TEST(Losses, SelfFeedingBackpropMatchesFiniteDifferences) {
  Stream rng(8);
  std::vector<Example> xs{toy_example(rng)};
  LmParams p = LmParams::init(toy_config(11));
  testing::jitter(p, 11, 0.2);
  PrefixOptions opts;
  opts.regime = PrefixRegime::SelfFeeding;
  opts.backprop_through_fed = true;
  const auto report = testing::directional_probes(
      p,
      [&](const LmParams& q, LmParams* g) {
        tensor::Tape tape;
        const auto bound = model::bind(tape, q, g);
        tensor::Var loss = csft_loss(bound, xs[0], opts);
        if (g) tape.backward(loss);
        return loss.value()[0];
      },
      20, 5);
  EXPECT_LE(report.worst_relative_error, 1e-4);
}

TEST(Losses, RegimesCoincideAfterConvergence) {
  const auto data = small_mnns(2, 3, 1.0, 0);
  TrainConfig cfg;
  cfg.objective = Objective::Csft;
  cfg.optimizer.learning_rate = 1e-2;
  cfg.epochs = 400;
  cfg.batch_size = 9;
  cfg.eval_every = 0;
  const auto result = train(LmParams::init(mnns_config(data, 16, 1)), data, cfg);
  PrefixOptions self;
  self.regime = PrefixRegime::SelfFeeding;
  for (const auto& e : data.train) {
    const double tf = csft_loss_value(result.params, e);
    const double sf = csft_loss_value(result.params, e, self);
    EXPECT_NEAR(tf, sf, 1e-2);
    EXPECT_NEAR(tf, std::log(2.0), 5e-2);
  }
}

TEST(AdamW, FirstStepMovesBySignedLearningRate) {
  LmParams p = LmParams::init(toy_config(1));
  LmParams g = LmParams::zeros_like(p);
  g.token_embedding[0] = 3.0;
  g.token_embedding[1] = -0.5;
  const LmParams before = p;
  AdamW opt(p, {.learning_rate = 0.1});
  opt.step(p, g);
  EXPECT_NEAR(p.token_embedding[0], before.token_embedding[0] - 0.1, 1e-8);
  EXPECT_NEAR(p.token_embedding[1], before.token_embedding[1] + 0.1, 1e-8);
  EXPECT_EQ(p.token_embedding[2], before.token_embedding[2]);
}

TEST(AdamW, DecoupledDecayShrinksWeights) {
  LmParams p = LmParams::init(toy_config(1));
  const double w = p.token_embedding[5];
  AdamW opt(p, {.learning_rate = 0.1, .weight_decay = 0.01});
  opt.step(p, LmParams::zeros_like(p));
  EXPECT_NEAR(p.token_embedding[5], w * (1.0 - 0.001), 1e-15);
}

TEST(Trainer, ZeroLearningRateLeavesParametersUnchanged) {
  const auto data = small_mnns(3, 5, 0.8, 1);
  const LmParams init = LmParams::init(mnns_config(data, 8, 1));
  TrainConfig cfg;
  cfg.optimizer.learning_rate = 0.0;
  cfg.optimizer.weight_decay = 0.01;
  cfg.epochs = 2;
  const auto result = train(init, data, cfg);
  const auto a = init.named();
  const auto b = result.params.named();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(*a[k].second, *b[k].second);
}

TEST(Trainer, SameSeedReproducesMetrics) {
  const auto data = small_mnns(3, 5, 0.8, 2);
  TrainConfig cfg;
  cfg.optimizer.learning_rate = 1e-3;
  cfg.epochs = 5;
  cfg.seed = 3;
  const LmParams init = LmParams::init(mnns_config(data, 8, 3));
  const auto a = train(init, data, cfg);
  const auto b = train(init, data, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_accuracy, b.log[i].val_accuracy);
  }
  EXPECT_EQ(a.params.token_embedding, b.params.token_embedding);
}

TEST(Trainer, EpochLossTrendsDownOnSmallMnns) {
  int decreasing = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = small_mnns(3, 5, 0.8, seed);
    TrainConfig cfg;
    cfg.optimizer.learning_rate = 1e-3;
    cfg.epochs = 5;
    cfg.seed = seed;
    cfg.eval_every = 0;
    const auto r = train(LmParams::init(mnns_config(data, 24, seed)), data, cfg);
    bool monotone = true;
    for (std::size_t i = 1; i < r.log.size(); ++i) monotone &= r.log[i].train_loss <= r.log[i - 1].train_loss;
    decreasing += monotone;
  }
  EXPECT_GE(decreasing, 2);
}

TEST(Trainer, NonFiniteLossAbortsWithSnapshot) {
  const auto data = small_mnns(3, 5, 0.8, 1);
  LmParams init = LmParams::init(mnns_config(data, 8, 1));
  init.blocks[0].wq[0] = std::numeric_limits<double>::quiet_NaN();
  const auto dir = std::filesystem::temp_directory_path() / "cot2_nan_snapshot";
  std::filesystem::remove_all(dir);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.snapshot_dir = dir;
  EXPECT_THROW(train(init, data, cfg), NumericError);
  EXPECT_TRUE(std::filesystem::exists(dir / "nan_snapshot.json"));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace cot2::training
