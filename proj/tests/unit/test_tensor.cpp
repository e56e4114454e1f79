#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "cot2/common/error.hpp"
#include "cot2/tensor/functional.hpp"
#include "cot2/tensor/ops.hpp"
#include "gradcheck.hpp"

namespace cot2::tensor {
namespace {

using testing::full_gradient_error;
using testing::LossBuilder;
using testing::random_tensor;
using testing::weighted_sum;

constexpr double kFdTolerance = 1e-4;
constexpr int kInstances = 50;

// Runs the finite-difference check on kInstances random input sets.
template <typename MakeInputs>
void check_primitive(const char* name, MakeInputs make_inputs,
                     const LossBuilder& f) {
  Stream rng(0xfd, {std::hash<std::string>{}(name)});
  for (int i = 0; i < kInstances; ++i) {
    const double err = full_gradient_error(f, make_inputs(rng));
    ASSERT_LE(err, kFdTolerance) << name << " instance " << i;
  }
}

TEST(Matmul, IdentityAndDotExamples) {
  Tape tape;
  Var id = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var b = tape.constant(Tensor({2, 2}, {2, 3, 4, 5}));
  EXPECT_EQ(matmul(id, b).value(), b.value());
  Var r = tape.constant(Tensor({1, 2}, {1, 2}));
  Var c = tape.constant(Tensor({2, 1}, {3, 4}));
  EXPECT_EQ(matmul(r, c).value()[0], 11.0);
}

TEST(Matmul, ShapeMismatchNamesShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(Matmul, SumGradientMatchesFiniteDifferences) {
  Stream rng(11);
  const double err = full_gradient_error(
      [](Tape&, const std::vector<Var>& x) { return sum(matmul(x[0], x[1])); },
      {random_tensor(rng, 4, 4), random_tensor(rng, 4, 4)});
  EXPECT_LE(err, kFdTolerance);
}

TEST(Backward, SquareHasGradientSix) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(3.0));
  Var loss = mul(x, x);
  tape.backward(loss);
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, UnreachableParameterGetsZero) {
  Tensor used = Tensor::scalar(2.0), unused = Tensor::scalar(5.0);
  Tensor used_grad = Tensor::scalar(0.0), unused_grad = Tensor::scalar(0.0);
  Tape tape;
  Var a = tape.parameter(used, &used_grad);
  tape.parameter(unused, &unused_grad);
  tape.backward(scale(a, 4.0));
  EXPECT_EQ(used_grad[0], 4.0);
  EXPECT_EQ(unused_grad[0], 0.0);
}

TEST(Backward, NonScalarLossIsUsageError) {
  Tape tape;
  Var x = tape.variable(Tensor({1, 2}, {1, 2}));
  EXPECT_THROW(tape.backward(x), UsageError);
}

TEST(Backward, ReplayGivesBitIdenticalGradients) {
  Stream rng(3);
  Tensor w = random_tensor(rng, 3, 4);
  Tensor gw1 = Tensor::zeros_like(w), gw2 = Tensor::zeros_like(w);
  Tape tape;
  Var x = tape.constant(random_tensor(rng, 2, 3));
  Var p = tape.parameter(w, &gw1);
  Var loss = sum(log_softmax_rows(gelu(matmul(x, p))));
  tape.backward(loss);
  const Tensor first = p.grad();
  tape.backward(loss);
  EXPECT_EQ(p.grad(), first);
  for (std::size_t i = 0; i < gw1.size(); ++i) gw2[i] = 2.0 * first[i];
  EXPECT_EQ(gw1, gw2);
}

TEST(Backward, SoftmaxCrossEntropyMatchesFiniteDifferences) {
  Stream rng(5);
  const std::vector<double> target{0.1, 0.2, 0.3, 0.4, 0.0};
  const double err = full_gradient_error(
      [&](Tape&, const std::vector<Var>& x) {
        return soft_cross_entropy(target, softmax_rows(x[0]));
      },
      {random_tensor(rng, 1, 5, -3, 3)});
  EXPECT_LE(err, kFdTolerance);
}

TEST(Primitives, FiniteDifferenceOnRandomInstances) {
  auto two = [](std::size_t r1, std::size_t c1, std::size_t r2, std::size_t c2) {
    return [=](Stream& rng) {
      return std::vector<Tensor>{random_tensor(rng, r1, c1),
                                 random_tensor(rng, r2, c2)};
    };
  };
  auto one = [](std::size_t r, std::size_t c) {
    return [=](Stream& rng) { return std::vector<Tensor>{random_tensor(rng, r, c, -2, 2)}; };
  };
  check_primitive("matmul", two(3, 4, 4, 2), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, matmul(x[0], x[1]), 1);
  });
  check_primitive("add", two(3, 4, 3, 4), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, add(x[0], x[1]), 2);
  });
  check_primitive("sub", two(3, 4, 3, 4), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, sub(x[0], x[1]), 3);
  });
  check_primitive("mul", two(3, 4, 3, 4), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, mul(x[0], x[1]), 4);
  });
  check_primitive("add_row", two(3, 4, 1, 4), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, add_row(x[0], x[1]), 5);
  });
  check_primitive("transpose", one(3, 5), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, transpose(x[0]), 6);
  });
  check_primitive("gelu", one(3, 5), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, gelu(x[0]), 7);
  });
  check_primitive(
      "layer_norm",
      [](Stream& rng) {
        return std::vector<Tensor>{random_tensor(rng, 3, 6, -2, 2),
                                   random_tensor(rng, 1, 6),
                                   random_tensor(rng, 1, 6)};
      },
      [](Tape& t, const std::vector<Var>& x) {
        return weighted_sum(t, layer_norm(x[0], x[1], x[2]), 8);
      });
  check_primitive("softmax_rows", one(3, 5), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, softmax_rows(x[0], 0.7), 9);
  });
  check_primitive("log_softmax_rows", one(3, 5), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, log_softmax_rows(x[0]), 10);
  });
  check_primitive("causal_attention", two(4, 3, 4, 3), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, softmax_rows(causal_scores(x[0], x[1], 0.6)), 11);
  });
  check_primitive("embedding_lookup", one(6, 3), [](Tape& t, const std::vector<Var>& x) {
    const std::vector<std::size_t> idx{4, 0, 4, 2};
    return weighted_sum(t, embedding_lookup(x[0], idx), 12);
  });
  check_primitive("embedding_mix", two(3, 6, 6, 4), [](Tape& t, const std::vector<Var>& x) {
    return weighted_sum(t, embedding_mix(x[0], x[1]), 13);
  });
  check_primitive("slices_and_concat", one(4, 5), [](Tape& t, const std::vector<Var>& x) {
    Var top = slice_rows(x[0], 1, 2);
    Var left = slice_cols(x[0], 0, 3);
    Var rows = concat_rows({top, slice_rows(x[0], 0, 1)});
    Var cols = concat_cols({left, slice_cols(x[0], 3, 2)});
    return add(weighted_sum(t, rows, 14), weighted_sum(t, cols, 15));
  });
  check_primitive("gather_weighted", one(3, 4), [](Tape& t, const std::vector<Var>& x) {
    std::vector<std::vector<GatherEntry>> groups{{{0, 1, 0.5}, {2, 3, -1.0}},
                                                 {{1, 1, 2.0}}};
    return weighted_sum(t, gather_weighted(x[0], groups), 16);
  });
  check_primitive(
      "soft_cross_entropy",
      [](Stream& rng) { return std::vector<Tensor>{random_tensor(rng, 1, 4, 0.1, 1.0)}; },
      [](Tape&, const std::vector<Var>& x) {
        const std::vector<double> target{0.25, 0.0, 0.5, 0.25};
        return soft_cross_entropy(target, x[0]);
      });
}

TEST(Ops, EmbeddingMixOneHotReproducesRowExactly) {
  Stream rng(9);
  Tensor table = random_tensor(rng, 5, 7);
  Tensor onehot({1, 5});
  onehot[3] = 1.0;
  Tape tape;
  Var mixed = embedding_mix(tape.constant(onehot), tape.constant(table));
  const std::vector<std::size_t> idx{3};
  Var looked = embedding_lookup(tape.constant(table), idx);
  EXPECT_EQ(mixed.value(), looked.value());
}

TEST(Ops, CausalScoresMaskFuture) {
  Tape tape;
  Var q = tape.constant(Tensor({3, 2}, 1.0));
  Var s = causal_scores(q, q, 1.0);
  EXPECT_TRUE(std::isinf(s.value().at(0, 1)));
  Var p = softmax_rows(s);
  EXPECT_EQ(p.value().at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p.value().at(2, 0), 1.0 / 3.0);
}

TEST(Softmax, Examples) {
  const std::vector<double> zeros{0, 0, 0};
  const auto u = softmax(zeros);
  for (double p : u.probs()) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  const std::vector<double> l{std::log(2.0), 0.0};
  const auto q = softmax(l);
  EXPECT_NEAR(q[0], 2.0 / 3.0, 1e-15);
  const std::vector<double> peak{10, 0, 0};
  EXPECT_GT(softmax(peak, 1e-3)[0], 1.0 - 1e-12);
}

TEST(Softmax, RejectsBadInput) {
  const std::vector<double> bad{0.0, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(softmax(bad), NumericError);
  const std::vector<double> ok{0.0, 1.0};
  EXPECT_THROW(softmax(ok, 0.0), UsageError);
}

TEST(Softmax, SimplexPropertyOnRandomLogits) {
  Stream rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const double spread = std::pow(10.0, 4.0 * rng.uniform() - 1.0);
    std::vector<double> logits(n);
    for (double& x : logits) x = spread * (2.0 * rng.uniform() - 1.0);
    const auto p = softmax(logits, 0.05 + 3.0 * rng.uniform());
    double total = 0.0;
    for (double x : p.probs()) {
      ASSERT_GE(x, 0.0);
      total += x;
    }
    ASSERT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SoftCrossEntropy, Examples) {
  const TokenDistribution onehot = TokenDistribution::one_hot(3, 2);
  const TokenDistribution pred({0.1, 0.2, 0.7});
  EXPECT_NEAR(soft_cross_entropy(onehot, pred), -std::log(0.7), 1e-12);
  const TokenDistribution half({0.5, 0.5});
  EXPECT_NEAR(soft_cross_entropy(half, half), std::log(2.0), 1e-12);
}

TEST(SoftCrossEntropy, BoundsOnRandomPairs) {
  Stream rng(31);
  auto random_simplex = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform() + 1e-3;
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (double& x : v) x /= s;
    return TokenDistribution(v);
  };
  for (int trial = 0; trial < 500; ++trial) {
    const auto t = random_simplex(5), p = random_simplex(5);
    double oracle = 0.0, kl = 0.0, h = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      oracle -= t[i] * std::log(p[i]);
      kl += t[i] * std::log(t[i] / p[i]);
      h -= t[i] * std::log(t[i]);
    }
    const double ce = soft_cross_entropy(t, p);
    EXPECT_NEAR(ce, oracle, 1e-12);
    EXPECT_GE(ce + 1e-12, kl);
    EXPECT_GE(kl, -1e-12);
    EXPECT_GE(ce + 1e-12, h);
  }
}

TEST(SoftCrossEntropy, SimplexViolationIsInvariantError) {
  EXPECT_THROW(TokenDistribution({0.5, 0.6}), InvariantError);
}

}  // namespace
}  // namespace cot2::tensor
