#include "cot2/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cot2/common/error.hpp"
#include "cot2/tensor/functional.hpp"
#include "cot2/tensor/ops.hpp"

namespace cot2::model {
namespace {

using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

Var attention(const BoundParams::Block& b, Var x, std::size_t heads) {
  Var q = tensor::add_row(tensor::matmul(x, b.wq), b.bq);
  Var k = tensor::add_row(tensor::matmul(x, b.wk), b.bk);
  Var v = tensor::add_row(tensor::matmul(x, b.wv), b.bv);
  const std::size_t d = x.value().cols(), dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : tensor::slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : tensor::slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : tensor::slice_cols(v, h * dh, dh);
    Var weights = tensor::softmax_rows(tensor::causal_scores(qh, kh, scale));
    outs.push_back(tensor::matmul(weights, vh));
  }
  Var merged = heads == 1 ? outs.front() : tensor::concat_cols(outs);
  return tensor::add_row(tensor::matmul(merged, b.wo), b.bo);
}

Var mlp(const BoundParams::Block& b, Var x) {
  Var h = tensor::gelu(tensor::add_row(tensor::matmul(x, b.w_up), b.b_up));
  return tensor::add_row(tensor::matmul(h, b.w_down), b.b_down);
}

Tensor mix_matrix(const std::vector<std::vector<double>>& rows, std::size_t v) {
  Tensor t = Tensor::zeros(rows.size(), v);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != v) {
      throw DimensionError("prefix: continuous token has " +
                           std::to_string(rows[r].size()) + " weights, vocabulary " +
                           std::to_string(v));
    }
    check_simplex(rows[r]);
    std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
  }
  return t;
}

Var prefix_logits(Tape& tape, const LmParams& params, const Prefix& prefix) {
  const BoundParams p = bind(tape, params, nullptr);
  Var mix;
  if (!prefix.continuous.empty()) {
    mix = tape.constant(mix_matrix(prefix.continuous, params.config.vocab));
  }
  return forward_logits(p, prefix.tokens, mix);
}

}  // namespace

BoundParams bind(Tape& tape, const LmParams& params, LmParams* grads) {
  BoundParams p;
  p.params = &params;
  auto bind_one = [&](const Tensor& value, Tensor* grad) {
    return tape.parameter(value, grads ? grad : nullptr);
  };
  LmParams* g = grads;
  p.token_embedding = bind_one(params.token_embedding, g ? &g->token_embedding : nullptr);
  p.position_embedding =
      bind_one(params.position_embedding, g ? &g->position_embedding : nullptr);
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    const BlockParams& b = params.blocks[l];
    BlockParams* gb = g ? &g->blocks[l] : nullptr;
    BoundParams::Block o;
    o.ln1_gain = bind_one(b.ln1_gain, gb ? &gb->ln1_gain : nullptr);
    o.ln1_bias = bind_one(b.ln1_bias, gb ? &gb->ln1_bias : nullptr);
    o.wq = bind_one(b.wq, gb ? &gb->wq : nullptr);
    o.bq = bind_one(b.bq, gb ? &gb->bq : nullptr);
    o.wk = bind_one(b.wk, gb ? &gb->wk : nullptr);
    o.bk = bind_one(b.bk, gb ? &gb->bk : nullptr);
    o.wv = bind_one(b.wv, gb ? &gb->wv : nullptr);
    o.bv = bind_one(b.bv, gb ? &gb->bv : nullptr);
    o.wo = bind_one(b.wo, gb ? &gb->wo : nullptr);
    o.bo = bind_one(b.bo, gb ? &gb->bo : nullptr);
    o.ln2_gain = bind_one(b.ln2_gain, gb ? &gb->ln2_gain : nullptr);
    o.ln2_bias = bind_one(b.ln2_bias, gb ? &gb->ln2_bias : nullptr);
    o.w_up = bind_one(b.w_up, gb ? &gb->w_up : nullptr);
    o.b_up = bind_one(b.b_up, gb ? &gb->b_up : nullptr);
    o.w_down = bind_one(b.w_down, gb ? &gb->w_down : nullptr);
    o.b_down = bind_one(b.b_down, gb ? &gb->b_down : nullptr);
    p.blocks.push_back(o);
  }
  p.lnf_gain = bind_one(params.lnf_gain, g ? &g->lnf_gain : nullptr);
  p.lnf_bias = bind_one(params.lnf_bias, g ? &g->lnf_bias : nullptr);
  if (params.config.tied) {
    p.output = tensor::transpose(p.token_embedding);
  } else {
    p.head = bind_one(params.head, g ? &g->head : nullptr);
    p.output = p.head;
  }
  return p;
}

Var forward_logits(const BoundParams& p,
                   std::span<const std::size_t> tokens, Var mix) {
  const ModelConfig& cfg = p.params->config;
  const std::size_t continuous = mix.valid() ? mix.value().rows() : 0;
  const std::size_t length = tokens.size() + continuous;
  if (length == 0) {
    throw UsageError("model: empty prefix");
  }
  if (length > cfg.context) {
    throw ContextError("model: prefix of " + std::to_string(length) +
                       " positions exceeds context " + std::to_string(cfg.context));
  }
  std::vector<Var> parts;
  if (!tokens.empty()) {
    for (std::size_t t : tokens) {
      if (t >= cfg.vocab) {
        throw VocabularyError("model: token " + std::to_string(t) +
                              " outside vocabulary of size " + std::to_string(cfg.vocab));
      }
    }
    parts.push_back(tensor::embedding_lookup(p.token_embedding, tokens));
  }
  if (continuous > 0) {
    parts.push_back(tensor::embedding_mix(mix, p.token_embedding));
  }
  Var x = parts.size() == 1 ? parts.front() : tensor::concat_rows(parts);
  x = tensor::add(x, tensor::slice_rows(p.position_embedding, 0, length));
  for (const auto& b : p.blocks) {
    x = tensor::add(x, attention(b, tensor::layer_norm(x, b.ln1_gain, b.ln1_bias), cfg.heads));
    x = tensor::add(x, mlp(b, tensor::layer_norm(x, b.ln2_gain, b.ln2_bias)));
  }
  x = tensor::layer_norm(x, p.lnf_gain, p.lnf_bias);
  return tensor::matmul(x, p.output);
}

TokenDistribution next_distribution(const LmParams& params, const Prefix& prefix) {
  Tape tape;
  Var logits = prefix_logits(tape, params, prefix);
  const Tensor& l = logits.value();
  return tensor::softmax(l.row(l.rows() - 1));
}

std::vector<TokenDistribution> all_distributions(const LmParams& params,
                                                 const Prefix& prefix) {
  Tape tape;
  Var logits = prefix_logits(tape, params, prefix);
  const Tensor& l = logits.value();
  std::vector<TokenDistribution> out;
  for (std::size_t r = 0; r < l.rows(); ++r) {
    out.push_back(tensor::softmax(l.row(r)));
  }
  return out;
}

std::vector<double> continuous_token(const TokenDistribution& alpha,
                                     const Tensor& embedding) {
  check_simplex(alpha.probs());
  if (alpha.size() != embedding.rows()) {
    throw DimensionError("continuous_token: alpha has " + std::to_string(alpha.size()) +
                         " entries, embedding " + embedding.shape_string());
  }
  const std::size_t d = embedding.cols();
  std::vector<double> z(d, 0.0);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double w = alpha[i];
    if (w == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) z[j] += w * embedding.at(i, j);
  }
  return z;
}

TokenDistribution transform_alpha(const TokenDistribution& alpha,
                                  double temperature, double threshold) {
  if (!(temperature > 0.0)) {
    throw UsageError("transform_alpha: temperature must be positive");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw UsageError("transform_alpha: threshold must lie in [0, 1]");
  }
  if (temperature == 1.0 && threshold == 0.0) {
    return alpha;
  }
  std::vector<double> p(alpha.probs().begin(), alpha.probs().end());
  if (temperature != 1.0) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double a : p) {
      if (a > 0.0) mx = std::max(mx, std::log(a) / temperature);
    }
    double z = 0.0;
    for (double& a : p) {
      a = a > 0.0 ? std::exp(std::log(a) / temperature - mx) : 0.0;
      z += a;
    }
    for (double& a : p) a /= z;
  }
  if (threshold > 0.0) {
    double z = 0.0;
    for (double& a : p) {
      if (a < threshold) a = 0.0;
      z += a;
    }
    if (z == 0.0) {
      return TokenDistribution::one_hot(alpha.size(), alpha.argmax());
    }
    for (double& a : p) a /= z;
  }
  return TokenDistribution(std::move(p));
}

}  // namespace cot2::model
