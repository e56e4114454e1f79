#include "cot2/model/params.hpp"

#include <cmath>
#include <random>

#include "cot2/common/error.hpp"
#include "cot2/common/rng.hpp"

namespace cot2::model {
namespace {

using tensor::Tensor;

constexpr double kInitStd = 0.02;
constexpr std::uint64_t kInitKey = 0x1417;

template <typename Params, typename Out>
void enumerate(Params& p, Out& out) {
  out.emplace_back("token_embedding", &p.token_embedding);
  out.emplace_back("position_embedding", &p.position_embedding);
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    auto& b = p.blocks[l];
    const std::string pre = "block" + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1_gain", &b.ln1_gain);
    out.emplace_back(pre + "ln1_bias", &b.ln1_bias);
    out.emplace_back(pre + "wq", &b.wq);
    out.emplace_back(pre + "bq", &b.bq);
    out.emplace_back(pre + "wk", &b.wk);
    out.emplace_back(pre + "bk", &b.bk);
    out.emplace_back(pre + "wv", &b.wv);
    out.emplace_back(pre + "bv", &b.bv);
    out.emplace_back(pre + "wo", &b.wo);
    out.emplace_back(pre + "bo", &b.bo);
    out.emplace_back(pre + "ln2_gain", &b.ln2_gain);
    out.emplace_back(pre + "ln2_bias", &b.ln2_bias);
    out.emplace_back(pre + "w_up", &b.w_up);
    out.emplace_back(pre + "b_up", &b.b_up);
    out.emplace_back(pre + "w_down", &b.w_down);
    out.emplace_back(pre + "b_down", &b.b_down);
  }
  out.emplace_back("lnf_gain", &p.lnf_gain);
  out.emplace_back("lnf_bias", &p.lnf_bias);
  if (!p.config.tied) {
    out.emplace_back("head", &p.head);
  }
}

}  // namespace

LmParams LmParams::init(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.dim, v = config.vocab, hidden = 4 * config.dim;
  Stream rng(config.seed, {kInitKey});
  std::normal_distribution<double> normal(0.0, kInitStd);
  auto weights = [&](std::size_t r, std::size_t c) {
    Tensor t = Tensor::zeros(r, c);
    for (double& x : t.values()) x = normal(rng);
    return t;
  };
  auto ones = [](std::size_t c) { return Tensor({1, c}, 1.0); };
  auto zeros = [](std::size_t c) { return Tensor({1, c}, 0.0); };

  LmParams p;
  p.config = config;
  p.token_embedding = weights(v, d);
  p.position_embedding = weights(config.context, d);
  for (std::size_t l = 0; l < config.layers; ++l) {
    BlockParams b;
    b.ln1_gain = ones(d);
    b.ln1_bias = zeros(d);
    b.wq = weights(d, d);
    b.bq = zeros(d);
    b.wk = weights(d, d);
    b.bk = zeros(d);
    b.wv = weights(d, d);
    b.bv = zeros(d);
    b.wo = weights(d, d);
    b.bo = zeros(d);
    b.ln2_gain = ones(d);
    b.ln2_bias = zeros(d);
    b.w_up = weights(d, hidden);
    b.b_up = zeros(hidden);
    b.w_down = weights(hidden, d);
    b.b_down = zeros(d);
    p.blocks.push_back(std::move(b));
  }
  p.lnf_gain = ones(d);
  p.lnf_bias = zeros(d);
  if (!config.tied) {
    p.head = weights(d, v);
  }
  return p;
}

LmParams LmParams::zeros_like(const LmParams& other) {
  LmParams p = other;
  p.fill(0.0);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> LmParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  enumerate(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> LmParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  enumerate(*this, out);
  return out;
}

std::size_t LmParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

void LmParams::fill(double value) {
  for (auto& [name, t] : named()) t->fill(value);
}

void LmParams::axpy(double scale, const LmParams& other) {
  auto mine = named();
  const auto theirs = other.named();
  if (mine.size() != theirs.size()) {
    throw DimensionError("params: structure mismatch");
  }
  for (std::size_t k = 0; k < mine.size(); ++k) {
    Tensor& a = *mine[k].second;
    const Tensor& b = *theirs[k].second;
    if (!a.same_shape(b)) {
      throw DimensionError("params: " + mine[k].first + " shape mismatch");
    }
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  }
}

bool LmParams::all_finite() const {
  for (const auto& [name, t] : named()) {
    for (double x : t->values()) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

}  // namespace cot2::model
