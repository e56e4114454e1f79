#include "cot2/training/losses.hpp"

#include <algorithm>
#include <set>

#include "cot2/common/error.hpp"
#include "cot2/tensor/ops.hpp"

namespace cot2::training {
namespace {

using tensor::GatherEntry;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

void check_example(const model::BoundParams& p, const tasks::Example& e) {
  const std::size_t m = e.trace.length();
  if (m == 0 || e.path.size() != m) {
    throw DataError("loss: trace has " + std::to_string(m) + " steps, path " +
                    std::to_string(e.path.size()));
  }
  const std::size_t v = p.params->config.vocab;
  for (std::size_t t : e.path) {
    if (t >= v) throw DataError("loss: target token outside vocabulary");
  }
  for (const auto& s : e.trace.steps)
    for (std::size_t t : s.index)
      if (t >= v) throw DataError("loss: supervision token outside vocabulary");
}

// -sum_t sum_i w_{t,i} logp_{t,i} with logp read at the m prediction rows.
Var weighted_nll(Var logits, std::size_t prompt_length,
                 const std::vector<std::vector<GatherEntry>>& per_step) {
  Var logp = tensor::log_softmax_rows(
      tensor::slice_rows(logits, prompt_length - 1, per_step.size()));
  std::vector<std::vector<GatherEntry>> all(1);
  for (std::size_t t = 0; t < per_step.size(); ++t) {
    for (GatherEntry g : per_step[t]) {
      g.row = t;
      g.weight = -g.weight;
      all[0].push_back(g);
    }
  }
  return tensor::gather_weighted(logp, all);
}

std::vector<GatherEntry> trace_entries(const tasks::SparseStep& s) {
  std::vector<GatherEntry> out;
  for (std::size_t k = 0; k < s.support(); ++k) out.push_back({0, s.index[k], s.mass(k)});
  return out;
}

Tensor dense_rows(const std::vector<std::vector<double>>& rows, std::size_t v) {
  Tensor t = Tensor::zeros(rows.size(), v);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
  return t;
}

}  // namespace

Var csft_loss_given_prefix(const model::BoundParams& p, const tasks::Example& e,
                           Var fed) {
  check_example(p, e);
  const std::size_t m = e.trace.length();
  if (m > 1 && (!fed.valid() || fed.value().rows() != m - 1)) {
    throw DataError("loss: expected " + std::to_string(m - 1) + " fed tokens");
  }
  Var logits = model::forward_logits(p, e.prompt, m > 1 ? fed : Var{});
  std::vector<std::vector<GatherEntry>> steps;
  for (const auto& s : e.trace.steps) steps.push_back(trace_entries(s));
  return weighted_nll(logits, e.prompt.size(), steps);
}

Var csft_loss(const model::BoundParams& p, const tasks::Example& e,
              const PrefixOptions& options) {
  check_example(p, e);
  const std::size_t m = e.trace.length();
  const std::size_t v = p.params->config.vocab;
  Tape& tape = p.token_embedding.tape();
  if (m == 1) {
    return csft_loss_given_prefix(p, e, Var{});
  }
  if (options.regime == PrefixRegime::TeacherForced) {
    std::vector<std::vector<double>> rows;
    for (std::size_t t = 0; t + 1 < m; ++t) rows.push_back(e.trace.steps[t].dense(v).vector());
    return csft_loss_given_prefix(p, e, tape.constant(dense_rows(rows, v)));
  }
  if (!options.backprop_through_fed) {
    const auto rows = self_feeding_prefixes(*p.params, e, options);
    return csft_loss_given_prefix(p, e, tape.constant(dense_rows(rows, v)));
  }
  // Build the whole autoregressive chain on the tape.
  std::vector<Var> fed;
  for (std::size_t t = 0; t + 1 < m; ++t) {
    Var mix = fed.empty() ? Var{} : tensor::concat_rows(fed);
    Var logits = model::forward_logits(p, e.prompt, mix);
    Var alpha = tensor::softmax_rows(
        tensor::slice_rows(logits, logits.value().rows() - 1, 1));
    if (options.alpha_temperature != 1.0 || options.alpha_threshold != 0.0) {
      throw UsageError("loss: alpha transforms are not differentiable; detach fed tokens");
    }
    fed.push_back(alpha);
  }
  return csft_loss_given_prefix(p, e, tensor::concat_rows(fed));
}

Var sft_loss(const model::BoundParams& p, const tasks::Example& e) {
  std::vector<std::size_t> all(e.path.size());
  for (std::size_t t = 0; t < all.size(); ++t) all[t] = t + 1;
  return sparse_sft_loss(p, e, all);
}

Var sparse_sft_loss(const model::BoundParams& p, const tasks::Example& e,
                    std::span<const std::size_t> positions) {
  check_example(p, e);
  const std::size_t m = e.path.size();
  std::set<std::size_t> chosen(positions.begin(), positions.end());
  chosen.insert(m);
  if (*chosen.begin() == 0 || *chosen.rbegin() > m) {
    throw DataError("loss: supervised positions must lie in [1, " + std::to_string(m) + "]");
  }
  std::vector<std::size_t> tokens = e.prompt;
  tokens.insert(tokens.end(), e.path.begin(), e.path.end() - 1);
  Var logits = model::forward_logits(p, tokens, Var{});
  std::vector<std::vector<GatherEntry>> steps(m);
  for (std::size_t t : chosen) steps[t - 1].push_back({0, e.path[t - 1], 1.0});
  return weighted_nll(logits, e.prompt.size(), steps);
}

std::vector<std::vector<double>> self_feeding_prefixes(const model::LmParams& params,
                                                       const tasks::Example& e,
                                                       const PrefixOptions& options) {
  const std::size_t m = e.trace.length();
  model::Prefix prefix{e.prompt, {}};
  std::vector<std::vector<double>> rows;
  for (std::size_t t = 0; t + 1 < m; ++t) {
    const auto alpha = model::transform_alpha(model::next_distribution(params, prefix),
                                              options.alpha_temperature,
                                              options.alpha_threshold);
    prefix.continuous.push_back(alpha.vector());
    rows.push_back(alpha.vector());
  }
  return rows;
}

double csft_loss_value(const model::LmParams& params, const tasks::Example& e,
                       const PrefixOptions& options) {
  Tape tape;
  return csft_loss(model::bind(tape, params, nullptr), e, options).value()[0];
}

double sft_loss_value(const model::LmParams& params, const tasks::Example& e) {
  Tape tape;
  return sft_loss(model::bind(tape, params, nullptr), e).value()[0];
}

}  // namespace cot2::training
