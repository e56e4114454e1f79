#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cot2/model/transformer.hpp"
#include "cot2/tasks/dataset.hpp"
#include "cot2/tensor/tape.hpp"

namespace cot2::training {

enum class PrefixRegime { TeacherForced, SelfFeeding };

struct PrefixOptions {
  PrefixRegime regime = PrefixRegime::TeacherForced;
  /// Self-feeding only: keep the fed tokens on the tape so gradients flow
  /// through them. Off by default (fed tokens are detached).
  bool backprop_through_fed = false;
  /// Transform applied to self-fed alphas before they become tokens.
  double alpha_temperature = 1.0;
  double alpha_threshold = 0.0;
};

/// sum_t CE(alpha*_t, alpha_t) given the continuous tokens fed after steps
/// 1..m-1 as a (m-1) x v weight matrix (`fed` is ignored when m = 1). The
/// model's alpha_t is read at the position preceding step t.
tensor::Var csft_loss_given_prefix(const model::BoundParams& p,
                                   const tasks::Example& example,
                                   tensor::Var fed);

/// CSFT loss under the requested prefix regime. Teacher forcing feeds
/// z*_t = E^T alpha*_t; self-feeding feeds the model's own alphas.
tensor::Var csft_loss(const model::BoundParams& p, const tasks::Example& example,
                      const PrefixOptions& options = {});

/// sum_t -log alpha_{t, path_t} with the discrete path as prefix.
tensor::Var sft_loss(const model::BoundParams& p, const tasks::Example& example);

/// SFT terms at the listed 1-based step positions only; the final step is
/// always included.
tensor::Var sparse_sft_loss(const model::BoundParams& p,
                            const tasks::Example& example,
                            std::span<const std::size_t> positions);

/// The model's own alphas for steps 1..m-1 computed autoregressively from the
/// prompt (transformed per options), i.e. the weights it would feed itself.
std::vector<std::vector<double>> self_feeding_prefixes(
    const model::LmParams& params, const tasks::Example& example,
    const PrefixOptions& options = {});

/// Scalar conveniences evaluated without gradients.
double csft_loss_value(const model::LmParams& params, const tasks::Example& example,
                       const PrefixOptions& options = {});
double sft_loss_value(const model::LmParams& params, const tasks::Example& example);

}  // namespace cot2::training
