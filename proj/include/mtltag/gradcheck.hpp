#pragma once

#include <functional>
#include <span>
#include <string>

#include "mtltag/autodiff.hpp"

namespace mtltag {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

using LossBuilder = std::function<ad::Var(ad::Graph&)>;

/// Compares reverse-mode gradients with central differences
/// (f(x+ε) − f(x−ε)) / 2ε for every entry of every listed parameter.
/// Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
/// Throws ContractError if two baseline evaluations of the loss differ.
GradCheckResult finite_difference_check(const LossBuilder& loss_fn,
                                        std::span<Parameter* const> params, double epsilon);

}  // namespace mtltag
