#include "mtltag/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mtltag/errors.hpp"

namespace mtltag {

namespace {

double evaluate(const LossBuilder& loss_fn) {
  ad::Graph g;
  return loss_fn(g).value().item();
}

}  // namespace

GradCheckResult finite_difference_check(const LossBuilder& loss_fn,
                                        std::span<Parameter* const> params, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("finite_difference_check: epsilon must be positive");

  const double baseline = evaluate(loss_fn);
  if (evaluate(loss_fn) != baseline) {
    throw ContractError("finite_difference_check: loss function is not deterministic");
  }

  for (Parameter* p : params) p->grad_buffer().fill(0.0);
  std::vector<Tensor> analytic;
  {
    ad::Graph g;
    ad::Var loss = loss_fn(g);
    g.backward(loss);
    for (Parameter* p : params) analytic.push_back(p->grad_buffer());
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + epsilon;
      const double up = evaluate(loss_fn);
      p.value[i] = saved - epsilon;
      const double down = evaluate(loss_fn);
      p.value[i] = saved;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace mtltag
