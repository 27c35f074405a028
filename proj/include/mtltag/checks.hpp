#pragma once

// Self-check suites behind `mtltag check`: brute-force CRF enumeration,
// full-model gradient checks, span F1 cases and batching properties.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mtltag/corpus.hpp"
#include "mtltag/encoder.hpp"
#include "mtltag/method.hpp"
#include "mtltag/model.hpp"

namespace mtltag {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<CheckResult> run_check_suite(std::string_view suite);
std::vector<std::string_view> check_suites();

/// Dimensions used by the gradient suite.
ModelDims toy_dims();

/// Two or more small in-memory tasks with three labels each, for gradient
/// checks and parameter accounting.
struct ToyProblem {
  std::vector<TaskSpec> tasks;
  std::vector<TaggedSentence> sentences;
};
ToyProblem toy_problem(std::size_t task_count, std::uint64_t seed);

Tagger toy_tagger(const ToyProblem& problem, MtlMethod method, const ModelDims& dims,
                  std::uint64_t seed);

}  // namespace mtltag
