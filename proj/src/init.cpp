#include "mtltag/init.hpp"

#include <cmath>

#include "mtltag/errors.hpp"
#include "mtltag/method.hpp"

namespace mtltag {

std::string_view method_name(MtlMethod m) {
  switch (m) {
    case MtlMethod::MultiDec: return "multi-dec";
    case MtlMethod::TeDec: return "te-dec";
    case MtlMethod::TeEnc: return "te-enc";
  }
  return "unknown";
}

MtlMethod parse_method(std::string_view name) {
  if (name == "multi-dec") return MtlMethod::MultiDec;
  if (name == "te-dec") return MtlMethod::TeDec;
  if (name == "te-enc") return MtlMethod::TeEnc;
  throw ContractError("unknown MTL method: " + std::string(name));
}

double init_bound(const Shape& shape, InitKind kind) {
  switch (kind) {
    case InitKind::Bias:
      return 0.0;
    case InitKind::WeightMatrix: {
      if (shape.size() != 2) throw ShapeError("weight matrix must be rank 2: " + shape_string(shape));
      return std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    }
    case InitKind::CharEmbedding:
    case InitKind::UncoveredWordEmbedding:
    case InitKind::TaskEmbedding:
      return std::sqrt(3.0 / static_cast<double>(shape.back()));
  }
  return 0.0;
}

Tensor init_parameter(const Shape& shape, InitKind kind, Rng& rng) {
  Tensor t(shape, 0.0);
  const double bound = init_bound(shape, kind);
  if (bound == 0.0) return t;
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace mtltag
