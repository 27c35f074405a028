#pragma once

#include <cstdint>
#include <random>

#include "mtltag/tensor.hpp"

namespace mtltag {

using Rng = std::mt19937_64;

enum class InitKind {
  CharEmbedding,
  WeightMatrix,
  Bias,
  UncoveredWordEmbedding,
  TaskEmbedding,
};

/// Embeddings: U[−√(3/d), √(3/d)] with d the column count.
/// Weight matrices: Xavier uniform U[−√(6/(r+c)), √(6/(r+c))].
/// Biases: zeros.
Tensor init_parameter(const Shape& shape, InitKind kind, Rng& rng);

/// Half-width of the uniform range init_parameter draws from.
double init_bound(const Shape& shape, InitKind kind);

}  // namespace mtltag
