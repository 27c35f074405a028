#pragma once

#include <compare>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtltag/corpus.hpp"

namespace mtltag {

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::string label;

  auto operator<=>(const Span&) const = default;
};

using SpanSet = std::set<Span>;

/// Prefixed schemes: maximal chunks (with the same repair as to_iobes).
/// Token-level: one length-1 span per non-O token. O never yields a span.
SpanSet extract_spans(std::span<const std::string> tags, TagScheme scheme);

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

/// Micro-averaged over all sentences. 0/0 precision or recall is 0, and
/// F1 is 0 when P + R = 0.
F1Score micro_f1(std::span<const SpanSet> gold, std::span<const SpanSet> predicted);

struct ScoreStats {
  double mean = 0.0;
  double std = 0.0;  // population (÷n)
  std::size_t n = 0;
};

ScoreStats aggregate(std::span<const double> scores);

enum class ComparisonOutcome { Higher, Lower, Neutral };

std::string_view outcome_name(ComparisonOutcome c);

/// Higher iff μa − kσa > μb + kσb; Lower iff μa + kσa < μb − kσb.
ComparisonOutcome compare(const ScoreStats& a, const ScoreStats& b, double k = 1.5);

}  // namespace mtltag
