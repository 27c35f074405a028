#include "mtltag/metrics.hpp"

#include <cmath>

#include "mtltag/errors.hpp"

namespace mtltag {

SpanSet extract_spans(std::span<const std::string> tags, TagScheme scheme) {
  SpanSet spans;
  if (scheme == TagScheme::TokenLevel) {
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (tags[i] != "O") spans.insert({i, i, tags[i]});
    }
    return spans;
  }
  for (const Chunk& c : segment_chunks(tags)) spans.insert({c.start, c.end, c.type});
  return spans;
}

F1Score micro_f1(std::span<const SpanSet> gold, std::span<const SpanSet> predicted) {
  if (gold.size() != predicted.size()) {
    throw ContractError("micro_f1: " + std::to_string(gold.size()) + " gold sentences vs " +
                        std::to_string(predicted.size()) + " predicted");
  }
  F1Score s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    s.gold += gold[i].size();
    s.predicted += predicted[i].size();
    for (const Span& p : predicted[i]) s.true_positives += gold[i].count(p);
  }
  const auto tp = static_cast<double>(s.true_positives);
  s.precision = s.predicted ? tp / static_cast<double>(s.predicted) : 0.0;
  s.recall = s.gold ? tp / static_cast<double>(s.gold) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                      : 0.0;
  return s;
}

ScoreStats aggregate(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("aggregate: no scores");
  ScoreStats st;
  st.n = scores.size();
  double sum = 0.0;
  for (double v : scores) sum += v;
  st.mean = sum / static_cast<double>(st.n);
  double ss = 0.0;
  for (double v : scores) ss += (v - st.mean) * (v - st.mean);
  st.std = std::sqrt(ss / static_cast<double>(st.n));
  return st;
}

std::string_view outcome_name(ComparisonOutcome c) {
  switch (c) {
    case ComparisonOutcome::Higher: return "higher";
    case ComparisonOutcome::Lower: return "lower";
    case ComparisonOutcome::Neutral: return "neutral";
  }
  return "neutral";
}

ComparisonOutcome compare(const ScoreStats& a, const ScoreStats& b, double k) {
  if (k < 0.0) throw ContractError("compare: k must be non-negative");
  if (a.mean - k * a.std > b.mean + k * b.std) return ComparisonOutcome::Higher;
  if (a.mean + k * a.std < b.mean - k * b.std) return ComparisonOutcome::Lower;
  return ComparisonOutcome::Neutral;
}

}  // namespace mtltag
