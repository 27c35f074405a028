#include "mtltag/checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <set>

#include "mtltag/decoder.hpp"
#include "mtltag/errors.hpp"
#include "mtltag/gradcheck.hpp"
#include "mtltag/metrics.hpp"
#include "mtltag/trainer.hpp"

namespace mtltag {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Every label sequence of length L over Y labels, in lexicographic order.
template <typename F>
void for_each_sequence(std::size_t length, std::size_t labels, F&& f) {
  std::vector<int> seq(length, 0);
  while (true) {
    f(seq);
    std::size_t i = length;
    while (i > 0) {
      --i;
      if (static_cast<std::size_t>(++seq[i]) < labels) break;
      seq[i] = 0;
      if (i == 0) return;
    }
  }
}

std::vector<CheckResult> crf_suite() {
  Rng rng(20240611);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<std::size_t> len_d(1, 5), lab_d(1, 4);
  double worst_z = 0.0;
  std::size_t viterbi_mismatch = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int n = 0; n < 200; ++n) {
    const std::size_t len = len_d(rng), ny = lab_d(rng);
    Tensor e({len, ny}), t({ny + 2, ny + 2});
    for (double& v : e.values()) v = u(rng);
    for (double& v : t.values()) v = u(rng);
    double best = -std::numeric_limits<double>::infinity(), z = 0.0;
    std::vector<int> arg;
    std::vector<double> scores;
    for_each_sequence(len, ny, [&](const std::vector<int>& seq) {
      const double s = crf_path_score(e, t, seq);
      scores.push_back(s);
      if (s > best) {
        best = s;
        arg = seq;
      }
    });
    for (double s : scores) z += std::exp(s - best);
    const double brute = best + std::log(z);
    worst_z = std::max(worst_z, std::abs(brute - crf_log_partition(e, t)));
    if (viterbi(e, t) != arg) ++viterbi_mismatch;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {{"log-partition vs enumeration (200 instances)", worst_z <= 1e-9,
           "max abs error " + num(worst_z)},
          {"viterbi vs enumeration (200 instances)", viterbi_mismatch == 0,
           std::to_string(viterbi_mismatch) + " mismatches"},
          {"runtime under 5 s", secs < 5.0, num(secs) + " s"}};
}

std::vector<CheckResult> grad_suite() {
  std::vector<CheckResult> out;
  const ToyProblem problem = toy_problem(2, 3);
  for (MtlMethod m : {MtlMethod::MultiDec, MtlMethod::TeDec, MtlMethod::TeEnc}) {
    Tagger tagger = toy_tagger(problem, m, toy_dims(), 11);
    std::vector<const TaggedSentence*> batch;
    for (const auto& s : problem.sentences) batch.push_back(&s);
    auto params = tagger.parameters().trainable();
    const GradCheckResult r = finite_difference_check(
        [&](ad::Graph& g) { return tagger.batch_loss(g, batch, nullptr); }, params, 1e-5);
    out.push_back({"combined-loss gradients, " + std::string(method_name(m)),
                   r.max_relative_error <= 1e-4,
                   "max relative error " + num(r.max_relative_error) + " at " + r.worst_parameter +
                       "[" + std::to_string(r.worst_index) + "] analytic " + num(r.worst_analytic) + " numeric " + num(r.worst_numeric) + " over " +
                       std::to_string(r.entries_checked) + " entries"});
  }
  return out;
}

std::vector<CheckResult> f1_suite() {
  std::vector<CheckResult> out;
  const SpanSet gold{{0, 2, "NP"}};
  const SpanSet pred{{0, 2, "NP"}, {3, 3, "VP"}};
  const F1Score f = micro_f1(std::span(&gold, 1), std::span(&pred, 1));
  out.push_back({"hand case F1 = 2/3", f.f1 == 2.0 / 3.0, "f1 " + num(f.f1)});
  const F1Score p = micro_f1(std::span(&gold, 1), std::span(&gold, 1));
  out.push_back({"perfect prediction F1 = 1", p.f1 == 1.0, "f1 " + num(p.f1)});

  const SpanSet expected{{0, 2, "NP"}, {4, 4, "VP"}};
  const std::vector<std::string> iobes{"B-NP", "I-NP", "E-NP", "O", "S-VP"};
  out.push_back({"IOBES spans", extract_spans(iobes, TagScheme::SpanPrefixed) == expected, ""});
  const std::vector<std::string> iob1{"I-NP", "I-NP", "I-NP", "O", "B-VP"};
  out.push_back({"repaired IOB spans", extract_spans(iob1, TagScheme::SpanPrefixed) == expected, ""});
  const std::vector<std::string> token{"NOUN", "O", "VERB"};
  const SpanSet token_spans{{0, 0, "NOUN"}, {2, 2, "VERB"}};
  out.push_back({"token-level spans", extract_spans(token, TagScheme::TokenLevel) == token_spans, ""});
  return out;
}

std::vector<CheckResult> batching_suite() {
  Rng rng(99);
  std::size_t violations = 0, repeats = 0, unexhausted = 0, trials = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t tasks = std::uniform_int_distribution<std::size_t>(1, 11)(rng);
    const std::size_t batch = std::uniform_int_distribution<std::size_t>(tasks, 64)(rng);
    std::vector<std::size_t> sizes(tasks);
    for (auto& n : sizes) n = std::uniform_int_distribution<std::size_t>(5, 500)(rng);
    Rng epoch_rng(rng());
    const auto plans = balanced_batches(sizes, batch, epoch_rng);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<std::size_t> used(tasks, 0);
    for (const auto& plan : plans) {
      std::vector<std::size_t> counts(tasks, 0);
      for (const auto& item : plan) {
        ++counts[item.task];
        ++used[item.task];
        if (!seen.insert({item.task, item.index}).second) ++repeats;
      }
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      if (*hi - *lo > 1 || plan.size() > batch) ++violations;
    }
    bool exhausted = false;
    for (std::size_t t = 0; t < tasks; ++t) exhausted = exhausted || used[t] == sizes[t];
    if (!exhausted) ++unexhausted;
    ++trials;
  }
  return {{"per-task counts differ by at most one", violations == 0,
           std::to_string(violations) + " violating batches over " + std::to_string(trials) + " epochs"},
          {"no example repeats within an epoch", repeats == 0, std::to_string(repeats) + " repeats"},
          {"epoch ends when a task pool is exhausted", unexhausted == 0,
           std::to_string(unexhausted) + " epochs ended early"}};
}

}  // namespace

std::vector<std::string_view> check_suites() { return {"grad", "crf", "f1", "batching"}; }

std::vector<CheckResult> run_check_suite(std::string_view suite) {
  if (suite == "grad") return grad_suite();
  if (suite == "crf") return crf_suite();
  if (suite == "f1") return f1_suite();
  if (suite == "batching") return batching_suite();
  throw ContractError("unknown check suite: " + std::string(suite));
}

ModelDims toy_dims() {
  ModelDims d;
  d.char_embedding = 3;
  d.char_hidden = 2;
  d.word_embedding = 4;
  d.word_hidden = 5;
  d.word_layers = 2;
  d.task_embedding = 3;
  return d;
}

ToyProblem toy_problem(std::size_t task_count, std::uint64_t seed) {
  static const char* const kWords[] = {"The", "cat", "sat", "on", "a", "mat", "Dogs", "run"};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> word(0, std::size(kWords) - 1);
  std::uniform_int_distribution<std::size_t> label(0, 2);
  ToyProblem p;
  for (std::size_t t = 0; t < task_count; ++t) {
    TaskSpec spec;
    spec.task_id = t;
    spec.name = "t" + std::to_string(t);
    spec.label_set = {"A" + std::to_string(t), "B" + std::to_string(t), "C" + std::to_string(t)};
    p.tasks.push_back(spec);
    for (std::size_t n = 0; n < 2; ++n) {
      TaggedSentence s;
      s.task_id = t;
      const std::size_t len = 2 + n;
      for (std::size_t i = 0; i < len; ++i) {
        s.tokens.push_back(kWords[word(rng)]);
        s.lowercased.push_back(lowercase(s.tokens.back()));
        s.tags.push_back(spec.label_set[label(rng)]);
      }
      p.sentences.push_back(std::move(s));
    }
  }
  return p;
}

Tagger toy_tagger(const ToyProblem& problem, MtlMethod method, const ModelDims& dims,
                  std::uint64_t seed) {
  Vocabulary vocab = build_vocabulary(problem.sentences, method, problem.tasks);
  return Tagger(method, dims, problem.tasks, std::move(vocab), seed);
}

}  // namespace mtltag
