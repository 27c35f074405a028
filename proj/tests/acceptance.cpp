// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mtltag/checks.hpp"
#include "mtltag/decoder.hpp"
#include "mtltag/gradcheck.hpp"
#include "mtltag/metrics.hpp"
#include "mtltag/model.hpp"
#include "mtltag/report.hpp"
#include "mtltag/trainer.hpp"
#include "support/oracles.hpp"

using namespace mtltag;
namespace fs = std::filesystem;

namespace {

constexpr double kCrfTolerance = 1e-9;
constexpr double kCrfSeconds = 5.0;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradEpsilon = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kCompareK = 1.5;
constexpr double kStlTarget = 0.95;
constexpr double kMtlTarget = 0.90;
constexpr std::size_t kLearningEpochs = 50;
constexpr double kLearningSeconds = 600.0;
constexpr double kStatsTolerance = 5e-5;

const fs::path kData = MTLTAG_TEST_DATA;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int criterion, bool passed, const std::string& detail) {
  if (!passed) ++failures;
  std::cout << "criterion " << criterion << " " << (passed ? "PASS" : "FAIL") << ": " << detail
            << std::endl;
}

oracle::Matrix to_matrix(const Tensor& t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

void crf_correctness() {
  const auto start = Clock::now();
  Rng rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  std::size_t argmax_mismatches = 0;
  for (int n = 0; n < 200; ++n) {
    const std::size_t len = 1 + rng() % 5, labels = 1 + rng() % 4;
    Tensor em({len, labels}), tr({labels + 2, labels + 2});
    for (double& v : em.values()) v = u(rng);
    for (double& v : tr.values()) v = u(rng);
    const CrfLayout layout{labels};
    for (std::size_t i = 0; i < layout.states(); ++i)
      for (std::size_t j = 0; j < layout.states(); ++j)
        if (layout.structural(i, j)) tr.at(i, j) = 0.0;
    const auto m = to_matrix(em), t = to_matrix(tr);
    worst = std::max(worst, std::abs(crf_log_partition(em, tr) - oracle::brute_log_partition(m, t)));
    if (viterbi(em, tr) != oracle::brute_argmax(m, t)) ++argmax_mismatches;
  }
  const double secs = seconds_since(start);
  report(1, worst <= kCrfTolerance && argmax_mismatches == 0 && secs < kCrfSeconds,
         fmt::format("200 instances, max |log Z - brute| {:.3g}, viterbi mismatches {}, {:.2f} s", worst,
                     argmax_mismatches, secs));
}

void gradient_fidelity() {
  const auto start = Clock::now();
  const ToyProblem problem = toy_problem(2, 3);
  bool ok = true;
  std::string detail;
  for (MtlMethod m : {MtlMethod::MultiDec, MtlMethod::TeDec, MtlMethod::TeEnc}) {
    Tagger tagger = toy_tagger(problem, m, toy_dims(), 11);
    std::vector<const TaggedSentence*> batch;
    for (const auto& s : problem.sentences) batch.push_back(&s);
    auto params = tagger.parameters().trainable();
    const GradCheckResult r = finite_difference_check(
        [&](ad::Graph& g) { return tagger.batch_loss(g, batch, nullptr); }, params, kGradEpsilon);
    ok = ok && r.max_relative_error <= kGradTolerance;
    detail += fmt::format("{} {:.3g} ({}[{}] analytic {:.6g} numeric {:.6g}); ", method_name(m),
                          r.max_relative_error, r.worst_parameter, r.worst_index, r.worst_analytic,
                          r.worst_numeric);
  }
  const double secs = seconds_since(start);
  report(2, ok && secs < kGradSeconds, detail + fmt::format("{:.1f} s", secs));
}

std::vector<std::vector<std::string>> read_tsv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, '\t')) cols.push_back(c);
    if (!cols.empty()) rows.push_back(cols);
  }
  return rows;
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
  std::ifstream in(path);
  return read_tsv(in);
}

void table_replay() {
  const ScoreTable table = read_score_fixture(kData / "reference_scores.tsv");
  const ReportFiles files = render_report(table, kCompareK);
  std::map<std::string, std::vector<std::vector<std::string>>> rendered;
  for (const auto& m : table.methods()) {
    if (m.empty()) continue;
    std::istringstream in(files.files.at("pairwise_" + m + ".tsv"));
    rendered[m] = read_tsv(in);
  }
  std::size_t cells = 0;
  std::vector<std::string> mismatches;
  for (const auto& row : read_tsv(kData / "reference_pairwise_markers.tsv")) {
    const std::string setting = row[2] == "pair:" + row[1] ? "stl" : row[2];
    for (const auto& r : rendered.at(row[0])) {
      if (r[0] != setting || r[1] != row[1]) continue;
      ++cells;
      if (r[4] != row[4]) {
        mismatches.push_back(fmt::format("{} {} {} got {} want {}", row[0], row[1], row[2], r[4], row[4]));
      }
    }
  }

  const PairwiseMatrix md = PairwiseMatrix::from_table(table, "multi-dec");
  const RelationSummary rel = classify_relations(md, kCompareK);
  std::set<std::string> chunk_oracle;
  for (std::size_t s : oracle_set(md.index("chunk"), rel)) chunk_oracle.insert(md.tasks[s]);
  const bool chunk_ok = chunk_oracle == std::set<std::string>{"upos", "xpos", "sem"};
  const bool ner_empty = oracle_set(md.index("ner"), rel).empty();
  const bool boundary = rel.at(md.index("semtr"), md.index("chunk")) == Relation::Neutral;
  bool fallback = false;
  for (const auto& r : rendered.at("multi-dec")) {
    if (r[0] == "oracle" && r[1] == "ner") fallback = r[2] == "88.24" && r.size() > 5 && r[5] == "stl";
  }
  std::string detail = fmt::format(
      "{}/{} cells reproduced; boundary +semtr/chunk neutral {}; oracle(chunk) = {{upos, xpos, sem}} {}; "
      "oracle(ner) empty {} with STL fallback 88.24 {}",
      cells - mismatches.size(), cells, boundary, chunk_ok, ner_empty, fallback);
  for (const auto& m : mismatches) detail += "; mismatch " + m;
  report(3, mismatches.empty() && cells > 0 && boundary && chunk_ok && ner_empty && fallback, detail);
}

void span_scoring() {
  const std::vector<std::string> iobes{"B-NP", "I-NP", "E-NP", "O", "S-VP"};
  const std::vector<std::string> iob{"I-NP", "I-NP", "I-NP", "O", "B-VP"};
  const std::vector<std::string> token{"ADV", "ADV", "PUNCT"};
  const SpanSet expected{{0, 2, "NP"}, {4, 4, "VP"}};
  const bool iobes_ok = extract_spans(iobes, TagScheme::SpanPrefixed) == expected;
  const bool iob_ok = extract_spans(iob, TagScheme::SpanPrefixed) == expected;
  const bool token_ok = extract_spans(token, TagScheme::TokenLevel) ==
                        SpanSet{{0, 0, "ADV"}, {1, 1, "ADV"}, {2, 2, "PUNCT"}};
  const SpanSet gold{{0, 2, "NP"}};
  const SpanSet pred{{0, 2, "NP"}, {3, 3, "VP"}};
  const double hand = micro_f1(std::span(&gold, 1), std::span(&pred, 1)).f1;
  const double perfect = micro_f1(std::span(&gold, 1), std::span(&gold, 1)).f1;
  report(4, iobes_ok && iob_ok && token_ok && hand == 2.0 / 3.0 && perfect == 1.0,
         fmt::format("IOBES {}, repaired IOB {}, token-level {}, hand case F1 {:.17g}, perfect F1 {}",
                     iobes_ok, iob_ok, token_ok, hand, perfect));
}

void batching_invariant() {
  Rng rng(77);
  std::size_t trials = 0, batches = 0, rule = 0, repeats = 0, not_exhausted = 0;
  for (int trial = 0; trial < 500; ++trial, ++trials) {
    const std::size_t tasks = std::uniform_int_distribution<std::size_t>(1, 11)(rng);
    const std::size_t batch =
        trial % 2 ? 32 : std::uniform_int_distribution<std::size_t>(tasks, 64)(rng);
    std::vector<std::size_t> sizes(tasks);
    for (auto& s : sizes) s = std::uniform_int_distribution<std::size_t>(5, 500)(rng);
    Rng epoch_rng(rng());
    const auto plans = balanced_batches(sizes, batch, epoch_rng);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<std::size_t> used(tasks, 0);
    for (const auto& plan : plans) {
      ++batches;
      std::vector<std::size_t> counts(tasks, 0);
      for (const auto& item : plan) {
        ++counts[item.task];
        ++used[item.task];
        if (!seen.insert({item.task, item.index}).second) ++repeats;
      }
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      if (*hi - *lo > 1 || plan.size() > batch) ++rule;
    }
    bool exhausted = false;
    for (std::size_t t = 0; t < tasks; ++t) exhausted = exhausted || used[t] == sizes[t];
    if (!exhausted) ++not_exhausted;
  }
  report(5, rule == 0 && repeats == 0 && not_exhausted == 0,
         fmt::format("{} epochs, {} batches: rule violations {}, repeats {}, epochs not ending at "
                     "smallest-task exhaustion {}",
                     trials, batches, rule, repeats, not_exhausted));
}

void parameter_accounting() {
  const ModelDims d;  // 25/25/50/300, two layers, task embedding 25
  const std::vector<std::size_t> label_sizes{3, 5, 2};
  std::vector<TaskSpec> tasks;
  std::vector<TaggedSentence> train;
  for (std::size_t t = 0; t < 3; ++t) {
    TaskSpec spec;
    spec.task_id = t;
    spec.name = "task" + std::to_string(t);
    for (std::size_t y = 0; y < label_sizes[t]; ++y) spec.label_set.push_back("L" + std::to_string(y));
    tasks.push_back(spec);
    TaggedSentence s;
    s.tokens = {"Alpha", "beta", "Gamma" + std::to_string(t)};
    for (const auto& w : s.tokens) s.lowercased.push_back(lowercase(w));
    s.tags = {"L0", "L1", "L0"};
    s.task_id = t;
    train.push_back(s);
  }
  const auto gru = [](std::size_t in, std::size_t h) { return 3 * (in * h + h * h + h); };
  const auto encoder = [&](const Vocabulary& v) {
    return v.char_count() * 25 + 2 * gru(25, 25) + v.word_count() * 50 + 2 * gru(100, 300) +
           2 * gru(600, 300);
  };
  const auto crf = [](std::size_t in, std::size_t y) { return in * y + y + (y + 2) * (y + 2); };
  const std::size_t joint = 3 + 5 + 2;

  const Vocabulary v_md = build_vocabulary(train, MtlMethod::MultiDec, tasks);
  const Vocabulary v_td = build_vocabulary(train, MtlMethod::TeDec, tasks);
  const Vocabulary v_te = build_vocabulary(train, MtlMethod::TeEnc, tasks);
  const std::size_t want_md = encoder(v_md) + crf(600, 3) + crf(600, 5) + crf(600, 2);
  const std::size_t want_td = encoder(v_td) + crf(625, joint) + 3 * 25;
  const std::size_t want_te = encoder(v_te) + crf(600, joint);
  const std::size_t got_md = Tagger(MtlMethod::MultiDec, d, tasks, v_md, 1).parameter_count();
  const Tagger td(MtlMethod::TeDec, d, tasks, v_td, 1);
  const std::size_t got_td = td.parameter_count();
  const std::size_t got_te = Tagger(MtlMethod::TeEnc, d, tasks, v_te, 1).parameter_count();
  const bool shape_ok = td.task_embedding()->value.shape() == Shape{3, 25} && td.decoder(0).input() == 625;
  const bool rows_ok = v_te.word_count() == v_md.word_count() + 3;
  report(6, got_md == want_md && got_td == want_td && got_te == want_te && shape_ok && rows_ok,
         fmt::format("multi-dec {} (formula {}), te-dec {} (formula {}), te-enc {} (formula {}); "
                     "3x25 table and 625-wide projection {}; 3 extra word rows {}",
                     got_md, want_md, got_td, want_td, got_te, want_te, shape_ok, rows_ok));
}

std::vector<TaskData> synthetic_tasks() {
  std::vector<TaskData> out;
  for (const auto& spec : read_task_registry(kData / "synthetic" / "registry.tsv")) out.push_back(load_task(spec));
  return out;
}

ModelDims desk_dims() {
  ModelDims d;
  d.char_embedding = 8;
  d.char_hidden = 8;
  d.word_embedding = 16;
  d.word_hidden = 24;
  d.task_embedding = 8;
  return d;
}

Tagger make_tagger(const std::vector<TaskData>& data, MtlMethod method, std::uint64_t seed) {
  std::vector<TaskSpec> specs;
  std::vector<TaggedSentence> train;
  for (const auto& d : data) {
    specs.push_back(d.spec);
    train.insert(train.end(), d.train.begin(), d.train.end());
  }
  return Tagger(method, desk_dims(), specs, build_vocabulary(train, method, specs), seed);
}

void desk_learning(const std::vector<TaskData>& tasks) {
  const auto start = Clock::now();
  TrainConfig cfg;
  cfg.max_epochs = kLearningEpochs;
  cfg.seed = 1;
  bool ok = true;
  std::string detail;
  for (const auto& task : tasks) {
    std::vector<TaskData> one{task};
    Tagger tagger = make_tagger(one, MtlMethod::MultiDec, 1);
    const TrainResult r = train(tagger, one, cfg);
    ok = ok && r.test_f1[0] >= kStlTarget;
    detail += fmt::format("stl {} test F1 {:.4f} ({} epochs); ", task.spec.name, r.test_f1[0], r.epochs.size());
  }
  for (MtlMethod m : {MtlMethod::MultiDec, MtlMethod::TeDec, MtlMethod::TeEnc}) {
    Tagger tagger = make_tagger(tasks, m, 1);
    const TrainResult r = train(tagger, tasks, cfg);
    detail += fmt::format("{}", method_name(m));
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      ok = ok && r.test_f1[i] >= kMtlTarget;
      detail += fmt::format(" {} {:.4f}", tasks[i].spec.name, r.test_f1[i]);
    }
    detail += fmt::format(" ({} epochs); ", r.epochs.size());
  }
  const double secs = seconds_since(start);
  report(7, ok && secs < kLearningSeconds, detail + fmt::format("{:.0f} s", secs));
}

void determinism(const std::vector<TaskData>& tasks) {
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.seed = 5;
  bool ok = true;
  std::string detail;
  for (MtlMethod m : {MtlMethod::MultiDec, MtlMethod::TeDec, MtlMethod::TeEnc}) {
    Tagger a = make_tagger(tasks, m, 5);
    Tagger b = make_tagger(tasks, m, 5);
    const TrainResult ra = train(a, tasks, cfg);
    const TrainResult rb = train(b, tasks, cfg);
    bool same = ra.epochs.size() == rb.epochs.size() && ra.test_f1 == rb.test_f1;
    std::size_t losses = 0;
    for (std::size_t e = 0; same && e < ra.epochs.size(); ++e) {
      same = ra.epochs[e].batch_losses == rb.epochs[e].batch_losses &&
             ra.epochs[e].mean_loss == rb.epochs[e].mean_loss;
      losses += ra.epochs[e].batch_losses.size();
    }
    ok = ok && same;
    if (!detail.empty()) detail += "; ";
    detail += fmt::format("{} {} ({} batch losses compared)", method_name(m), same ? "identical" : "differs", losses);
  }
  report(8, ok, detail);
}

std::string capture(const std::string& command) {
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(command.c_str(), "r"), pclose);
  if (!pipe) return {};
  std::string out;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe.get())) out.append(buf.data(), n);
  return out;
}

void stats_reproduction() {
  const fs::path registry = kData / "synthetic" / "registry.tsv";
  std::istringstream ours(capture(fmt::format("\"{}\" stats --registry \"{}\"", MTLTAG_CLI, registry.string())));
  std::istringstream theirs(capture(fmt::format("\"{}\" \"{}\" \"{}\"", MTLTAG_PYTHON, MTLTAG_STATS_ORACLE,
                                                registry.string())));
  const auto a = read_tsv(ours), b = read_tsv(theirs);
  bool ok = !a.empty() && a.size() == b.size();
  std::string detail = fmt::format("{} tasks from the CLI, {} from the oracle script", a.size(), b.size());
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    ok = a[i].size() == 9 && b[i].size() == 9 && a[i][0] == b[i][0];
    for (std::size_t c = 1; ok && c < 9; ++c) ok = std::abs(std::stod(a[i][c]) - std::stod(b[i][c])) <= kStatsTolerance;
    detail += fmt::format("; {}: sentences {}/{}/{}, ratio {}, labels {}, entropy {}", a[i][0], a[i][1],
                          a[i][2], a[i][3], a[i][6], a[i][7], a[i][8]);
  }
  report(9, ok, detail);
}

}  // namespace

int main() {
  crf_correctness();
  gradient_fidelity();
  table_replay();
  span_scoring();
  batching_invariant();
  parameter_accounting();
  const auto tasks = synthetic_tasks();
  desk_learning(tasks);
  determinism(tasks);
  stats_reproduction();
  std::cout << (9 - failures) << "/9 criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
