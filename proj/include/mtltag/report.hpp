#pragma once

// Score tables, pairwise relations, oracle sets and report rendering.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mtltag/metrics.hpp"

namespace mtltag {

/// (μ, σ) per (method, setting, test task). Settings are "stl",
/// "pair:<helper>", "all", "abo:<removed task>" and "oracle". STL cells are
/// shared by every method.
class ScoreTable {
 public:
  void set(std::string_view method, std::string_view setting, std::string_view test_task,
           const ScoreStats& stats);
  std::optional<ScoreStats> get(std::string_view method, std::string_view setting,
                                std::string_view test_task) const;

  /// Tasks and methods in first-insertion order.
  const std::vector<std::string>& tasks() const { return tasks_; }
  const std::vector<std::string>& methods() const { return methods_; }
  bool empty() const { return cells_.empty(); }

 private:
  std::map<std::tuple<std::string, std::string, std::string>, ScoreStats> cells_;
  std::vector<std::string> tasks_;
  std::vector<std::string> methods_;
};

/// Reads "test_task setting method mean std ..." TSV with a header row.
ScoreTable read_score_fixture(const std::filesystem::path& path);

/// matrix[s][t] = μ({s,t}, t); the diagonal holds STL.
struct PairwiseMatrix {
  std::vector<std::string> tasks;
  std::vector<std::vector<std::optional<ScoreStats>>> cells;

  static PairwiseMatrix from_table(const ScoreTable& table, std::string_view method);
  /// "helper→test" for every missing cell.
  std::vector<std::string> gaps() const;
  std::size_t index(std::string_view task) const;
};

enum class Relation { Beneficial, Harmful, Neutral };
std::string_view relation_name(Relation r);

struct RelationEdge {
  std::size_t helper = 0;
  std::size_t test = 0;
  Relation relation = Relation::Neutral;
  bool missing = false;
};

struct RelationSummary {
  std::size_t task_count = 0;
  std::vector<RelationEdge> edges;  // all off-diagonal (helper, test) pairs
  std::vector<std::size_t> helps, harms;     // per helper row
  std::vector<std::size_t> helped, harmed;   // per test column

  Relation at(std::size_t helper, std::size_t test) const;
};

/// Missing cells count as Neutral and are flagged.
RelationSummary classify_relations(const PairwiseMatrix& matrix, double k = 1.5);

/// Beneficial helpers of `test`, in task order.
std::vector<std::size_t> oracle_set(std::size_t test, const RelationSummary& relations);

/// Categories of an unordered pair, by the relations in both directions.
enum class EdgeCategory { MutualBenefit, MutualHarm, Asymmetric, OneDirectional, None };
std::string_view category_name(EdgeCategory c);
EdgeCategory categorize(Relation forward, Relation backward);

struct ReportFiles {
  std::map<std::string, std::string> files;  // file name → contents
  std::vector<std::string> warnings;
};

/// Pairwise tables, relative-improvement summary, relation edges and
/// all-but-one deltas for every method in the table.
ReportFiles render_report(const ScoreTable& table, double k = 1.5);
void write_report(const ReportFiles& report, const std::filesystem::path& dir);

}  // namespace mtltag
