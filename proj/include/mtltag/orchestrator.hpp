#pragma once

// Experiment sweeps over a task registry and the append-only results store.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtltag/encoder.hpp"
#include "mtltag/method.hpp"
#include "mtltag/model.hpp"
#include "mtltag/report.hpp"
#include "mtltag/trainer.hpp"

namespace mtltag {

enum class ExperimentMode { Stl, Pairwise, All, AllButOne, Oracle };
std::string_view mode_name(ExperimentMode m);
ExperimentMode parse_mode(std::string_view name);

struct ExperimentSpec {
  ExperimentMode mode = ExperimentMode::Stl;
  MtlMethod method = MtlMethod::MultiDec;
  std::filesystem::path registry;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  TrainConfig train;
  ModelDims dims;
  std::filesystem::path out;
  bool force = false;
  std::optional<std::filesystem::path> embeddings;
  bool save_checkpoints = false;
};

struct ResultRecord {
  std::string mode;
  std::string method;
  std::vector<std::string> tasks;
  std::string test_task;
  std::uint64_t seed = 0;
  std::vector<double> dev_f1_history;
  double test_f1 = 0.0;
  std::size_t best_epoch = 0;
  double wall_time_s = 0.0;
  std::string config_hash;

  /// Identity of a record: everything except the measured values.
  std::string key() const;
};

std::string record_to_json(const ResultRecord& r);
/// Throws ParseError (with `line`) on malformed JSON or missing fields.
ResultRecord record_from_json(std::string_view text, std::size_t line = 0);

/// FNV-1a (64-bit, hex) of the canonical JSON of the training config (seed
/// excluded) and model dimensions.
std::string config_hash(const TrainConfig& config, const ModelDims& dims);

/// Append-only JSON Lines file "results.jsonl" under a directory.
class ResultsStore {
 public:
  explicit ResultsStore(std::filesystem::path dir);

  const std::vector<ResultRecord>& records() const { return records_; }
  bool contains(const std::string& key) const;
  void append(const ResultRecord& record);
  const std::filesystem::path& file() const { return file_; }

 private:
  std::filesystem::path file_;
  std::vector<ResultRecord> records_;
};

/// Aggregates test F1 over seeds into (μ, σ) cells, in percent. All-but-one
/// records name the removed task relative to the union of tasks seen.
ScoreTable score_table(const std::vector<ResultRecord>& records,
                       std::vector<std::string>* warnings = nullptr);

/// One joint training: a task set and the tasks whose test scores are kept.
struct Configuration {
  std::vector<std::size_t> tasks;
  std::vector<std::size_t> test_tasks;
};

/// Oracle helper sets per test task from stored pairwise and STL results.
/// Throws ContractError listing every missing cell.
std::vector<std::vector<std::size_t>> stored_oracle_sets(const ResultsStore& store,
                                                         MtlMethod method,
                                                         const std::vector<std::string>& tasks,
                                                         const std::string& hash);

/// Configurations implied by a mode. Oracle mode needs `oracle_sets` and
/// skips test tasks whose set is empty.
std::vector<Configuration> plan_configurations(
    ExperimentMode mode, std::size_t task_count,
    const std::vector<std::vector<std::size_t>>& oracle_sets = {});

struct RunSummary {
  std::size_t trained = 0;
  std::size_t skipped = 0;
  std::vector<ResultRecord> records;
};

RunSummary run_experiment(const ExperimentSpec& spec, std::ostream& log);

/// One tab-separated "name v1 … v_d" line per task (TE-Dec only).
std::string export_task_embeddings(const Tagger& tagger);

}  // namespace mtltag
