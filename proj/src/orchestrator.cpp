#include "mtltag/orchestrator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "json.hpp"
#include "mtltag/checkpoint.hpp"
#include "mtltag/errors.hpp"

namespace mtltag {

using nlohmann::json;

std::string_view mode_name(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::Stl: return "stl";
    case ExperimentMode::Pairwise: return "pairwise";
    case ExperimentMode::All: return "all";
    case ExperimentMode::AllButOne: return "all-but-one";
    case ExperimentMode::Oracle: return "oracle";
  }
  return "stl";
}

ExperimentMode parse_mode(std::string_view name) {
  for (auto m : {ExperimentMode::Stl, ExperimentMode::Pairwise, ExperimentMode::All,
                 ExperimentMode::AllButOne, ExperimentMode::Oracle}) {
    if (mode_name(m) == name) return m;
  }
  throw ContractError("unknown experiment mode: " + std::string(name));
}

std::string ResultRecord::key() const {
  json k = {mode, method, tasks, test_task, seed, config_hash};
  return k.dump();
}

std::string record_to_json(const ResultRecord& r) {
  json j = {{"mode", r.mode},
            {"method", r.method},
            {"tasks", r.tasks},
            {"test_task", r.test_task},
            {"seed", r.seed},
            {"dev_f1_history", r.dev_f1_history},
            {"test_f1", r.test_f1},
            {"best_epoch", r.best_epoch},
            {"wall_time_s", r.wall_time_s},
            {"config_hash", r.config_hash}};
  return j.dump();
}

ResultRecord record_from_json(std::string_view text, std::size_t line) {
  try {
    const json j = json::parse(text);
    ResultRecord r;
    r.mode = j.at("mode").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.tasks = j.at("tasks").get<std::vector<std::string>>();
    r.test_task = j.at("test_task").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.dev_f1_history = j.at("dev_f1_history").get<std::vector<double>>();
    r.test_f1 = j.at("test_f1").get<double>();
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.config_hash = j.at("config_hash").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad results record: ") + e.what(), line);
  }
}

std::string config_hash(const TrainConfig& c, const ModelDims& d) {
  const json canonical = {
      {"train",
       {{"batch_size", c.batch_size},
        {"learning_rate", c.learning_rate},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"epsilon", c.epsilon},
        {"clip_norm", c.clip_norm},
        {"lr_patience", c.lr_patience},
        {"stop_patience", c.stop_patience},
        {"max_epochs", c.max_epochs},
        {"char_dropout", c.char_dropout},
        {"word_dropout", c.word_dropout},
        {"transition_l2", c.transition_l2}}},
      {"dims",
       {{"char_embedding", d.char_embedding},
        {"char_hidden", d.char_hidden},
        {"word_embedding", d.word_embedding},
        {"word_hidden", d.word_hidden},
        {"word_layers", d.word_layers},
        {"task_embedding", d.task_embedding}}}};
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : canonical.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ResultsStore::ResultsStore(std::filesystem::path dir) : file_(std::move(dir) / "results.jsonl") {
  std::filesystem::create_directories(file_.parent_path());
  std::ifstream in(file_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    records_.push_back(record_from_json(line, line_no));
  }
}

bool ResultsStore::contains(const std::string& key) const {
  return std::any_of(records_.begin(), records_.end(),
                     [&](const ResultRecord& r) { return r.key() == key; });
}

void ResultsStore::append(const ResultRecord& record) {
  std::ofstream out(file_, std::ios::app);
  if (!out) throw FormatError("cannot append to " + file_.string());
  out << record_to_json(record) << '\n';
  out.flush();
  if (!out) throw FormatError("write to " + file_.string() + " failed");
  records_.push_back(record);
}

ScoreTable score_table(const std::vector<ResultRecord>& records, std::vector<std::string>* warnings) {
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  // Later records replace earlier ones with the same key (forced re-runs).
  std::map<std::string, std::size_t> latest;
  for (std::size_t i = 0; i < records.size(); ++i) latest[records[i].key()] = i;

  std::vector<std::string> universe;
  std::set<std::string> hashes;
  for (const auto& r : records) {
    for (const auto& t : r.tasks) {
      if (std::find(universe.begin(), universe.end(), t) == universe.end()) universe.push_back(t);
    }
    hashes.insert(r.config_hash);
  }
  if (hashes.size() > 1) warn("store mixes " + std::to_string(hashes.size()) + " training configurations");

  // (method, setting, test task) → per-seed scores, in first-seen order.
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> scores;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ResultRecord& r = records[i];
    if (latest[r.key()] != i) continue;
    std::string setting;
    if (r.mode == "stl") {
      setting = "stl";
    } else if (r.mode == "pairwise") {
      if (r.tasks.size() != 2) {
        warn("pairwise record with " + std::to_string(r.tasks.size()) + " tasks ignored");
        continue;
      }
      setting = "pair:" + (r.tasks[0] == r.test_task ? r.tasks[1] : r.tasks[0]);
    } else if (r.mode == "all") {
      setting = "all";
    } else if (r.mode == "all-but-one") {
      std::vector<std::string> removed;
      for (const auto& t : universe) {
        if (std::find(r.tasks.begin(), r.tasks.end(), t) == r.tasks.end()) removed.push_back(t);
      }
      if (removed.size() != 1) {
        warn("all-but-one record for " + r.test_task + " does not leave out exactly one task");
        continue;
      }
      setting = "abo:" + removed.front();
    } else if (r.mode == "oracle") {
      setting = "oracle";
    } else {
      warn("unknown mode " + r.mode);
      continue;
    }
    auto key = std::make_tuple(setting == "stl" ? std::string() : r.method, setting, r.test_task);
    auto [it, fresh] = scores.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(100.0 * r.test_f1);
  }

  ScoreTable table;
  // Register tasks in universe order so tables follow the registry.
  for (const auto& t : universe) {
    auto key = std::make_tuple(std::string(), std::string("stl"), t);
    if (auto it = scores.find(key); it != scores.end()) table.set("", "stl", t, aggregate(it->second));
  }
  for (const auto& key : order) {
    const auto& [method, setting, task] = key;
    table.set(method, setting, task, aggregate(scores[key]));
  }
  return table;
}

std::vector<std::vector<std::size_t>> stored_oracle_sets(const ResultsStore& store,
                                                         MtlMethod method,
                                                         const std::vector<std::string>& tasks,
                                                         const std::string& hash) {
  std::vector<ResultRecord> relevant;
  for (const auto& r : store.records()) {
    if (r.config_hash == hash && (r.mode == "stl" || (r.mode == "pairwise" && r.method == method_name(method)))) {
      relevant.push_back(r);
    }
  }
  const ScoreTable table = score_table(relevant);
  PairwiseMatrix matrix;
  matrix.tasks = tasks;
  matrix.cells.assign(tasks.size(), std::vector<std::optional<ScoreStats>>(tasks.size()));
  for (std::size_t s = 0; s < tasks.size(); ++s) {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      matrix.cells[s][t] = s == t ? table.get("", "stl", tasks[t])
                                  : table.get(method_name(method), "pair:" + tasks[s], tasks[t]);
    }
  }
  const auto gaps = matrix.gaps();
  if (!gaps.empty()) {
    std::string msg = "oracle mode needs complete STL and pairwise results for " +
                      std::string(method_name(method)) + "; missing:";
    for (const auto& g : gaps) msg += " " + g;
    throw ContractError(msg);
  }
  const RelationSummary rel = classify_relations(matrix);
  std::vector<std::vector<std::size_t>> sets;
  for (std::size_t t = 0; t < tasks.size(); ++t) sets.push_back(oracle_set(t, rel));
  return sets;
}

std::vector<Configuration> plan_configurations(
    ExperimentMode mode, std::size_t task_count,
    const std::vector<std::vector<std::size_t>>& oracle_sets) {
  if (task_count == 0) throw ContractError("empty task registry");
  std::vector<Configuration> out;
  std::vector<std::size_t> all(task_count);
  for (std::size_t i = 0; i < task_count; ++i) all[i] = i;
  switch (mode) {
    case ExperimentMode::Stl:
      for (std::size_t t = 0; t < task_count; ++t) out.push_back({{t}, {t}});
      break;
    case ExperimentMode::Pairwise:
      if (task_count < 2) throw ContractError("pairwise mode needs at least two tasks");
      for (std::size_t s = 0; s < task_count; ++s) {
        for (std::size_t t = s + 1; t < task_count; ++t) out.push_back({{s, t}, {s, t}});
      }
      break;
    case ExperimentMode::All:
      out.push_back({all, all});
      break;
    case ExperimentMode::AllButOne:
      if (task_count < 2) throw ContractError("all-but-one mode needs at least two tasks");
      for (std::size_t r = 0; r < task_count; ++r) {
        std::vector<std::size_t> rest;
        for (std::size_t t : all) {
          if (t != r) rest.push_back(t);
        }
        out.push_back({rest, rest});
      }
      break;
    case ExperimentMode::Oracle:
      if (oracle_sets.size() != task_count) throw ContractError("oracle sets do not cover the registry");
      for (std::size_t t = 0; t < task_count; ++t) {
        if (oracle_sets[t].empty()) continue;
        std::vector<std::size_t> set = oracle_sets[t];
        set.push_back(t);
        std::sort(set.begin(), set.end());
        set.erase(std::unique(set.begin(), set.end()), set.end());
        out.push_back({set, {t}});
      }
      break;
  }
  return out;
}

RunSummary run_experiment(const ExperimentSpec& spec, std::ostream& log) {
  spec.train.validate();
  if (spec.seeds.empty()) throw ContractError("at least one seed is required");
  const std::vector<TaskSpec> registry = read_task_registry(spec.registry);
  std::vector<std::string> names;
  for (const auto& t : registry) names.push_back(t.name);

  ResultsStore store(spec.out);
  const std::string hash = config_hash(spec.train, spec.dims);
  const bool stl = spec.mode == ExperimentMode::Stl;
  const MtlMethod method = stl ? MtlMethod::MultiDec : spec.method;
  const std::string method_label(method_name(method));

  std::vector<std::vector<std::size_t>> oracle_sets;
  if (spec.mode == ExperimentMode::Oracle) {
    oracle_sets = stored_oracle_sets(store, method, names, hash);
    for (std::size_t t = 0; t < names.size(); ++t) {
      if (oracle_sets[t].empty()) {
        log << "oracle set for " << names[t] << " is empty; the report uses its STL result\n";
      }
    }
  }
  const auto configs = plan_configurations(spec.mode, registry.size(), oracle_sets);

  std::vector<std::optional<TaskData>> loaded(registry.size());
  auto task_data = [&](std::size_t i) -> const TaskData& {
    if (!loaded[i]) loaded[i] = load_task(registry[i]);
    return *loaded[i];
  };

  RunSummary summary;
  for (const auto& config : configs) {
    std::vector<std::string> set_names;
    for (std::size_t t : config.tasks) set_names.push_back(names[t]);
    std::string label;
    for (const auto& n : set_names) label += (label.empty() ? "" : "+") + n;

    for (std::uint64_t seed : spec.seeds) {
      std::vector<ResultRecord> records;
      for (std::size_t t : config.test_tasks) {
        ResultRecord r;
        r.mode = mode_name(spec.mode);
        r.method = method_label;
        r.tasks = set_names;
        r.test_task = names[t];
        r.seed = seed;
        r.config_hash = hash;
        records.push_back(std::move(r));
      }
      const bool done = std::all_of(records.begin(), records.end(),
                                    [&](const ResultRecord& r) { return store.contains(r.key()); });
      if (done && !spec.force) {
        log << "skipping " << label << " seed " << seed << ": results already stored (use --force)\n";
        ++summary.skipped;
        continue;
      }

      std::vector<TaskData> data;
      std::vector<TaskSpec> specs;
      std::vector<TaggedSentence> all_train;
      for (std::size_t t : config.tasks) {
        data.push_back(task_data(t));
        specs.push_back(data.back().spec);
        all_train.insert(all_train.end(), data.back().train.begin(), data.back().train.end());
      }
      Vocabulary vocab = build_vocabulary(all_train, method, specs);
      std::optional<PretrainedEmbeddings> pretrained;
      if (spec.embeddings) {
        Rng emb_rng(seed);
        pretrained = load_pretrained(*spec.embeddings, vocab, emb_rng, spec.dims.word_embedding);
        for (const auto& w : pretrained->report.warnings) log << "embeddings: " << w << '\n';
        log << "embeddings: " << pretrained->report.covered << " covered, "
            << pretrained->report.uncovered << " uncovered\n";
      }
      TrainConfig tc = spec.train;
      tc.seed = seed;
      Tagger tagger(method, spec.dims, specs, std::move(vocab), seed,
                    pretrained ? &pretrained->matrix.values : nullptr);
      log << "training " << mode_name(spec.mode) << " " << method_label << " [" << label
          << "] seed " << seed << " (" << tagger.parameter_count() << " parameters)\n";
      const TrainResult result = train(tagger, data, tc, [&](const EpochLog& e) {
        log << "  epoch " << e.epoch << " loss " << e.mean_loss << " dev " << e.criterion
            << " lr " << e.learning_rate << '\n';
      });
      if (spec.save_checkpoints) {
        const auto dir = spec.out / "checkpoints";
        std::filesystem::create_directories(dir);
        save_checkpoint(dir / (std::string(mode_name(spec.mode)) + "_" + method_label + "_" + label +
                               "_s" + std::to_string(seed) + ".ckpt"),
                        tagger, &result.optimizer, result.rng_state);
      }
      for (auto& r : records) {
        const std::size_t slot = static_cast<std::size_t>(
            std::find(set_names.begin(), set_names.end(), r.test_task) - set_names.begin());
        for (const auto& e : result.epochs) r.dev_f1_history.push_back(e.dev_f1[slot]);
        r.test_f1 = result.test_f1[slot];
        r.best_epoch = result.best_epoch;
        r.wall_time_s = result.wall_time_s;
        store.append(r);
        summary.records.push_back(r);
        log << "  test " << r.test_task << " F1 " << r.test_f1 << " (best epoch " << r.best_epoch
            << ")\n";
      }
      ++summary.trained;
    }
  }
  return summary;
}

std::string export_task_embeddings(const Tagger& tagger) {
  if (tagger.method() != MtlMethod::TeDec || !tagger.task_embedding()) {
    throw ContractError("task embeddings exist only in te-dec models");
  }
  const Tensor& table = tagger.task_embedding()->value;
  std::string out;
  char buf[32];
  for (std::size_t t = 0; t < tagger.tasks().size(); ++t) {
    out += tagger.tasks()[t].name;
    for (std::size_t c = 0; c < table.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "\t%.17g", table.at(t, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace mtltag
