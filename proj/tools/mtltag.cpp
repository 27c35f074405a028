// mtltag command-line interface.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "mtltag/checkpoint.hpp"
#include "mtltag/checks.hpp"
#include "mtltag/corpus.hpp"
#include "mtltag/errors.hpp"
#include "mtltag/orchestrator.hpp"
#include "mtltag/report.hpp"
#include "mtltag/synthetic.hpp"

namespace {

using namespace mtltag;

void add_train_options(CLI::App& cmd, TrainConfig& tc, ModelDims& dims) {
  cmd.add_option("--batch-size", tc.batch_size)->capture_default_str();
  cmd.add_option("--lr", tc.learning_rate)->capture_default_str();
  cmd.add_option("--beta1", tc.beta1)->capture_default_str();
  cmd.add_option("--beta2", tc.beta2)->capture_default_str();
  cmd.add_option("--adam-eps", tc.epsilon)->capture_default_str();
  cmd.add_option("--clip-norm", tc.clip_norm)->capture_default_str();
  cmd.add_option("--lr-patience", tc.lr_patience)->capture_default_str();
  cmd.add_option("--stop-patience", tc.stop_patience)->capture_default_str();
  cmd.add_option("--max-epochs", tc.max_epochs)->capture_default_str();
  cmd.add_option("--char-dropout", tc.char_dropout)->capture_default_str();
  cmd.add_option("--word-dropout", tc.word_dropout)->capture_default_str();
  cmd.add_option("--transition-l2", tc.transition_l2)->capture_default_str();
  cmd.add_option("--char-embedding", dims.char_embedding)->capture_default_str();
  cmd.add_option("--char-hidden", dims.char_hidden)->capture_default_str();
  cmd.add_option("--word-embedding", dims.word_embedding)->capture_default_str();
  cmd.add_option("--word-hidden", dims.word_hidden)->capture_default_str();
  cmd.add_option("--word-layers", dims.word_layers)->capture_default_str();
  cmd.add_option("--task-embedding", dims.task_embedding)->capture_default_str();
}

int print_stats(const std::filesystem::path& registry, double base) {
  StatsOptions opts;
  opts.entropy_base = base;
  std::printf("task\ttrain_sentences\tdev_sentences\ttest_sentences\ttrain_tokens\ttrain_types\t"
              "token_type_ratio\tlabels\tlabel_entropy\n");
  for (const auto& spec : read_task_registry(registry)) {
    const TaskData data = load_task(spec);
    const DatasetStats st = dataset_stats(data.train, data.spec, opts);
    std::printf("%s\t%zu\t%zu\t%zu\t%zu\t%zu\t%.4f\t%zu\t%.4f\n", data.spec.name.c_str(),
                data.train.size(), data.dev.size(), data.test.size(), st.token_count,
                st.type_count, st.token_type_ratio, st.label_count, st.label_entropy);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task sequence tagging experiments"};
  app.set_config("--config", "", "TOML/INI file with option values");
  app.require_subcommand(1);

  ExperimentSpec spec;
  std::string mode = "stl", method = "multi-dec", embeddings;
  std::size_t seed_count = 3;
  std::uint64_t first_seed = 1;
  auto* run = app.add_subcommand("run", "Train the configurations of an experiment mode");
  run->add_option("--mode", mode)
      ->check(CLI::IsMember({"stl", "pairwise", "all", "all-but-one", "oracle"}))
      ->capture_default_str();
  run->add_option("--method", method)
      ->check(CLI::IsMember({"multi-dec", "te-dec", "te-enc"}))
      ->capture_default_str();
  run->add_option("--registry", spec.registry)->required()->check(CLI::ExistingFile);
  run->add_option("--seeds", seed_count, "Number of seeds")->capture_default_str();
  run->add_option("--first-seed", first_seed)->capture_default_str();
  run->add_option("--out", spec.out)->required();
  run->add_flag("--force", spec.force, "Re-run configurations already in the store");
  run->add_option("--embeddings", embeddings, "Pretrained word vectors")->check(CLI::ExistingFile);
  run->add_flag("--checkpoints", spec.save_checkpoints, "Save a checkpoint per trained model");
  add_train_options(*run, spec.train, spec.dims);

  std::filesystem::path store_dir, report_out, fixture;
  double k = 1.5;
  auto* report = app.add_subcommand("report", "Render tables from a results store");
  auto* store_opt = report->add_option("--store", store_dir)->check(CLI::ExistingDirectory);
  report->add_option("--fixture", fixture, "Score TSV (test_task, setting, method, mean, std)")
      ->check(CLI::ExistingFile)
      ->excludes(store_opt);
  report->add_option("--out", report_out)->required();
  report->add_option("--k", k)->capture_default_str();

  std::filesystem::path checkpoint, emb_out;
  auto* exp = app.add_subcommand("export-task-emb", "Write the task embeddings of a te-dec model");
  exp->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  exp->add_option("--out", emb_out)->required();

  std::filesystem::path stats_registry;
  double entropy_base = 2.0;
  auto* stats = app.add_subcommand("stats", "Dataset statistics per registered task");
  stats->add_option("--registry", stats_registry)->required()->check(CLI::ExistingFile);
  stats->add_option("--entropy-base", entropy_base)->capture_default_str();

  std::string suite;
  auto* check = app.add_subcommand("check", "Run a self-check suite");
  check->add_option("--suite", suite)->required()->check(CLI::IsMember({"grad", "crf", "f1", "batching"}));

  std::filesystem::path synth_out;
  SyntheticOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Write the synthetic two-task fixture");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--seed", synth_opts.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      spec.mode = parse_mode(mode);
      spec.method = parse_method(method);
      spec.seeds.resize(seed_count);
      std::iota(spec.seeds.begin(), spec.seeds.end(), first_seed);
      if (!embeddings.empty()) spec.embeddings = embeddings;
      const RunSummary s = run_experiment(spec, std::cout);
      std::cout << s.trained << " trained, " << s.skipped << " skipped\n";
    } else if (*report) {
      if (store_dir.empty() && fixture.empty()) throw ContractError("report needs --store or --fixture");
      std::vector<std::string> warnings;
      const ScoreTable table = fixture.empty()
                                   ? score_table(ResultsStore(store_dir).records(), &warnings)
                                   : read_score_fixture(fixture);
      ReportFiles files = render_report(table, k);
      warnings.insert(warnings.end(), files.warnings.begin(), files.warnings.end());
      write_report(files, report_out);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      for (const auto& [name, _] : files.files) std::cout << (report_out / name).string() << '\n';
    } else if (*exp) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      std::ofstream out(emb_out, std::ios::binary);
      if (!out) throw FormatError("cannot write " + emb_out.string());
      out << export_task_embeddings(ck.tagger);
    } else if (*stats) {
      return print_stats(stats_registry, entropy_base);
    } else if (*check) {
      bool ok = true;
      for (const auto& r : run_check_suite(suite)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
        if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
        std::cout << '\n';
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    } else if (*synth) {
      write_synthetic_fixture(synth_out, synth_opts);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
