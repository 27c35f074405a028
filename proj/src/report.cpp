#include "mtltag/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mtltag/errors.hpp"

namespace mtltag {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string signed_fixed(double v, int digits) {
  const std::string s = fixed(v, digits);
  return v >= 0 ? "+" + s : s;
}

std::string_view arrow(ComparisonOutcome c) {
  switch (c) {
    case ComparisonOutcome::Higher: return "↑";
    case ComparisonOutcome::Lower: return "↓";
    case ComparisonOutcome::Neutral: return "";
  }
  return "";
}

std::string_view marker(ComparisonOutcome c) {
  switch (c) {
    case ComparisonOutcome::Higher: return "up";
    case ComparisonOutcome::Lower: return "down";
    case ComparisonOutcome::Neutral: return "none";
  }
  return "none";
}

std::string cell_text(double mean, ComparisonOutcome c) {
  std::string s = fixed(mean, 2);
  if (c != ComparisonOutcome::Neutral) s += " " + std::string(arrow(c));
  return s;
}

void add_unique(std::vector<std::string>& v, std::string_view s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.emplace_back(s);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  return out;
}

class MarkdownTable {
 public:
  explicit MarkdownTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }
  std::string str() const {
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& cells) {
      out << "|";
      for (const auto& c : cells) out << " " << c << " |";
      out << "\n";
    };
    line(header_);
    out << "|";
    for (std::size_t i = 0; i < header_.size(); ++i) out << (i == 0 ? " --- |" : " ---: |");
    out << "\n";
    for (const auto& r : rows_) line(r);
    return out.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace

void ScoreTable::set(std::string_view method, std::string_view setting, std::string_view test_task,
                     const ScoreStats& stats) {
  const bool stl = setting == "stl";
  cells_[{stl ? std::string() : std::string(method), std::string(setting), std::string(test_task)}] =
      stats;
  add_unique(tasks_, test_task);
  if (!stl) add_unique(methods_, method);
}

std::optional<ScoreStats> ScoreTable::get(std::string_view method, std::string_view setting,
                                          std::string_view test_task) const {
  const bool stl = setting == "stl";
  auto it = cells_.find(
      {stl ? std::string() : std::string(method), std::string(setting), std::string(test_task)});
  if (it == cells_.end()) return std::nullopt;
  return it->second;
}

ScoreTable read_score_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open score fixture: " + path.string());
  ScoreTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() < 5) throw ParseError(path.string() + ": expected at least 5 columns", line_no);
    ScoreStats s;
    try {
      s.mean = std::stod(f[3]);
      s.std = std::stod(f[4]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": bad number", line_no);
    }
    table.set(f[2], f[1], f[0], s);
  }
  return table;
}

PairwiseMatrix PairwiseMatrix::from_table(const ScoreTable& table, std::string_view method) {
  PairwiseMatrix m;
  m.tasks = table.tasks();
  const std::size_t n = m.tasks.size();
  m.cells.assign(n, std::vector<std::optional<ScoreStats>>(n));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      m.cells[s][t] = s == t ? table.get(method, "stl", m.tasks[t])
                             : table.get(method, "pair:" + m.tasks[s], m.tasks[t]);
    }
  }
  return m;
}

std::vector<std::string> PairwiseMatrix::gaps() const {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < tasks.size(); ++s) {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (!cells[s][t]) out.push_back(s == t ? "stl→" + tasks[t] : tasks[s] + "→" + tasks[t]);
    }
  }
  return out;
}

std::size_t PairwiseMatrix::index(std::string_view task) const {
  auto it = std::find(tasks.begin(), tasks.end(), task);
  if (it == tasks.end()) throw ContractError("unknown task " + std::string(task));
  return static_cast<std::size_t>(it - tasks.begin());
}

std::string_view relation_name(Relation r) {
  switch (r) {
    case Relation::Beneficial: return "beneficial";
    case Relation::Harmful: return "harmful";
    case Relation::Neutral: return "neutral";
  }
  return "neutral";
}

Relation RelationSummary::at(std::size_t helper, std::size_t test) const {
  for (const auto& e : edges) {
    if (e.helper == helper && e.test == test) return e.relation;
  }
  throw ContractError("no relation edge " + std::to_string(helper) + "→" + std::to_string(test));
}

RelationSummary classify_relations(const PairwiseMatrix& matrix, double k) {
  const std::size_t n = matrix.tasks.size();
  RelationSummary r;
  r.task_count = n;
  r.helps.assign(n, 0);
  r.harms.assign(n, 0);
  r.helped.assign(n, 0);
  r.harmed.assign(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      if (s == t) continue;
      RelationEdge e{s, t, Relation::Neutral, false};
      const auto& pair = matrix.cells[s][t];
      const auto& stl = matrix.cells[t][t];
      if (!pair || !stl) {
        e.missing = true;
      } else {
        switch (compare(*pair, *stl, k)) {
          case ComparisonOutcome::Higher:
            e.relation = Relation::Beneficial;
            ++r.helps[s];
            ++r.helped[t];
            break;
          case ComparisonOutcome::Lower:
            e.relation = Relation::Harmful;
            ++r.harms[s];
            ++r.harmed[t];
            break;
          case ComparisonOutcome::Neutral: break;
        }
      }
      r.edges.push_back(e);
    }
  }
  return r;
}

std::vector<std::size_t> oracle_set(std::size_t test, const RelationSummary& relations) {
  std::vector<std::size_t> out;
  for (const auto& e : relations.edges) {
    if (e.test == test && e.relation == Relation::Beneficial) out.push_back(e.helper);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string_view category_name(EdgeCategory c) {
  switch (c) {
    case EdgeCategory::MutualBenefit: return "mutual-benefit";
    case EdgeCategory::MutualHarm: return "mutual-harm";
    case EdgeCategory::Asymmetric: return "asymmetric";
    case EdgeCategory::OneDirectional: return "one-directional";
    case EdgeCategory::None: return "none";
  }
  return "none";
}

EdgeCategory categorize(Relation forward, Relation backward) {
  using R = Relation;
  if (forward == R::Beneficial && backward == R::Beneficial) return EdgeCategory::MutualBenefit;
  if (forward == R::Harmful && backward == R::Harmful) return EdgeCategory::MutualHarm;
  if (forward == R::Neutral && backward == R::Neutral) return EdgeCategory::None;
  if (forward == R::Neutral || backward == R::Neutral) return EdgeCategory::OneDirectional;
  return EdgeCategory::Asymmetric;
}

namespace {

struct OracleCell {
  std::optional<ScoreStats> stats;
  bool stl_fallback = false;
};

OracleCell oracle_cell(const ScoreTable& table, const std::string& method,
                       const PairwiseMatrix& matrix, const RelationSummary& rel, std::size_t t) {
  for (std::size_t s = 0; s < matrix.tasks.size(); ++s) {
    if (!matrix.cells[s][t]) return {};
  }
  if (oracle_set(t, rel).empty()) return {matrix.cells[t][t], true};
  return {table.get(method, "oracle", matrix.tasks[t]), false};
}

void render_method(const ScoreTable& table, const std::string& method, double k, ReportFiles& out) {
  const PairwiseMatrix matrix = PairwiseMatrix::from_table(table, method);
  const RelationSummary rel = classify_relations(matrix, k);
  const auto& tasks = matrix.tasks;
  const std::size_t n = tasks.size();
  auto warn = [&](const std::string& what) { out.warnings.push_back(method + ": " + what); };

  std::vector<std::string> header{method};
  for (const auto& t : tasks) header.push_back(t);
  header.push_back("#↑");
  header.push_back("#↓");
  MarkdownTable md(header);
  std::ostringstream tsv;
  tsv << "row\ttest_task\tmean\tstd\tmarker\tnote\n";
  auto tsv_row = [&](const std::string& row, const std::string& t, const ScoreStats& s,
                     ComparisonOutcome c, const std::string& note) {
    tsv << row << '\t' << t << '\t' << fixed(s.mean, 2) << '\t' << fixed(s.std, 2) << '\t'
        << marker(c) << '\t' << note << '\n';
  };

  std::vector<std::string> stl_row{"STL"};
  for (std::size_t t = 0; t < n; ++t) {
    const auto& s = matrix.cells[t][t];
    stl_row.push_back(s ? fixed(s->mean, 2) : "");
    if (s) tsv_row("stl", tasks[t], *s, ComparisonOutcome::Neutral, "");
    else warn("missing STL for " + tasks[t]);
  }
  stl_row.push_back("");
  stl_row.push_back("");
  md.row(stl_row);

  std::vector<double> pair_sum(n, 0.0);
  std::vector<std::size_t> pair_count(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    bool any = false;
    for (std::size_t t = 0; t < n; ++t) any = any || (s != t && matrix.cells[s][t]);
    if (!any) continue;
    std::vector<std::string> row{"+" + tasks[s]};
    for (std::size_t t = 0; t < n; ++t) {
      const auto& c = matrix.cells[s][t];
      if (s == t) {
        row.push_back(c ? fixed(c->mean, 2) : "");
        continue;
      }
      if (!c) {
        row.push_back("");
        warn("missing pairwise cell " + tasks[s] + "→" + tasks[t]);
        continue;
      }
      const auto outcome = matrix.cells[t][t] ? compare(*c, *matrix.cells[t][t], k)
                                              : ComparisonOutcome::Neutral;
      row.push_back(cell_text(c->mean, outcome));
      tsv_row("pair:" + tasks[s], tasks[t], *c, outcome, "");
      pair_sum[t] += c->mean;
      ++pair_count[t];
    }
    row.push_back(std::to_string(rel.helps[s]));
    row.push_back(std::to_string(rel.harms[s]));
    md.row(row);
  }

  std::vector<std::string> avg_row{"Average"};
  for (std::size_t t = 0; t < n; ++t) {
    avg_row.push_back(pair_count[t] ? fixed(pair_sum[t] / static_cast<double>(pair_count[t]), 2) : "");
  }
  avg_row.push_back("");
  avg_row.push_back("");
  md.row(avg_row);

  auto setting_row = [&](const std::string& label, const std::string& setting) {
    std::vector<std::string> row{label};
    bool any = false;
    for (std::size_t t = 0; t < n; ++t) {
      std::optional<ScoreStats> c;
      std::string note;
      if (setting == "oracle") {
        const OracleCell oc = oracle_cell(table, method, matrix, rel, t);
        c = oc.stats;
        if (oc.stl_fallback) note = "stl";
      } else {
        c = table.get(method, setting, tasks[t]);
      }
      const auto& stl = matrix.cells[t][t];
      if (!c) {
        row.push_back("");
        continue;
      }
      any = true;
      const auto outcome = stl && note.empty() ? compare(*c, *stl, k) : ComparisonOutcome::Neutral;
      row.push_back(cell_text(c->mean, outcome) + (note.empty() ? "" : " (STL)"));
      tsv_row(setting, tasks[t], *c, outcome, note);
    }
    row.push_back("");
    row.push_back("");
    md.row(row);
    return any;
  };
  if (!setting_row("All", "all")) warn("no All results");
  if (!setting_row("Oracle", "oracle")) warn("no Oracle results");
  for (std::size_t t = 0; t < n; ++t) {
    if (!oracle_cell(table, method, matrix, rel, t).stats) warn("Oracle cell unavailable for " + tasks[t]);
  }

  std::vector<std::string> up_row{"#↑"}, down_row{"#↓"};
  for (std::size_t t = 0; t < n; ++t) {
    up_row.push_back(std::to_string(rel.helped[t]));
    down_row.push_back(std::to_string(rel.harmed[t]));
  }
  for (auto* r : {&up_row, &down_row}) {
    r->push_back("");
    r->push_back("");
    md.row(*r);
  }
  out.files["pairwise_" + method + ".md"] = md.str();
  out.files["pairwise_" + method + ".tsv"] = tsv.str();

  std::ostringstream edges;
  edges << "helper\ttest_task\trelation\n";
  for (const auto& e : rel.edges) {
    if (e.missing) continue;
    edges << tasks[e.helper] << '\t' << tasks[e.test] << '\t' << relation_name(e.relation) << '\n';
  }
  out.files["edges_" + method + ".tsv"] = edges.str();

  std::ostringstream cats;
  cats << "task_a\ttask_b\ta_to_b\tb_to_a\tcategory\n";
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (!matrix.cells[a][b] || !matrix.cells[b][a] || !matrix.cells[a][a] || !matrix.cells[b][b]) {
        continue;
      }
      const Relation ab = rel.at(a, b), ba = rel.at(b, a);
      cats << tasks[a] << '\t' << tasks[b] << '\t' << relation_name(ab) << '\t'
           << relation_name(ba) << '\t' << category_name(categorize(ab, ba)) << '\n';
    }
  }
  out.files["edge_categories_" + method + ".tsv"] = cats.str();

  bool any_abo = false;
  std::vector<std::string> abo_header{"removed"};
  for (const auto& t : tasks) abo_header.push_back(t);
  MarkdownTable abo_md(abo_header);
  std::ostringstream abo_tsv;
  abo_tsv << "removed\ttest_task\tmean\tstd\tdelta_vs_all\tmarker\n";
  std::vector<std::string> all_row{"All"};
  for (const auto& t : tasks) {
    const auto all = table.get(method, "all", t);
    all_row.push_back(all ? fixed(all->mean, 2) : "");
  }
  abo_md.row(all_row);
  for (const auto& removed : tasks) {
    std::vector<std::string> row{"−" + removed};
    bool row_any = false;
    for (const auto& t : tasks) {
      const auto c = table.get(method, "abo:" + removed, t);
      const auto all = table.get(method, "all", t);
      if (!c || !all || t == removed) {
        row.push_back("");
        continue;
      }
      row_any = true;
      const auto outcome = compare(*c, *all, k);
      const double delta = c->mean - all->mean;
      std::string text = signed_fixed(delta, 2);
      if (outcome != ComparisonOutcome::Neutral) text += " " + std::string(arrow(outcome));
      row.push_back(text);
      abo_tsv << removed << '\t' << t << '\t' << fixed(c->mean, 2) << '\t' << fixed(c->std, 2)
              << '\t' << signed_fixed(delta, 2) << '\t' << marker(outcome) << '\n';
    }
    if (row_any) {
      any_abo = true;
      abo_md.row(row);
    }
  }
  if (any_abo) {
    out.files["all_but_one_" + method + ".md"] = abo_md.str();
    out.files["all_but_one_" + method + ".tsv"] = abo_tsv.str();
  }
}

}  // namespace

ReportFiles render_report(const ScoreTable& table, double k) {
  ReportFiles out;
  if (table.empty()) {
    out.warnings.push_back("empty score table");
    return out;
  }
  const auto& tasks = table.tasks();
  if (table.methods().empty()) {
    std::vector<std::string> header{"setting"};
    for (const auto& t : tasks) header.push_back(t);
    MarkdownTable md(header);
    std::vector<std::string> row{"STL"};
    for (const auto& t : tasks) {
      const auto s = table.get("", "stl", t);
      row.push_back(s ? fixed(s->mean, 2) : "");
    }
    md.row(row);
    out.files["baseline.md"] = md.str();
  }
  for (const auto& method : table.methods()) render_method(table, method, k, out);

  std::ostringstream summary, plot;
  summary << "method\ttest_task\tstl\tpair_min\tpair_max\tall\toracle\n";
  plot << "method,test_task,setting,relative_improvement\n";
  for (const auto& method : table.methods()) {
    const PairwiseMatrix matrix = PairwiseMatrix::from_table(table, method);
    const RelationSummary rel = classify_relations(matrix, k);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const auto& stl = matrix.cells[t][t];
      if (!stl || stl->mean == 0.0) continue;
      auto relative = [&](const std::optional<ScoreStats>& s) -> std::optional<double> {
        if (!s) return std::nullopt;
        return (s->mean - stl->mean) / stl->mean;
      };
      std::optional<double> lo, hi;
      for (std::size_t s = 0; s < tasks.size(); ++s) {
        if (s == t) continue;
        if (const auto r = relative(matrix.cells[s][t])) {
          lo = lo ? std::min(*lo, *r) : *r;
          hi = hi ? std::max(*hi, *r) : *r;
        }
      }
      const auto all = relative(table.get(method, "all", tasks[t]));
      const auto oracle = relative(oracle_cell(table, method, matrix, rel, t).stats);
      auto col = [](const std::optional<double>& v) { return v ? fixed(*v, 4) : std::string(); };
      summary << method << '\t' << tasks[t] << '\t' << fixed(stl->mean, 2) << '\t' << col(lo) << '\t'
              << col(hi) << '\t' << col(all) << '\t' << col(oracle) << '\n';
      const std::pair<const char*, std::optional<double>> points[] = {
          {"pair_min", lo}, {"pair_max", hi}, {"all", all}, {"oracle", oracle}};
      for (const auto& [name, v] : points) {
        if (v) plot << method << ',' << tasks[t] << ',' << name << ',' << fixed(*v, 6) << '\n';
      }
    }
  }
  if (!table.methods().empty()) {
    out.files["relative_improvement.tsv"] = summary.str();
    out.files["relative_improvement.csv"] = plot.str();
  }
  return out;
}

void write_report(const ReportFiles& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, contents] : report.files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw FormatError("cannot write " + (dir / name).string());
    out << contents;
  }
}

}  // namespace mtltag
