#include "mtltag/corpus.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "mtltag/errors.hpp"

namespace mtltag {

std::string_view scheme_name(TagScheme s) {
  return s == TagScheme::SpanPrefixed ? "span-prefixed" : "token-level";
}

TagScheme parse_scheme(std::string_view name) {
  if (name == "span-prefixed" || name == "span") return TagScheme::SpanPrefixed;
  if (name == "token-level" || name == "token") return TagScheme::TokenLevel;
  throw ContractError("unknown tagging scheme: " + std::string(name));
}

std::optional<std::size_t> TaskSpec::label_index(std::string_view tag) const {
  for (std::size_t i = 0; i < label_set.size(); ++i) {
    if (label_set[i] == tag) return i;
  }
  return std::nullopt;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<char32_t> utf8_codepoints(std::string_view s) {
  std::vector<char32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = b0;
    if (b0 >= 0xC0 && b0 < 0xE0) len = 2, cp = b0 & 0x1F;
    else if (b0 >= 0xE0 && b0 < 0xF0) len = 3, cp = b0 & 0x0F;
    else if (b0 >= 0xF0 && b0 < 0xF8) len = 4, cp = b0 & 0x07;
    bool valid = len > 1 && i + len <= s.size();
    for (std::size_t k = 1; valid && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) valid = false;
      else cp = (cp << 6) | (b & 0x3F);
    }
    if (len > 1 && !valid) {
      out.push_back(b0);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  const char sep = line.find('\t') != std::string_view::npos ? '\t' : ' ';
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t pos = line.find(sep, start);
    const std::size_t end = pos == std::string_view::npos ? line.size() : pos;
    fields.push_back(line.substr(start, end - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::string_view trim_eol(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

}  // namespace

std::vector<TaggedSentence> parse_column_stream(std::istream& in) {
  std::vector<TaggedSentence> out;
  TaggedSentence current;
  std::string raw;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) out.push_back(std::move(current));
    current = TaggedSentence{};
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim_eol(raw);
    if (is_blank(line)) {
      flush();
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError("expected 'token<TAB>tag', got " + std::to_string(fields.size()) +
                           " field(s): '" + std::string(line) + "'",
                       line_no);
    }
    current.tokens.emplace_back(fields[0]);
    current.lowercased.push_back(lowercase(fields[0]));
    current.tags.emplace_back(fields[1]);
  }
  flush();
  return out;
}

std::vector<TaggedSentence> read_column_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open column file: " + path.string());
  try {
    return parse_column_stream(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

std::optional<ChunkTag> parse_chunk_tag(std::string_view tag) {
  if (tag == "O") return std::nullopt;
  const char p = tag.empty() ? '\0' : tag[0];
  const bool prefixed = (p == 'B' || p == 'I' || p == 'E' || p == 'S') &&
                        (tag.size() == 1 || tag[1] == '-');
  if (!prefixed) return ChunkTag{'S', std::string(tag)};
  return ChunkTag{p, tag.size() > 2 ? std::string(tag.substr(2)) : std::string()};
}

std::vector<Chunk> segment_chunks(std::span<const std::string> tags) {
  std::vector<Chunk> chunks;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto ct = parse_chunk_tag(tags[i]);
    if (!ct) {
      open = false;
      continue;
    }
    const bool continues = open && (ct->prefix == 'I' || ct->prefix == 'E') &&
                           chunks.back().type == ct->type;
    if (continues) {
      chunks.back().end = i;
    } else {
      chunks.push_back({i, i, ct->type});
    }
    open = ct->prefix == 'B' || ct->prefix == 'I';
  }
  return chunks;
}

std::vector<std::string> to_iobes(std::span<const std::string> tags) {
  std::vector<std::string> out(tags.size(), "O");
  auto make = [](char prefix, const std::string& type) {
    return type.empty() ? std::string(1, prefix) : std::string(1, prefix) + "-" + type;
  };
  for (const Chunk& c : segment_chunks(tags)) {
    if (c.start == c.end) {
      out[c.start] = make('S', c.type);
      continue;
    }
    out[c.start] = make('B', c.type);
    for (std::size_t i = c.start + 1; i < c.end; ++i) out[i] = make('I', c.type);
    out[c.end] = make('E', c.type);
  }
  return out;
}

Vocabulary::Vocabulary() {
  words_ = {"<pad>", "<unk>"};
  chars_ = {U'\0', U'\1'};
}

int Vocabulary::word_id(std::string_view lowercased) const {
  auto it = word_index_.find(std::string(lowercased));
  return it == word_index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains_word(std::string_view lowercased) const {
  return word_index_.count(std::string(lowercased)) != 0;
}

int Vocabulary::char_id(char32_t c) const {
  auto it = char_index_.find(c);
  return it == char_index_.end() ? kUnk : it->second;
}

int Vocabulary::add_word(const std::string& lowercased) {
  if (auto it = word_index_.find(lowercased); it != word_index_.end()) return it->second;
  const int id = static_cast<int>(words_.size());
  words_.push_back(lowercased);
  word_index_.emplace(lowercased, id);
  return id;
}

int Vocabulary::add_char(char32_t c) {
  if (auto it = char_index_.find(c); it != char_index_.end()) return it->second;
  const int id = static_cast<int>(chars_.size());
  chars_.push_back(c);
  char_index_.emplace(c, id);
  return id;
}

std::optional<int> Vocabulary::task_token_id(std::size_t task) const {
  if (task >= task_tokens_.size()) return std::nullopt;
  return task_tokens_[task];
}

Vocabulary build_vocabulary(std::span<const TaggedSentence> train, MtlMethod method,
                            std::span<const TaskSpec> tasks) {
  Vocabulary vocab;
  for (const auto& s : train) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      vocab.add_word(s.lowercased[i]);
      for (char32_t c : utf8_codepoints(s.tokens[i])) vocab.add_char(c);
    }
  }
  if (method == MtlMethod::TeEnc) {
    std::vector<int> ids;
    for (const auto& t : tasks) {
      const std::string token = Vocabulary::task_token(t.name);
      ids.push_back(vocab.add_word(token));
      for (char32_t c : utf8_codepoints(token)) vocab.add_char(c);
    }
    vocab.set_task_tokens(std::move(ids));
  }
  return vocab;
}

PretrainedEmbeddings load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab,
                                     Rng& rng, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file: " + path.string());

  std::map<int, std::vector<double>> found;
  std::string raw;
  std::size_t line_no = 0;
  PretrainedEmbeddings out;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim_eol(raw);
    if (is_blank(line)) continue;
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (pos < line.size()) {
      const std::size_t start = line.find_first_not_of(" \t", pos);
      if (start == std::string_view::npos) break;
      const std::size_t end = std::min(line.find_first_of(" \t", start), line.size());
      fields.push_back(line.substr(start, end - start));
      pos = end;
    }
    if (fields.size() - 1 != dim) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, got " + std::to_string(fields.size() - 1));
    }
    std::vector<double> v(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const auto f = fields[k + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v[k]);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v[k])) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                          std::string(f) + "'");
      }
    }
    const std::string word = lowercase(fields[0]);
    if (!vocab.contains_word(word)) continue;
    const int id = vocab.word_id(word);
    if (id == Vocabulary::kPad || id == Vocabulary::kUnk) continue;
    if (found.count(id)) {
      out.report.warnings.push_back("duplicate vector for '" + word + "' at line " +
                                    std::to_string(line_no) + "; keeping the last one");
    }
    found[id] = std::move(v);
  }

  Tensor matrix = init_parameter({vocab.word_count(), dim}, InitKind::UncoveredWordEmbedding, rng);
  for (std::size_t k = 0; k < dim; ++k) matrix.at(Vocabulary::kPad, k) = 0.0;
  for (const auto& [id, v] : found) {
    for (std::size_t k = 0; k < dim; ++k) matrix.at(static_cast<std::size_t>(id), k) = v[k];
  }
  out.report.covered = found.size();
  out.report.uncovered = vocab.word_count() - 2 - found.size();
  out.matrix.values = std::move(matrix);
  return out;
}

DatasetStats dataset_stats(std::span<const TaggedSentence> split, const TaskSpec& task,
                           const StatsOptions& options) {
  if (split.empty()) throw ContractError("dataset_stats: empty split for task " + task.name);
  if (!(options.entropy_base > 1.0)) throw ContractError("dataset_stats: entropy base must exceed 1");
  DatasetStats st;
  st.sentence_count = split.size();
  std::unordered_set<std::string> types;
  std::map<std::string, std::size_t> tag_counts;
  for (const auto& s : split) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      types.insert(options.lowercase_types ? s.lowercased[i] : s.tokens[i]);
      ++tag_counts[s.tags[i]];
    }
    st.token_count += s.size();
  }
  st.type_count = types.size();
  st.token_type_ratio = static_cast<double>(st.token_count) / static_cast<double>(st.type_count);
  st.label_count = task.label_set.empty() ? tag_counts.size() : task.label_set.size();
  double h = 0.0;
  for (const auto& [tag, count] : tag_counts) {
    const double p = static_cast<double>(count) / static_cast<double>(st.token_count);
    h -= p * std::log(p);
  }
  st.label_entropy = h / std::log(options.entropy_base);
  if (st.label_entropy == 0.0) st.label_entropy = 0.0;  // normalise -0
  return st;
}

std::vector<TaskSpec> read_task_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open task registry: " + path.string());
  const auto base = path.parent_path();
  std::vector<TaskSpec> specs;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim_eol(raw);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (is_blank(line)) continue;
    std::vector<std::string> fields;
    std::istringstream ls{std::string(line)};
    for (std::string f; ls >> f;) fields.push_back(f);
    if (fields.size() != 3) {
      throw ParseError(path.string() + ": expected 'name<TAB>scheme<TAB>train,dev,test'", line_no);
    }
    std::vector<std::string> paths;
    std::istringstream ps(fields[2]);
    for (std::string p; std::getline(ps, p, ',');) paths.push_back(p);
    if (paths.size() != 3) {
      throw ParseError(path.string() + ": expected three comma-separated split paths", line_no);
    }
    TaskSpec spec;
    spec.task_id = specs.size();
    spec.name = fields[0];
    try {
      spec.scheme = parse_scheme(fields[1]);
    } catch (const ContractError& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    spec.paths = {resolve(paths[0]), resolve(paths[1]), resolve(paths[2])};
    for (const auto& other : specs) {
      if (other.name == spec.name) throw ParseError("duplicate task name " + spec.name, line_no);
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

TaskData load_task(TaskSpec spec) {
  TaskData data;
  auto read = [&](const std::filesystem::path& p) {
    auto sentences = read_column_file(p);
    for (auto& s : sentences) {
      s.task_id = spec.task_id;
      if (spec.scheme == TagScheme::SpanPrefixed) s.tags = to_iobes(s.tags);
    }
    return sentences;
  };
  data.train = read(spec.paths.train);
  data.dev = read(spec.paths.dev);
  data.test = read(spec.paths.test);

  std::unordered_set<std::string> seen(spec.label_set.begin(), spec.label_set.end());
  for (const auto* split : {&data.train, &data.dev, &data.test}) {
    for (const auto& s : *split) {
      for (const auto& t : s.tags) {
        if (seen.insert(t).second) spec.label_set.push_back(t);
      }
    }
  }
  data.spec = std::move(spec);
  return data;
}

std::vector<TaskData> load_tasks(const std::vector<TaskSpec>& specs) {
  std::vector<TaskData> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(load_task(s));
  return out;
}

}  // namespace mtltag
