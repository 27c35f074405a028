#pragma once

// Dataset ingestion: column files, tagging-scheme conversion, vocabularies,
// pretrained embeddings and per-split statistics.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtltag/init.hpp"
#include "mtltag/method.hpp"
#include "mtltag/tensor.hpp"

namespace mtltag {

enum class TagScheme {
  SpanPrefixed,  ///< B/I/E/S-TYPE chunk tags (IOB input is converted to IOBES)
  TokenLevel,    ///< one label per token, each non-O token is its own span
};

std::string_view scheme_name(TagScheme s);
TagScheme parse_scheme(std::string_view name);

struct SplitPaths {
  std::filesystem::path train, dev, test;
};

struct TaskSpec {
  std::size_t task_id = 0;
  std::string name;
  std::vector<std::string> label_set;
  TagScheme scheme = TagScheme::TokenLevel;
  SplitPaths paths;

  /// Index of tag in label_set; nullopt if absent.
  std::optional<std::size_t> label_index(std::string_view tag) const;
};

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> lowercased;
  std::vector<std::string> tags;
  std::size_t task_id = 0;

  std::size_t size() const { return tokens.size(); }
};

/// ASCII lower-casing; bytes outside ASCII are kept.
std::string lowercase(std::string_view s);
/// Decodes UTF-8. Invalid bytes decode to themselves.
std::vector<char32_t> utf8_codepoints(std::string_view s);

/// Reads "token<TAB>tag" lines (a single space also separates), blank lines
/// between sentences. Tags are returned as written.
std::vector<TaggedSentence> read_column_file(const std::filesystem::path& path);
std::vector<TaggedSentence> parse_column_stream(std::istream& in);

/// Converts IOB1/IOB2 (or IOBES) chunk tags to IOBES. An I- or E- tag that
/// does not continue an open chunk of the same type starts a new chunk.
/// Tags without a recognised prefix are treated as single-token chunks.
std::vector<std::string> to_iobes(std::span<const std::string> tags);

/// A chunk tag split into prefix (B, I, E, S) and type. O yields nullopt.
struct ChunkTag {
  char prefix;
  std::string type;
};
std::optional<ChunkTag> parse_chunk_tag(std::string_view tag);

/// Maximal chunk [start, end] (inclusive) of a prefixed tag sequence.
struct Chunk {
  std::size_t start;
  std::size_t end;
  std::string type;
};

/// Chunk segmentation shared by to_iobes and span extraction. B and S always
/// open a chunk; I and E continue an open chunk of the same type and otherwise
/// open one; E and S close the chunk they belong to.
std::vector<Chunk> segment_chunks(std::span<const std::string> tags);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();

  /// Lookup of an already lower-cased word; UNK when absent.
  int word_id(std::string_view lowercased) const;
  int char_id(char32_t c) const;
  bool contains_word(std::string_view lowercased) const;

  int add_word(const std::string& lowercased);
  int add_char(char32_t c);

  std::size_t word_count() const { return words_.size(); }
  std::size_t char_count() const { return chars_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<char32_t>& chars() const { return chars_; }

  /// Word id of the prepended token for a task (TE-Enc vocabularies only).
  std::optional<int> task_token_id(std::size_t task) const;
  const std::vector<int>& task_token_ids() const { return task_tokens_; }
  void set_task_tokens(std::vector<int> ids) { task_tokens_ = std::move(ids); }

  static std::string task_token(std::string_view task_name) {
    return "<<" + std::string(task_name) + ">>";
  }

 private:
  std::vector<std::string> words_;
  std::vector<char32_t> chars_;
  std::unordered_map<std::string, int> word_index_;
  std::unordered_map<char32_t, int> char_index_;
  std::vector<int> task_tokens_;
};

/// Word index over lower-cased training tokens; character index over the
/// raw (case-preserved) characters. TE-Enc adds a "<<name>>" word per task
/// and its characters.
Vocabulary build_vocabulary(std::span<const TaggedSentence> train, MtlMethod method,
                            std::span<const TaskSpec> tasks);

struct EmbeddingMatrix {
  Tensor values;  // word_count × dim
};

struct CoverageReport {
  std::size_t covered = 0;
  std::size_t uncovered = 0;
  std::vector<std::string> warnings;
};

struct PretrainedEmbeddings {
  EmbeddingMatrix matrix;
  CoverageReport report;
};

/// Reads "word v1 ... v_dim" lines. Vocabulary rows found in the file are
/// copied, all other rows (except PAD, which is zero) are drawn uniformly in
/// ±√(3/dim). Coverage counts exclude PAD and UNK.
PretrainedEmbeddings load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab,
                                     Rng& rng, std::size_t dim = 50);

struct DatasetStats {
  std::size_t sentence_count = 0;
  std::size_t token_count = 0;
  std::size_t type_count = 0;
  double token_type_ratio = 0.0;
  std::size_t label_count = 0;
  double label_entropy = 0.0;
};

struct StatsOptions {
  double entropy_base = 2.0;
  bool lowercase_types = true;
};

DatasetStats dataset_stats(std::span<const TaggedSentence> split, const TaskSpec& task,
                           const StatsOptions& options = {});

/// Registry lines: "name<TAB>scheme<TAB>train,dev,test". Relative paths
/// resolve against the registry file's directory; '#' starts a comment.
std::vector<TaskSpec> read_task_registry(const std::filesystem::path& path);

struct TaskData {
  TaskSpec spec;
  std::vector<TaggedSentence> train, dev, test;
};

/// Reads all three splits, converts span-prefixed tags to IOBES and fills
/// label_set in first-seen order (train, then dev, then test).
TaskData load_task(TaskSpec spec);
std::vector<TaskData> load_tasks(const std::vector<TaskSpec>& specs);

}  // namespace mtltag
