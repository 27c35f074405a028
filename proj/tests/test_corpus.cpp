#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mtltag/corpus.hpp"
#include "mtltag/errors.hpp"
#include "mtltag/metrics.hpp"

using namespace mtltag;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
  const fs::path dir = fs::temp_directory_path() / "mtltag_corpus_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << contents;
  return p;
}

std::vector<std::string> v(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

TaggedSentence sentence(std::vector<std::string> tokens, std::vector<std::string> tags) {
  TaggedSentence s;
  for (const auto& t : tokens) s.lowercased.push_back(lowercase(t));
  s.tokens = std::move(tokens);
  s.tags = std::move(tags);
  return s;
}

// Spans of a valid IOB2 sequence: B opens, I continues, O closes.
SpanSet iob2_spans(const std::vector<std::string>& tags) {
  SpanSet out;
  std::size_t start = 0;
  std::string type;
  bool open = false;
  for (std::size_t i = 0; i <= tags.size(); ++i) {
    const bool continues = i < tags.size() && tags[i][0] == 'I';
    if (open && !continues) {
      out.insert({start, i - 1, type});
      open = false;
    }
    if (i < tags.size() && tags[i][0] == 'B') {
      start = i;
      type = tags[i].substr(2);
      open = true;
    }
  }
  return out;
}

}  // namespace

TEST(ColumnFile, ReadsSentences) {
  std::istringstream in("please\tO\ncontinue\tB-TARGET\n\na b c\n");
  EXPECT_THROW(parse_column_stream(in), ParseError);

  std::istringstream ok("please\tO\ncontinue\tB-TARGET\n\nOur O\n");
  const auto s = parse_column_stream(ok);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].tags, v({"O", "B-TARGET"}));
  EXPECT_EQ(s[1].tokens, v({"Our"}));
  EXPECT_EQ(s[1].lowercased, v({"our"}));
}

TEST(ColumnFile, EmptyFileIsEmpty) {
  EXPECT_TRUE(read_column_file(temp_file("empty.txt", "")).empty());
}

TEST(ColumnFile, BadLineReportsLineNumber) {
  const auto p = temp_file("bad.txt", "x\tO\n\na b c\n");
  try {
    read_column_file(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Iobes, Conversions) {
  EXPECT_EQ(to_iobes(v({"B-NP", "I-NP"})), v({"B-NP", "E-NP"}));
  EXPECT_EQ(to_iobes(v({"O", "B-LOC", "O"})), v({"O", "S-LOC", "O"}));
  EXPECT_EQ(to_iobes(v({"B-PER", "I-PER", "I-PER", "O"})), v({"B-PER", "I-PER", "E-PER", "O"}));
  EXPECT_EQ(to_iobes(v({"I-NP", "I-NP", "I-VP"})), v({"B-NP", "E-NP", "S-VP"}));
  EXPECT_EQ(to_iobes(v({"B-NP", "B-NP"})), v({"S-NP", "S-NP"}));
}

TEST(Iobes, IdempotentAndSchemeInvariant) {
  std::mt19937_64 rng(17);
  const char* types[] = {"NP", "VP", "PP"};
  for (int n = 0; n < 500; ++n) {
    const std::size_t len = 1 + rng() % 8;
    std::vector<std::string> tags;
    for (std::size_t i = 0; i < len; ++i) {
      const int kind = static_cast<int>(rng() % 3);
      const std::string type = types[rng() % 3];
      const bool can_continue = !tags.empty() && tags.back() != "O";
      if (kind == 0) tags.push_back("O");
      else if (kind == 1 || !can_continue) tags.push_back("B-" + type);
      else tags.push_back("I-" + tags.back().substr(2));
    }
    const auto iobes = to_iobes(tags);
    EXPECT_EQ(to_iobes(iobes), iobes);
    EXPECT_EQ(extract_spans(iobes, TagScheme::SpanPrefixed), iob2_spans(tags));
  }
}

TEST(Vocabulary, LowercasedWordsCaseSensitiveChars) {
  const std::vector<TaggedSentence> train{sentence(v({"The", "the"}), v({"O", "O"}))};
  const Vocabulary vocab = build_vocabulary(train, MtlMethod::MultiDec, {});
  EXPECT_EQ(vocab.word_count(), 3u);
  EXPECT_NE(vocab.word_id("the"), Vocabulary::kUnk);
  EXPECT_EQ(vocab.word_id("cat"), Vocabulary::kUnk);
  EXPECT_NE(vocab.char_id(U'T'), vocab.char_id(U't'));
  EXPECT_NE(vocab.char_id(U'T'), Vocabulary::kUnk);
  EXPECT_EQ(vocab.char_id(U'z'), Vocabulary::kUnk);
  EXPECT_TRUE(vocab.task_token_ids().empty());
}

TEST(Vocabulary, TaskTokensOnlyForTeEnc) {
  const std::vector<TaggedSentence> train{sentence(v({"a"}), v({"O"}))};
  std::vector<TaskSpec> tasks(2);
  tasks[0].name = "upos";
  tasks[1].name = "chunk";
  const Vocabulary te = build_vocabulary(train, MtlMethod::TeEnc, tasks);
  EXPECT_TRUE(te.contains_word("<<upos>>"));
  EXPECT_TRUE(te.contains_word("<<chunk>>"));
  EXPECT_EQ(te.task_token_id(1), te.word_id("<<chunk>>"));
  EXPECT_NE(te.char_id(U'<'), Vocabulary::kUnk);
  const Vocabulary md = build_vocabulary(train, MtlMethod::TeDec, tasks);
  EXPECT_FALSE(md.contains_word("<<upos>>"));
}

TEST(Pretrained, CoverageAndUncoveredRange) {
  const std::vector<TaggedSentence> train{sentence(v({"a", "b", "c", "d", "e"}), v({"O", "O", "O", "O", "O"}))};
  const Vocabulary vocab = build_vocabulary(train, MtlMethod::MultiDec, {});
  std::string file;
  for (const char* w : {"a", "c", "e", "zz"}) {
    file += w;
    for (int i = 0; i < 50; ++i) file += " 0.5";
    file += "\n";
  }
  Rng rng(1);
  const auto r = load_pretrained(temp_file("emb.txt", file), vocab, rng);
  EXPECT_EQ(r.report.covered, 3u);
  EXPECT_EQ(r.report.uncovered, 2u);
  const Tensor& m = r.matrix.values;
  ASSERT_EQ(m.rows(), vocab.word_count());
  EXPECT_EQ(m.at(vocab.word_id("a"), 7), 0.5);
  const double bound = std::sqrt(3.0 / 50.0);
  for (int id : {vocab.word_id("b"), vocab.word_id("d"), Vocabulary::kUnk}) {
    for (std::size_t c = 0; c < 50; ++c) EXPECT_LE(std::abs(m.at(id, c)), bound);
  }
  for (std::size_t c = 0; c < 50; ++c) EXPECT_EQ(m.at(Vocabulary::kPad, c), 0.0);
}

TEST(Pretrained, WrongWidthAndDuplicates) {
  const std::vector<TaggedSentence> train{sentence(v({"a"}), v({"O"}))};
  const Vocabulary vocab = build_vocabulary(train, MtlMethod::MultiDec, {});
  std::string short_line = "a";
  for (int i = 0; i < 49; ++i) short_line += " 1";
  Rng rng(1);
  EXPECT_THROW(load_pretrained(temp_file("short.txt", short_line + "\n"), vocab, rng), FormatError);

  std::string dup;
  for (double x : {1.0, 2.0}) {
    dup += "a";
    for (int i = 0; i < 50; ++i) dup += " " + std::to_string(x);
    dup += "\n";
  }
  const auto r = load_pretrained(temp_file("dup.txt", dup), vocab, rng);
  EXPECT_EQ(r.matrix.values.at(vocab.word_id("a"), 0), 2.0);
  EXPECT_EQ(r.report.warnings.size(), 1u);
}

TEST(Stats, EntropyAndRatio) {
  TaskSpec task;
  task.name = "t";
  std::vector<TaggedSentence> uniform{sentence(v({"a", "b", "c", "d"}), v({"W", "X", "Y", "Z"}))};
  EXPECT_DOUBLE_EQ(dataset_stats(uniform, task).label_entropy, 2.0);
  std::vector<TaggedSentence> single{sentence(v({"a", "A"}), v({"X", "X"}))};
  const DatasetStats st = dataset_stats(single, task);
  EXPECT_EQ(st.label_entropy, 0.0);
  EXPECT_EQ(st.type_count, 1u);
  EXPECT_EQ(st.token_type_ratio, 2.0);
  StatsOptions raw;
  raw.lowercase_types = false;
  EXPECT_EQ(dataset_stats(single, task, raw).type_count, 2u);
  EXPECT_THROW(dataset_stats(std::vector<TaggedSentence>{}, task), ContractError);
}

TEST(Stats, HandCountedSplit) {
  // 10 sentences × 6 tokens over 20 types.
  std::vector<TaggedSentence> split;
  for (int s = 0; s < 10; ++s) {
    std::vector<std::string> tokens, tags;
    for (int i = 0; i < 6; ++i) {
      tokens.push_back("w" + std::to_string((s * 6 + i) % 20));
      tags.push_back(i % 2 ? "A" : "B");
    }
    split.push_back(sentence(tokens, tags));
  }
  TaskSpec task;
  task.label_set = {"A", "B", "C"};
  const DatasetStats st = dataset_stats(split, task);
  EXPECT_EQ(st.sentence_count, 10u);
  EXPECT_EQ(st.token_count, 60u);
  EXPECT_EQ(st.type_count, 20u);
  EXPECT_DOUBLE_EQ(st.token_type_ratio, 3.0);
  EXPECT_EQ(st.label_count, 3u);
  EXPECT_DOUBLE_EQ(st.label_entropy, 1.0);
}

TEST(Registry, ResolvesRelativePathsAndLabels) {
  const fs::path dir = fs::temp_directory_path() / "mtltag_registry_test";
  fs::create_directories(dir / "c");
  std::ofstream(dir / "c" / "train.txt") << "He\tB-NP\nran\tB-VP\n\n";
  std::ofstream(dir / "c" / "dev.txt") << "She\tB-NP\nwalked\tI-NP\n\n";
  std::ofstream(dir / "c" / "test.txt") << "it\tB-PP\n\n";
  std::ofstream(dir / "reg.tsv") << "# comment\nchunk\tspan-prefixed\tc/train.txt,c/dev.txt,c/test.txt\n";
  const auto specs = read_task_registry(dir / "reg.tsv");
  ASSERT_EQ(specs.size(), 1u);
  EXPECT_EQ(specs[0].task_id, 0u);
  EXPECT_EQ(specs[0].scheme, TagScheme::SpanPrefixed);
  const TaskData data = load_task(specs[0]);
  EXPECT_EQ(data.dev[0].tags, v({"B-NP", "E-NP"}));
  EXPECT_EQ(data.spec.label_set, v({"S-NP", "S-VP", "B-NP", "E-NP", "S-PP"}));
}
