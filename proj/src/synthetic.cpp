#include "mtltag/synthetic.hpp"

#include <fstream>
#include <random>
#include <set>
#include <string_view>

#include "mtltag/errors.hpp"
#include "mtltag/init.hpp"

namespace mtltag {

namespace {

constexpr std::string_view kVowels = "aeiou";
constexpr std::string_view kConsonants = "bcdfghjklmnprstvwz";

bool vowel_initial(const std::string& w) { return kVowels.find(w.front()) != std::string_view::npos; }

std::string pick(std::string_view letters, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, letters.size() - 1);
  return std::string(1, letters[d(rng)]);
}

}  // namespace

std::vector<std::string> synthetic_vocabulary(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> syllables(1, 3);
  std::set<std::string> seen;
  std::vector<std::string> vowel, consonant;
  while (vowel.size() < 25 || consonant.size() < 25) {
    const bool want_vowel = vowel.size() < 25 && (consonant.size() >= 25 || rng() % 2 == 0);
    std::string w = want_vowel ? pick(kVowels, rng) : pick(kConsonants, rng);
    const std::size_t n = syllables(rng);
    for (std::size_t i = 0; i < n; ++i) w += pick(kConsonants, rng) + pick(kVowels, rng);
    if (!seen.insert(w).second) continue;
    (want_vowel ? vowel : consonant).push_back(w);
  }
  vowel.insert(vowel.end(), consonant.begin(), consonant.end());
  return vowel;
}

void write_synthetic_fixture(const std::filesystem::path& dir, const SyntheticOptions& options) {
  if (options.min_length == 0 || options.min_length > options.max_length) {
    throw ContractError("synthetic sentence lengths must satisfy 0 < min ≤ max");
  }
  const std::vector<std::string> words = synthetic_vocabulary(options.seed);
  Rng rng(options.seed + 1);
  std::uniform_int_distribution<std::size_t> length(options.min_length, options.max_length);
  std::uniform_int_distribution<std::size_t> word(0, words.size() - 1);

  struct Task {
    const char* name;
    bool parity;
  };
  const Task tasks[] = {{"vowel", false}, {"parity", true}};
  for (const Task& task : tasks) {
    std::filesystem::create_directories(dir / task.name);
    const std::pair<const char*, std::size_t> splits[] = {
        {"train", options.train}, {"dev", options.dev}, {"test", options.test}};
    for (const auto& [split, count] : splits) {
      const auto path = dir / task.name / (std::string(split) + ".txt");
      std::ofstream out(path, std::ios::binary);
      if (!out) throw FormatError("cannot write " + path.string());
      for (std::size_t s = 0; s < count; ++s) {
        const std::size_t len = length(rng);
        for (std::size_t i = 0; i < len; ++i) {
          const std::string& w = words[word(rng)];
          const char* tag = task.parity ? (i % 2 == 0 ? "EVEN" : "ODD")
                                        : (vowel_initial(w) ? "VOW" : "CON");
          out << w << '\t' << tag << '\n';
        }
        out << '\n';
      }
    }
  }
  std::ofstream reg(dir / "registry.tsv", std::ios::binary);
  if (!reg) throw FormatError("cannot write " + (dir / "registry.tsv").string());
  for (const Task& task : tasks) {
    const std::string n = task.name;
    reg << n << "\ttoken-level\t" << n << "/train.txt," << n << "/dev.txt," << n << "/test.txt\n";
  }
}

}  // namespace mtltag
