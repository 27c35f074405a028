#pragma once

// Two-task synthetic tagging fixture over a 50-word vocabulary:
//   vowel  - VOW/CON by the word's first letter
//   parity - EVEN/ODD by the token's 0-based position
// Each task gets its own 500/100/100 sentences of length 5 to 12.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mtltag {

struct SyntheticOptions {
  std::uint64_t seed = 7;
  std::size_t train = 500, dev = 100, test = 100;
  std::size_t min_length = 5, max_length = 12;
};

/// 25 vowel-initial words followed by 25 consonant-initial words.
std::vector<std::string> synthetic_vocabulary(std::uint64_t seed);

/// Writes <task>/{train,dev,test}.txt and registry.tsv under `dir`.
void write_synthetic_fixture(const std::filesystem::path& dir, const SyntheticOptions& options = {});

}  // namespace mtltag
