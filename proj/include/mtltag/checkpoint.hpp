#pragma once

// Binary checkpoint of a tagger and, optionally, its optimizer state.
//
// Layout (native byte order):
//   "MTLTAGCK" u32 version
//   u64 n, n bytes of JSON metadata {method, dims, tasks}
//   u64 word count, each word as u64 length + bytes
//   u64 char count, each code point as u32
//   u64 task-token count, each as i64 word id
//   u64 parameter count, each as string name, u32 rank, u64 dims, f64 values
//   u8 has_optimizer; if set: u64 steps, f64 lr, f64 β1, f64 β2, f64 ε,
//     u64 moment count, each as string name, u64 size, f64 m values, f64 v values
//   string rng state

#include <filesystem>
#include <optional>
#include <string>

#include "mtltag/model.hpp"
#include "mtltag/trainer.hpp"

namespace mtltag {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Tagger tagger;
  std::optional<Adam> optimizer;
  std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const Tagger& tagger,
                     const Adam* optimizer = nullptr, const std::string& rng_state = {});

/// Throws FormatError on a bad magic string, version or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mtltag
