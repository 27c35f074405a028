#pragma once

// Character- and word-level bidirectional GRU encoders.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtltag/autodiff.hpp"
#include "mtltag/corpus.hpp"
#include "mtltag/init.hpp"
#include "mtltag/method.hpp"

namespace mtltag {

struct ModelDims {
  std::size_t char_embedding = 25;
  std::size_t char_hidden = 25;
  std::size_t word_embedding = 50;
  std::size_t word_hidden = 300;
  std::size_t word_layers = 2;
  std::size_t task_embedding = 25;

  std::size_t word_input() const { return word_embedding + 2 * char_hidden; }
  std::size_t output() const { return 2 * word_hidden; }
};

/// Samples inverted-dropout masks: each entry is 0 with probability `rate`
/// and 1/(1−rate) otherwise.
class DropoutSource {
 public:
  DropoutSource(std::uint64_t seed, double char_rate, double word_rate);

  Tensor mask(const Shape& shape, double rate);
  double char_rate() const { return char_rate_; }
  double word_rate() const { return word_rate_; }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
  double char_rate_;
  double word_rate_;
};

/// One GRU direction. Input weights are stored input×hidden so that a row of
/// inputs multiplies on the left.
struct GruParams {
  Parameter* w_z = nullptr;
  Parameter* w_r = nullptr;
  Parameter* w_h = nullptr;
  Parameter* u_z = nullptr;
  Parameter* u_r = nullptr;
  Parameter* u_h = nullptr;
  Parameter* b_z = nullptr;
  Parameter* b_r = nullptr;
  Parameter* b_h = nullptr;
  std::size_t input = 0;
  std::size_t hidden = 0;

  static GruParams create(ParameterStore& store, const std::string& prefix, std::size_t input,
                          std::size_t hidden, Rng& rng);
  std::vector<Parameter*> all() const;
};

/// z = σ(x·Wz + h·Uz + bz), r = σ(x·Wr + h·Ur + br),
/// h̃ = tanh(x·Wh + (r⊙h)·Uh + bh), h′ = (1−z)⊙h + z⊙h̃.
ad::Var gru_cell(ad::Graph& g, ad::Var x, ad::Var h, const GruParams& p);

/// x·W + b for every row of a sequence, one matrix per gate.
struct GateProjections {
  ad::Var z, r, h;
};
GateProjections project_gates(ad::Graph& g, ad::Var inputs, const GruParams& p);

/// Runs one direction over rows [begin, end) of precomputed projections
/// from a zero initial state. States are returned in position order.
std::vector<ad::Var> run_gru(ad::Graph& g, const GateProjections& x, std::size_t begin,
                             std::size_t end, const GruParams& p, bool reverse);

/// Word ids and per-word character ids of one (possibly task-prefixed) input.
struct EncoderInput {
  std::vector<int> word_ids;
  std::vector<std::vector<int>> char_ids;
};

struct EncoderOutput {
  ad::Var states;  // rows × 2·word_hidden
  bool task_token_prepended = false;
  std::size_t length = 0;
};

class Encoder {
 public:
  /// Registers all encoder parameters under "encoder.". When given, the
  /// pretrained matrix initialises the word embedding.
  Encoder(ParameterStore& store, const ModelDims& dims, std::size_t word_rows,
          std::size_t char_rows, Rng& rng, const Tensor* pretrained_words = nullptr);

  /// Final forward state ++ final backward state of the character biGRU.
  ad::Var encode_word_chars(ad::Graph& g, std::span<const int> char_ids,
                            DropoutSource* dropout) const;

  ad::Var encode(ad::Graph& g, const EncoderInput& input, DropoutSource* dropout) const;

  const ModelDims& dims() const { return dims_; }
  Parameter& word_embedding() const { return *word_embedding_; }
  Parameter& char_embedding() const { return *char_embedding_; }
  const GruParams& char_forward() const { return char_fwd_; }
  const GruParams& char_backward() const { return char_bwd_; }
  const GruParams& word_forward(std::size_t layer) const { return word_fwd_.at(layer); }
  const GruParams& word_backward(std::size_t layer) const { return word_bwd_.at(layer); }

 private:
  ad::Var char_features(ad::Graph& g, const std::vector<std::vector<int>>& char_ids,
                        DropoutSource* dropout) const;

  ModelDims dims_;
  Parameter* word_embedding_ = nullptr;
  Parameter* char_embedding_ = nullptr;
  GruParams char_fwd_, char_bwd_;
  std::vector<GruParams> word_fwd_, word_bwd_;
};

/// Maps a sentence to vocabulary ids. TE-Enc prepends the task token, whose
/// characters go through the same pipeline as any word.
EncoderInput make_encoder_input(const TaggedSentence& sentence, const Vocabulary& vocab,
                                MtlMethod method, std::optional<std::size_t> task);

EncoderOutput encode_sentence(ad::Graph& g, const TaggedSentence& sentence, MtlMethod method,
                              std::optional<std::size_t> task, const Vocabulary& vocab,
                              const Encoder& encoder, DropoutSource* dropout);

}  // namespace mtltag
