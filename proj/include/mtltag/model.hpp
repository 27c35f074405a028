#pragma once

// A complete tagger: shared encoder, per-task or shared CRF decoders and, for
// TE-Dec, the task-embedding table.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtltag/autodiff.hpp"
#include "mtltag/corpus.hpp"
#include "mtltag/decoder.hpp"
#include "mtltag/encoder.hpp"
#include "mtltag/method.hpp"

namespace mtltag {

class Tagger {
 public:
  /// Task slots follow the order of `tasks`; sentences are routed by
  /// TaskSpec::task_id. Parameters are drawn from an Rng seeded with `seed`.
  Tagger(MtlMethod method, const ModelDims& dims, std::vector<TaskSpec> tasks, Vocabulary vocab,
         std::uint64_t seed, const Tensor* pretrained_words = nullptr);

  Tagger(Tagger&&) = default;
  Tagger& operator=(Tagger&&) = default;

  MtlMethod method() const { return method_; }
  const ModelDims& dims() const { return dims_; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  ParameterStore& parameters() { return *store_; }
  const ParameterStore& parameters() const { return *store_; }
  const Encoder& encoder() const { return *encoder_; }
  bool shared_decoder() const { return method_ != MtlMethod::MultiDec; }
  const JointLabelSpace& joint_labels() const { return joint_; }
  /// Decoder used by a task slot (the same object for every slot when shared).
  const CrfDecoderParams& decoder(std::size_t slot) const;
  std::size_t decoder_count() const { return decoders_.size(); }
  /// T × task_embedding table (TE-Dec only, otherwise nullptr).
  Parameter* task_embedding() const { return task_embedding_; }

  std::size_t slot_of(std::size_t task_id) const;
  std::size_t parameter_count() const { return store_->value_count(); }

  /// Decoder label ids of a sentence's gold tags.
  std::vector<int> gold_labels(const TaggedSentence& sentence) const;

  /// Emission scores in the decoder's label space.
  ad::Var emissions(ad::Graph& g, const TaggedSentence& sentence, DropoutSource* dropout) const;

  /// CRF negative log-likelihood of one sentence.
  ad::Var sentence_nll(ad::Graph& g, const TaggedSentence& sentence, DropoutSource* dropout) const;

  /// Σ of the L2 penalties of every CRF transition matrix.
  ad::Var transition_penalty(ad::Graph& g, double coefficient = 0.01) const;

  /// Mean sentence NLL plus the transition penalty.
  ad::Var batch_loss(ad::Graph& g, std::span<const TaggedSentence* const> batch,
                     DropoutSource* dropout, double transition_l2 = 0.01) const;

  /// Viterbi tags (as strings of the sentence's task) without dropout.
  std::vector<std::string> predict(const TaggedSentence& sentence) const;

 private:
  MtlMethod method_;
  ModelDims dims_;
  std::vector<TaskSpec> tasks_;
  Vocabulary vocab_;
  std::unique_ptr<ParameterStore> store_;
  std::unique_ptr<Encoder> encoder_;
  std::vector<CrfDecoderParams> decoders_;
  JointLabelSpace joint_;
  Parameter* task_embedding_ = nullptr;
};

}  // namespace mtltag
