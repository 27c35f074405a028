#include "mtltag/model.hpp"

#include "mtltag/errors.hpp"

namespace mtltag {

Tagger::Tagger(MtlMethod method, const ModelDims& dims, std::vector<TaskSpec> tasks,
               Vocabulary vocab, std::uint64_t seed, const Tensor* pretrained_words)
    : method_(method),
      dims_(dims),
      tasks_(std::move(tasks)),
      vocab_(std::move(vocab)),
      store_(std::make_unique<ParameterStore>()) {
  if (tasks_.empty()) throw ContractError("a tagger needs at least one task");
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (tasks_[i].task_id == tasks_[j].task_id) {
        throw ContractError("duplicate task id " + std::to_string(tasks_[i].task_id));
      }
    }
  }
  if (method_ == MtlMethod::TeEnc && vocab_.task_token_ids().size() != tasks_.size()) {
    throw ContractError("TE-Enc vocabulary must hold one task token per task");
  }
  Rng rng(seed);
  encoder_ = std::make_unique<Encoder>(*store_, dims_, vocab_.word_count(), vocab_.char_count(),
                                       rng, pretrained_words);
  if (method_ == MtlMethod::MultiDec) {
    for (const auto& t : tasks_) {
      decoders_.push_back(CrfDecoderParams::create(*store_, "decoder." + t.name, dims_.output(),
                                                   t.label_set.size(), rng));
    }
    return;
  }
  joint_ = JointLabelSpace(tasks_);
  std::size_t input = dims_.output();
  if (method_ == MtlMethod::TeDec) {
    task_embedding_ = &store_->add(
        "task_embedding",
        init_parameter({tasks_.size(), dims_.task_embedding}, InitKind::TaskEmbedding, rng));
    input += dims_.task_embedding;
  }
  decoders_.push_back(CrfDecoderParams::create(*store_, "decoder.shared", input, joint_.size(), rng));
}

const CrfDecoderParams& Tagger::decoder(std::size_t slot) const {
  if (slot >= tasks_.size()) throw ContractError("task slot " + std::to_string(slot) + " out of range");
  return shared_decoder() ? decoders_.front() : decoders_[slot];
}

std::size_t Tagger::slot_of(std::size_t task_id) const {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (tasks_[i].task_id == task_id) return i;
  }
  throw ContractError("task id " + std::to_string(task_id) + " is not part of this model");
}

std::vector<int> Tagger::gold_labels(const TaggedSentence& sentence) const {
  const std::size_t slot = slot_of(sentence.task_id);
  const TaskSpec& task = tasks_[slot];
  std::vector<int> out;
  out.reserve(sentence.size());
  for (const auto& tag : sentence.tags) {
    const auto local = task.label_index(tag);
    if (!local) throw ContractError("tag '" + tag + "' is not a label of task " + task.name);
    out.push_back(shared_decoder() ? joint_.to_joint(slot, *local) : static_cast<int>(*local));
  }
  return out;
}

ad::Var Tagger::emissions(ad::Graph& g, const TaggedSentence& sentence,
                          DropoutSource* dropout) const {
  const std::size_t slot = slot_of(sentence.task_id);
  const EncoderOutput enc = encode_sentence(g, sentence, method_, slot, vocab_, *encoder_, dropout);
  return project(g, enc, method_, slot, decoder(slot), task_embedding_);
}

ad::Var Tagger::sentence_nll(ad::Graph& g, const TaggedSentence& sentence,
                             DropoutSource* dropout) const {
  const std::size_t slot = slot_of(sentence.task_id);
  const std::vector<int> gold = gold_labels(sentence);
  const ad::Var e = emissions(g, sentence, dropout);
  const LabelMask none;
  return crf_nll(e, g.param(*decoder(slot).transitions), gold,
                 shared_decoder() ? joint_.mask(slot) : none);
}

ad::Var Tagger::transition_penalty(ad::Graph& g, double coefficient) const {
  ad::Var total = transition_l2_penalty(g.param(*decoders_.front().transitions), coefficient);
  for (std::size_t i = 1; i < decoders_.size(); ++i) {
    total = ad::add(total, transition_l2_penalty(g.param(*decoders_[i].transitions), coefficient));
  }
  return total;
}

ad::Var Tagger::batch_loss(ad::Graph& g, std::span<const TaggedSentence* const> batch,
                           DropoutSource* dropout, double transition_l2) const {
  if (batch.empty()) throw ContractError("empty batch");
  ad::Var total = sentence_nll(g, *batch.front(), dropout);
  for (std::size_t i = 1; i < batch.size(); ++i) {
    total = ad::add(total, sentence_nll(g, *batch[i], dropout));
  }
  return ad::add(ad::scale(total, 1.0 / static_cast<double>(batch.size())),
                 transition_penalty(g, transition_l2));
}

std::vector<std::string> Tagger::predict(const TaggedSentence& sentence) const {
  const std::size_t slot = slot_of(sentence.task_id);
  ad::Graph g;
  const ad::Var e = emissions(g, sentence, nullptr);
  const LabelMask none;
  const std::vector<int> path = viterbi(e.value(), decoder(slot).transitions->value,
                                        shared_decoder() ? joint_.mask(slot) : none);
  const TaskSpec& task = tasks_[slot];
  std::vector<std::string> tags;
  tags.reserve(path.size());
  for (int y : path) {
    const std::size_t local = shared_decoder() ? joint_.to_local(slot, y) : static_cast<std::size_t>(y);
    tags.push_back(task.label_set.at(local));
  }
  return tags;
}

}  // namespace mtltag
