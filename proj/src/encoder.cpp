#include "mtltag/encoder.hpp"

#include "mtltag/errors.hpp"

namespace mtltag {

DropoutSource::DropoutSource(std::uint64_t seed, double char_rate, double word_rate)
    : rng_(seed), char_rate_(char_rate), word_rate_(word_rate) {
  if (char_rate < 0.0 || char_rate >= 1.0 || word_rate < 0.0 || word_rate >= 1.0) {
    throw ContractError("dropout rates must lie in [0, 1)");
  }
}

Tensor DropoutSource::mask(const Shape& shape, double rate) {
  Tensor m(shape, 1.0);
  if (rate <= 0.0) return m;
  std::bernoulli_distribution drop(rate);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : m.values()) v = drop(rng_) ? 0.0 : keep_scale;
  return m;
}

GruParams GruParams::create(ParameterStore& store, const std::string& prefix, std::size_t input,
                            std::size_t hidden, Rng& rng) {
  GruParams p;
  p.input = input;
  p.hidden = hidden;
  auto weight = [&](const char* name, std::size_t rows) {
    return &store.add(prefix + "." + name,
                      init_parameter({rows, hidden}, InitKind::WeightMatrix, rng));
  };
  auto bias = [&](const char* name) {
    return &store.add(prefix + "." + name, init_parameter({hidden}, InitKind::Bias, rng));
  };
  p.w_z = weight("Wz", input);
  p.w_r = weight("Wr", input);
  p.w_h = weight("Wh", input);
  p.u_z = weight("Uz", hidden);
  p.u_r = weight("Ur", hidden);
  p.u_h = weight("Uh", hidden);
  p.b_z = bias("bz");
  p.b_r = bias("br");
  p.b_h = bias("bh");
  return p;
}

std::vector<Parameter*> GruParams::all() const {
  return {w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h};
}

namespace {

ad::Var gru_step(ad::Graph& g, ad::Var xz, ad::Var xr, ad::Var xh, ad::Var h, const GruParams& p) {
  using namespace ad;
  Var z = sigmoid(add(xz, matmul(h, g.param(*p.u_z))));
  Var r = sigmoid(add(xr, matmul(h, g.param(*p.u_r))));
  Var candidate = ad::tanh(add(xh, matmul(mul(r, h), g.param(*p.u_h))));
  // (1−z)⊙h + z⊙h̃ written as h + z⊙(h̃ − h)
  return add(h, mul(z, sub(candidate, h)));
}

void check_cell_dims(const Tensor& x, const Tensor& h, const GruParams& p) {
  if (x.rank() != 2 || x.rows() != 1 || x.cols() != p.input) {
    throw ShapeError("gru_cell: input " + shape_string(x.shape()) + " vs expected [1x" +
                     std::to_string(p.input) + "]");
  }
  if (h.rank() != 2 || h.rows() != 1 || h.cols() != p.hidden) {
    throw ShapeError("gru_cell: state " + shape_string(h.shape()) + " vs expected [1x" +
                     std::to_string(p.hidden) + "]");
  }
}

}  // namespace

ad::Var gru_cell(ad::Graph& g, ad::Var x, ad::Var h, const GruParams& p) {
  check_cell_dims(x.value(), h.value(), p);
  const GateProjections gx = project_gates(g, x, p);
  return gru_step(g, gx.z, gx.r, gx.h, h, p);
}

GateProjections project_gates(ad::Graph& g, ad::Var inputs, const GruParams& p) {
  using namespace ad;
  if (inputs.value().cols() != p.input) {
    throw ShapeError("GRU input " + shape_string(inputs.shape()) + " vs expected width " +
                     std::to_string(p.input));
  }
  return {add_bias(matmul(inputs, g.param(*p.w_z)), g.param(*p.b_z)),
          add_bias(matmul(inputs, g.param(*p.w_r)), g.param(*p.b_r)),
          add_bias(matmul(inputs, g.param(*p.w_h)), g.param(*p.b_h))};
}

std::vector<ad::Var> run_gru(ad::Graph& g, const GateProjections& x, std::size_t begin,
                             std::size_t end, const GruParams& p, bool reverse) {
  using namespace ad;
  std::vector<Var> states(end - begin);
  Var h = g.constant(Tensor({1, p.hidden}, 0.0));
  for (std::size_t step = 0; step < end - begin; ++step) {
    const std::size_t row = reverse ? end - 1 - step : begin + step;
    h = gru_step(g, slice(x.z, 0, row, row + 1), slice(x.r, 0, row, row + 1),
                 slice(x.h, 0, row, row + 1), h, p);
    states[row - begin] = h;
  }
  return states;
}

Encoder::Encoder(ParameterStore& store, const ModelDims& dims, std::size_t word_rows,
                 std::size_t char_rows, Rng& rng, const Tensor* pretrained_words)
    : dims_(dims) {
  if (dims.word_layers == 0) throw ContractError("encoder needs at least one word layer");
  char_embedding_ = &store.add("encoder.char.embedding",
                               init_parameter({char_rows, dims.char_embedding},
                                              InitKind::CharEmbedding, rng));
  if (pretrained_words) {
    if (pretrained_words->rows() != word_rows || pretrained_words->cols() != dims.word_embedding) {
      throw ShapeError("pretrained embedding " + shape_string(pretrained_words->shape()) +
                       " does not match vocabulary [" + std::to_string(word_rows) + "x" +
                       std::to_string(dims.word_embedding) + "]");
    }
    word_embedding_ = &store.add("encoder.word.embedding", *pretrained_words);
  } else {
    word_embedding_ = &store.add("encoder.word.embedding",
                                 init_parameter({word_rows, dims.word_embedding},
                                                InitKind::UncoveredWordEmbedding, rng));
  }
  char_fwd_ = GruParams::create(store, "encoder.char.fwd", dims.char_embedding, dims.char_hidden, rng);
  char_bwd_ = GruParams::create(store, "encoder.char.bwd", dims.char_embedding, dims.char_hidden, rng);
  std::size_t input = dims.word_input();
  for (std::size_t l = 0; l < dims.word_layers; ++l) {
    const std::string prefix = "encoder.word.layer" + std::to_string(l + 1);
    word_fwd_.push_back(GruParams::create(store, prefix + ".fwd", input, dims.word_hidden, rng));
    word_bwd_.push_back(GruParams::create(store, prefix + ".bwd", input, dims.word_hidden, rng));
    input = dims.output();
  }
}

ad::Var Encoder::char_features(ad::Graph& g, const std::vector<std::vector<int>>& char_ids,
                               DropoutSource* dropout) const {
  using namespace ad;
  std::vector<int> flat;
  for (const auto& w : char_ids) {
    if (w.empty()) throw ContractError("character encoder: empty word");
    flat.insert(flat.end(), w.begin(), w.end());
  }
  Var chars = embedding(g.param(*char_embedding_), flat);
  if (dropout) chars = ad::dropout(chars, dropout->mask(chars.shape(), dropout->char_rate()));
  const GateProjections fx = project_gates(g, chars, char_fwd_);
  const GateProjections bx = project_gates(g, chars, char_bwd_);

  std::vector<Var> words;
  std::size_t begin = 0;
  for (const auto& w : char_ids) {
    const std::size_t end = begin + w.size();
    const auto fwd = run_gru(g, fx, begin, end, char_fwd_, false);
    const auto bwd = run_gru(g, bx, begin, end, char_bwd_, true);
    const Var parts[] = {fwd.back(), bwd.front()};
    words.push_back(concat(parts, 1));
    begin = end;
  }
  return concat(words, 0);
}

ad::Var Encoder::encode_word_chars(ad::Graph& g, std::span<const int> char_ids,
                                   DropoutSource* dropout) const {
  return char_features(g, {std::vector<int>(char_ids.begin(), char_ids.end())}, dropout);
}

ad::Var Encoder::encode(ad::Graph& g, const EncoderInput& input, DropoutSource* dropout) const {
  using namespace ad;
  if (input.word_ids.empty() || input.word_ids.size() != input.char_ids.size()) {
    throw ContractError("encoder input must hold one character list per word");
  }
  const Var words = embedding(g.param(*word_embedding_), input.word_ids);
  const Var chars = char_features(g, input.char_ids, dropout);
  const Var parts[] = {words, chars};
  Var x = concat(parts, 1);
  const std::size_t length = input.word_ids.size();
  for (std::size_t l = 0; l < word_fwd_.size(); ++l) {
    if (dropout) x = ad::dropout(x, dropout->mask(x.shape(), dropout->word_rate()));
    const GateProjections fx = project_gates(g, x, word_fwd_[l]);
    const GateProjections bx = project_gates(g, x, word_bwd_[l]);
    const auto fwd = run_gru(g, fx, 0, length, word_fwd_[l], false);
    const auto bwd = run_gru(g, bx, 0, length, word_bwd_[l], true);
    const Var both[] = {concat(fwd, 0), concat(bwd, 0)};
    x = concat(both, 1);
  }
  return x;
}

EncoderInput make_encoder_input(const TaggedSentence& sentence, const Vocabulary& vocab,
                                MtlMethod method, std::optional<std::size_t> task) {
  EncoderInput in;
  auto add_word = [&](const std::string& surface, const std::string& lowered) {
    if (surface.empty()) throw ContractError("empty token");
    in.word_ids.push_back(vocab.word_id(lowered));
    std::vector<int> chars;
    for (char32_t c : utf8_codepoints(surface)) chars.push_back(vocab.char_id(c));
    in.char_ids.push_back(std::move(chars));
  };
  if (method == MtlMethod::TeEnc) {
    if (!task) throw ContractError("TE-Enc encoding requires a task id");
    const auto token_id = vocab.task_token_id(*task);
    if (!token_id) {
      throw ContractError("vocabulary has no task token for task " + std::to_string(*task));
    }
    const std::string& token = vocab.words().at(static_cast<std::size_t>(*token_id));
    add_word(token, token);
  }
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    add_word(sentence.tokens[i], sentence.lowercased[i]);
  }
  return in;
}

EncoderOutput encode_sentence(ad::Graph& g, const TaggedSentence& sentence, MtlMethod method,
                              std::optional<std::size_t> task, const Vocabulary& vocab,
                              const Encoder& encoder, DropoutSource* dropout) {
  const EncoderInput in = make_encoder_input(sentence, vocab, method, task);
  EncoderOutput out;
  out.states = encoder.encode(g, in, dropout);
  out.task_token_prepended = method == MtlMethod::TeEnc;
  out.length = in.word_ids.size();
  return out;
}

}  // namespace mtltag
