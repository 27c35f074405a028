#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mtltag/decoder.hpp"
#include "mtltag/errors.hpp"
#include "mtltag/model.hpp"
#include "support/oracles.hpp"

using namespace mtltag;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t({r, c});
  for (double& v : t.values()) v = u(rng);
  return t;
}

Tensor random_transitions(std::size_t labels, std::mt19937_64& rng) {
  Tensor t = random_matrix(labels + 2, labels + 2, rng);
  const CrfLayout layout{labels};
  for (std::size_t i = 0; i < layout.states(); ++i)
    for (std::size_t j = 0; j < layout.states(); ++j)
      if (layout.structural(i, j)) t.at(i, j) = 0.0;
  return t;
}

oracle::Matrix to_matrix(const Tensor& t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

double nll_value(const Tensor& em, const Tensor& tr, const std::vector<int>& gold,
                 const LabelMask& mask = {}) {
  ad::Graph g;
  return crf_nll(g.constant(em), g.constant(tr), gold, mask).value().item();
}

TaskSpec task(std::size_t id, std::string name, std::vector<std::string> labels) {
  TaskSpec t;
  t.task_id = id;
  t.name = std::move(name);
  t.label_set = std::move(labels);
  return t;
}

}  // namespace

TEST(Crf, LogPartitionExamples) {
  const Tensor em = Tensor::matrix(1, 2, {0.3, -1.2});
  EXPECT_NEAR(crf_log_partition(em, Tensor({4, 4})), std::log(std::exp(0.3) + std::exp(-1.2)), 1e-15);
  EXPECT_NEAR(crf_log_partition(Tensor({3, 2}), Tensor({4, 4})), 3 * std::log(2.0), 1e-14);
}

TEST(Crf, NllExamples) {
  EXPECT_NEAR(nll_value(Tensor({2, 2}), Tensor({4, 4}), {0, 1}), 2 * std::log(2.0), 1e-14);
  const Tensor em = Tensor::matrix(3, 3, {100, 0, 0, 0, 100, 0, 0, 0, 100});
  EXPECT_LT(nll_value(em, Tensor({5, 5}), {0, 1, 2}), 1e-6);
}

TEST(Crf, ViterbiExamples) {
  EXPECT_EQ(viterbi(Tensor::matrix(1, 2, {2, 5}), Tensor({4, 4})), (std::vector<int>{1}));
  Tensor tr({4, 4});
  tr.at(0, 1) = -10.0;
  EXPECT_EQ(viterbi(Tensor::matrix(2, 2, {1, 0, 0, 1}), tr), (std::vector<int>{0, 0}));
  EXPECT_EQ(viterbi(Tensor({3, 3}), Tensor({5, 5})), (std::vector<int>{0, 0, 0}));
  EXPECT_THROW(viterbi(Tensor({2, 2}), Tensor({4, 4}), LabelMask{false, false}), ContractError);
}

TEST(Crf, MatchesEnumerationOracle) {
  std::mt19937_64 rng(42);
  for (int n = 0; n < 40; ++n) {
    const std::size_t len = 1 + rng() % 5, labels = 1 + rng() % 4;
    const Tensor em = random_matrix(len, labels, rng, 2.0);
    const Tensor tr = random_transitions(labels, rng);
    LabelMask mask;
    if (n % 2) {
      mask.assign(labels, false);
      for (std::size_t y = 0; y < labels; ++y) mask[y] = rng() % 2;
      mask[rng() % labels] = true;
    }
    const auto m = to_matrix(em), t = to_matrix(tr);
    const double z = oracle::brute_log_partition(m, t, mask);
    EXPECT_NEAR(crf_log_partition(em, tr, mask), z, 1e-9);
    const auto best = oracle::brute_argmax(m, t, mask);
    EXPECT_EQ(viterbi(em, tr, mask), best);
    EXPECT_NEAR(nll_value(em, tr, best, mask), z - oracle::path_score(m, t, best), 1e-9);
    EXPECT_NEAR(crf_path_score(em, tr, best), oracle::path_score(m, t, best), 1e-12);
  }
}

TEST(Crf, ProbabilitiesSumToOne) {
  std::mt19937_64 rng(5);
  const Tensor em = random_matrix(3, 3, rng, 2.0);
  const Tensor tr = random_transitions(3, rng);
  double total = 0.0;
  for (const auto& y : oracle::all_sequences(3, 3)) total += std::exp(-nll_value(em, tr, y));
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Crf, PartitionBoundsEveryPath) {
  std::mt19937_64 rng(6);
  const Tensor em = random_matrix(4, 3, rng);
  const Tensor tr = random_transitions(3, rng);
  const double z = crf_log_partition(em, tr);
  for (const auto& y : oracle::all_sequences(4, 3)) EXPECT_GT(z, crf_path_score(em, tr, y));
  const LabelMask one{false, true, false};
  EXPECT_NEAR(crf_log_partition(em, tr, one), crf_path_score(em, tr, std::vector<int>{1, 1, 1, 1}), 1e-12);
}

TEST(Crf, EmissionShiftInvariance) {
  std::mt19937_64 rng(7);
  for (int n = 0; n < 20; ++n) {
    const std::size_t len = 1 + rng() % 6;
    Tensor em = random_matrix(len, 4, rng, 3.0);
    const Tensor tr = random_transitions(4, rng);
    const double kappa = 2.5;
    Tensor shifted = em;
    for (double& v : shifted.values()) v += kappa;
    EXPECT_NEAR(crf_log_partition(shifted, tr), crf_log_partition(em, tr) + len * kappa, 1e-9);
    EXPECT_EQ(viterbi(shifted, tr), viterbi(em, tr));
  }
}

TEST(Crf, MaskedViterbiStaysInMask) {
  std::mt19937_64 rng(8);
  for (int n = 0; n < 50; ++n) {
    const Tensor em = random_matrix(6, 5, rng, 5.0);
    const Tensor tr = random_transitions(5, rng);
    LabelMask mask(5, false);
    mask[1] = mask[3] = true;
    for (int y : viterbi(em, tr, mask)) EXPECT_TRUE(mask[y]);
  }
}

TEST(Crf, GoldOutsideMaskRejected) {
  EXPECT_THROW(nll_value(Tensor({2, 3}), Tensor({5, 5}), {0, 2}, LabelMask{true, true, false}),
               ContractError);
}

TEST(Crf, NllGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  const Tensor em = random_matrix(4, 3, rng);
  const Tensor tr = random_transitions(3, rng);
  const std::vector<int> gold{2, 0, 0, 1};
  ParameterStore store;
  Parameter& pe = store.add("em", em);
  Parameter& pt = store.add("tr", tr);
  ad::Graph g;
  const auto grads = backward(crf_nll(g.param(pe), g.param(pt), gold), store);
  const auto flat_em = [&](const std::vector<double>& x) {
    return nll_value(Tensor({4, 3}, x), tr, gold);
  };
  const std::vector<double> ev(em.values().begin(), em.values().end());
  for (std::size_t i = 0; i < ev.size(); ++i)
    EXPECT_NEAR(grads.at("em")[i], oracle::numeric_partial(flat_em, ev, i), 1e-8);
  const auto flat_tr = [&](const std::vector<double>& x) {
    return nll_value(em, Tensor({5, 5}, x), gold);
  };
  const std::vector<double> tv(tr.values().begin(), tr.values().end());
  const CrfLayout layout{3};
  for (std::size_t i = 0; i < tv.size(); ++i) {
    if (layout.structural(i / 5, i % 5)) {
      EXPECT_EQ(grads.at("tr")[i], 0.0);
    } else {
      EXPECT_NEAR(grads.at("tr")[i], oracle::numeric_partial(flat_tr, tv, i), 1e-8);
    }
  }
}

TEST(TransitionPenalty, ValuesAndGradient) {
  EXPECT_EQ(transition_l2_value(Tensor({4, 4})), 0.0);
  Tensor single({4, 4});
  single.at(0, 1) = 2.0;
  EXPECT_NEAR(transition_l2_value(single), 0.04, 1e-15);
  Tensor structural({4, 4});
  structural.at(0, 2) = 7.0;  // into START
  structural.at(3, 1) = 7.0;  // out of STOP
  EXPECT_EQ(transition_l2_value(structural), 0.0);

  std::mt19937_64 rng(10);
  const Tensor tr = random_transitions(2, rng);
  ParameterStore store;
  Parameter& p = store.add("tr", tr);
  ad::Graph g;
  const ad::Var pen = transition_l2_penalty(g.param(p));
  EXPECT_NEAR(pen.value().item(), transition_l2_value(tr), 1e-15);
  const auto grads = backward(pen, store);
  const std::vector<double> tv(tr.values().begin(), tr.values().end());
  const auto f = [](const std::vector<double>& x) { return transition_l2_value(Tensor({4, 4}, x)); };
  for (std::size_t i = 0; i < tv.size(); ++i) {
    EXPECT_NEAR(grads.at("tr")[i], 0.02 * tv[i], 1e-15);
    EXPECT_NEAR(grads.at("tr")[i], oracle::numeric_partial(f, tv, i), 1e-9);
  }
}

TEST(JointLabels, BlocksAndMasks) {
  const std::vector<TaskSpec> tasks{task(0, "pos", {"N", "V"}), task(1, "ner", {"O", "S-PER", "B-LOC"})};
  const JointLabelSpace joint(tasks);
  EXPECT_EQ(joint.labels(),
            (std::vector<std::string>{"pos:N", "pos:V", "ner:O", "ner:S-PER", "ner:B-LOC"}));
  EXPECT_EQ(joint.mask(1), (LabelMask{false, false, true, true, true}));
  EXPECT_EQ(joint.to_joint(1, 1), 3);
  EXPECT_EQ(joint.to_local(1, 3), 1u);
  EXPECT_THROW(joint.to_local(0, 3), ContractError);
  for (std::size_t i = 0; i < joint.size(); ++i) EXPECT_NE(joint.mask(0)[i], joint.mask(1)[i]);
}

TEST(Projection, ShapesPerMethod) {
  ParameterStore store;
  Rng rng(11);
  const auto dec = CrfDecoderParams::create(store, "d", 625, 4, rng);
  Parameter& te = store.add("te", init_parameter({3, 25}, InitKind::TaskEmbedding, rng));
  EXPECT_EQ(dec.input(), 625u);
  ad::Graph g;
  EncoderOutput enc{g.constant(Tensor({5, 600}, 0.1)), false, 5};
  EXPECT_EQ(project(g, enc, MtlMethod::TeDec, 2, dec, &te).shape(), (Shape{5, 4}));
  EXPECT_THROW(project(g, enc, MtlMethod::TeDec, std::nullopt, dec, &te), ContractError);

  const auto dec600 = CrfDecoderParams::create(store, "e", 600, 4, rng);
  EncoderOutput prefixed{g.constant(Tensor({6, 600}, 0.1)), true, 6};
  EXPECT_EQ(project(g, prefixed, MtlMethod::TeEnc, 0, dec600, nullptr).shape(), (Shape{5, 4}));
  dec600.projection->value.fill(0.0);
  dec600.bias->value.fill(0.0);
  ad::Graph g2;
  EncoderOutput plain{g2.constant(Tensor({3, 600}, 0.7)), false, 3};
  for (double v : project(g2, plain, MtlMethod::MultiDec, 0, dec600, nullptr).value().values())
    EXPECT_EQ(v, 0.0);
}

TEST(Tagger, ParameterCountsByMethod) {
  ModelDims d;
  d.char_embedding = 3;
  d.char_hidden = 2;
  d.word_embedding = 4;
  d.word_hidden = 5;
  d.task_embedding = 3;
  std::vector<TaskSpec> tasks{task(0, "a", {"X", "Y"}), task(1, "b", {"P", "Q", "R"}),
                              task(2, "c", {"Z"})};
  TaggedSentence s;
  s.tokens = s.lowercased = {"ab", "cd"};
  s.tags = {"X", "Y"};
  const std::vector<TaggedSentence> train{s};

  const auto gru = [](std::size_t in, std::size_t h) { return 3 * (in * h + h * h + h); };
  const auto encoder = [&](const Vocabulary& v) {
    const std::size_t in1 = d.word_embedding + 2 * d.char_hidden;
    return v.char_count() * d.char_embedding + 2 * gru(d.char_embedding, d.char_hidden) +
           v.word_count() * d.word_embedding + 2 * gru(in1, d.word_hidden) +
           2 * gru(2 * d.word_hidden, d.word_hidden);
  };
  const std::size_t c = 2 * d.word_hidden, joint = 6;
  const auto crf = [](std::size_t in, std::size_t y) { return in * y + y + (y + 2) * (y + 2); };

  const Vocabulary v_md = build_vocabulary(train, MtlMethod::MultiDec, tasks);
  const Tagger md(MtlMethod::MultiDec, d, tasks, v_md, 1);
  EXPECT_EQ(md.parameter_count(), encoder(v_md) + crf(c, 2) + crf(c, 3) + crf(c, 1));

  const Vocabulary v_td = build_vocabulary(train, MtlMethod::TeDec, tasks);
  const Tagger td(MtlMethod::TeDec, d, tasks, v_td, 1);
  EXPECT_EQ(td.parameter_count(), encoder(v_td) + crf(c + d.task_embedding, joint) + 3 * d.task_embedding);

  const Vocabulary v_te = build_vocabulary(train, MtlMethod::TeEnc, tasks);
  EXPECT_EQ(v_te.word_count(), v_md.word_count() + 3);
  const Tagger te(MtlMethod::TeEnc, d, tasks, v_te, 1);
  EXPECT_EQ(te.parameter_count(), encoder(v_te) + crf(c, joint));
}

TEST(Tagger, SharedDecoderPredictsWithinTaskLabels) {
  ModelDims d;
  d.char_embedding = 3;
  d.char_hidden = 2;
  d.word_embedding = 4;
  d.word_hidden = 5;
  d.task_embedding = 3;
  std::vector<TaskSpec> tasks{task(0, "a", {"X", "Y"}), task(1, "b", {"P", "Q", "R"})};
  TaggedSentence s;
  s.tokens = s.lowercased = {"ab", "cd", "e"};
  s.tags = {"P", "Q", "R"};
  s.task_id = 1;
  const std::vector<TaggedSentence> train{s};
  for (MtlMethod m : {MtlMethod::TeDec, MtlMethod::TeEnc}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const Tagger t(m, d, tasks, build_vocabulary(train, m, tasks), seed);
      for (const auto& tag : t.predict(s)) EXPECT_TRUE(tasks[1].label_index(tag).has_value()) << tag;
    }
  }
}
