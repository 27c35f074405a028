#pragma once

// Linear projection to label scores followed by a linear-chain CRF.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtltag/autodiff.hpp"
#include "mtltag/corpus.hpp"
#include "mtltag/encoder.hpp"
#include "mtltag/init.hpp"
#include "mtltag/method.hpp"

namespace mtltag {

/// Per-label flag: true when the label may be emitted. An empty mask allows
/// every label.
using LabelMask = std::vector<bool>;

/// Transition matrix layout: labels 0..Y−1, then START = Y and STOP = Y+1.
/// Entries into START and out of STOP are structural (−∞); they are stored as
/// zeros and ignored by every function below.
struct CrfLayout {
  std::size_t labels = 0;
  std::size_t start() const { return labels; }
  std::size_t stop() const { return labels + 1; }
  std::size_t states() const { return labels + 2; }
  bool structural(std::size_t from, std::size_t to) const { return to == start() || from == stop(); }
};

/// Checks emissions (L × Y) against transitions ((Y+2) × (Y+2)) and returns
/// the layout. Throws ShapeError on mismatch.
CrfLayout crf_layout(const Tensor& emissions, const Tensor& transitions);

/// Score of one tag sequence, START and STOP transitions included.
double crf_path_score(const Tensor& emissions, const Tensor& transitions,
                      std::span<const int> tags);

/// log Σ_y exp(score(y)) over sequences whose labels all pass the mask.
double crf_log_partition(const Tensor& emissions, const Tensor& transitions,
                         const LabelMask& mask = {});

/// Highest-scoring sequence over unmasked labels. Ties go to the lower
/// label index, earlier positions first.
std::vector<int> viterbi(const Tensor& emissions, const Tensor& transitions,
                         const LabelMask& mask = {});

/// log_partition − gold score as a graph node; gradients flow to both
/// emissions and transitions through the CRF marginals.
ad::Var crf_nll(ad::Var emissions, ad::Var transitions, std::span<const int> gold,
                const LabelMask& mask = {});

/// coefficient · Σ of squared non-structural transition entries.
ad::Var transition_l2_penalty(ad::Var transitions, double coefficient = 0.01);
double transition_l2_value(const Tensor& transitions, double coefficient = 0.01);

/// Task-qualified union of label sets ("task:tag"); task t owns the
/// contiguous block [offset(t), offset(t) + size(t)).
class JointLabelSpace {
 public:
  JointLabelSpace() = default;
  explicit JointLabelSpace(std::span<const TaskSpec> tasks);

  std::size_t size() const { return labels_.size(); }
  std::size_t task_count() const { return offsets_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const LabelMask& mask(std::size_t task) const { return masks_.at(task); }
  std::size_t offset(std::size_t task) const { return offsets_.at(task); }
  std::size_t size(std::size_t task) const { return sizes_.at(task); }

  int to_joint(std::size_t task, std::size_t local) const;
  /// Throws ContractError when the joint label belongs to another task.
  std::size_t to_local(std::size_t task, int joint) const;

 private:
  std::vector<std::string> labels_;
  std::vector<LabelMask> masks_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> sizes_;
};

struct CrfDecoderParams {
  Parameter* projection = nullptr;   // d_in × Y
  Parameter* bias = nullptr;         // Y
  Parameter* transitions = nullptr;  // (Y+2) × (Y+2)

  static CrfDecoderParams create(ParameterStore& store, const std::string& prefix,
                                 std::size_t input, std::size_t labels, Rng& rng);
  std::size_t input() const { return projection->value.rows(); }
  std::size_t labels() const { return projection->value.cols(); }
};

/// Emissions for one sentence. TE-Enc drops the prepended task position;
/// TE-Dec appends the task's embedding row to every encoder row.
ad::Var project(ad::Graph& g, const EncoderOutput& encoded, MtlMethod method,
                std::optional<std::size_t> task, const CrfDecoderParams& params,
                Parameter* task_embedding = nullptr);

}  // namespace mtltag
