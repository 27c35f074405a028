#pragma once

// Joint training: balanced multi-task batches, Adam with gradient-norm
// clipping, learning-rate halving and early stopping.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mtltag/corpus.hpp"
#include "mtltag/init.hpp"
#include "mtltag/metrics.hpp"
#include "mtltag/model.hpp"

namespace mtltag {

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
  std::size_t lr_patience = 2;
  std::size_t stop_patience = 10;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 1;
  double char_dropout = 0.25;
  double word_dropout = 0.5;
  double transition_l2 = 0.01;

  /// Throws ContractError when a field is out of range.
  void validate() const;
};

struct BatchItem {
  std::size_t task = 0;   // index into the per-task sizes
  std::size_t index = 0;  // example index within that task
  friend bool operator==(const BatchItem&, const BatchItem&) = default;
};
using BatchPlan = std::vector<BatchItem>;

/// One epoch of batches. Each batch holds ⌊B/T⌋ examples of every task plus
/// one more for B mod T tasks chosen round-robin across batches. Pools are
/// shuffled with `rng` and drawn without replacement; once a pool cannot
/// fill its share, a last batch takes the same count m ≥ 1 (the smallest
/// remainder) from every task and the epoch ends.
std::vector<BatchPlan> balanced_batches(std::span<const std::size_t> task_sizes,
                                        std::size_t batch_size, Rng& rng);

/// Scales all tensors by threshold/‖g‖ when the global norm exceeds the
/// threshold. Returns the norm before clipping.
double clip_global_norm(std::span<Tensor* const> gradients, double threshold);

class Adam {
 public:
  Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  /// One bias-corrected update of every parameter from its grad.
  void step(std::span<Parameter* const> params);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::uint64_t steps() const { return t_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double epsilon() const { return eps_; }

  /// Moment tensors keyed by parameter name.
  struct Moments {
    Tensor m, v;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::uint64_t steps, double lr, std::map<std::string, Moments> moments);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::vector<double> batch_losses;
  std::vector<double> dev_f1;  // per task slot
  double criterion = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;  // 1-based
  double best_criterion = 0.0;
  std::vector<double> test_f1;  // per task slot, best-epoch parameters
  double wall_time_s = 0.0;
  std::string rng_state;
  Adam optimizer{0.001};
};

/// Evaluation hook, called after each epoch.
using EpochCallback = std::function<void(const EpochLog&)>;

/// Span micro-F1 of the tagger's predictions on a split.
F1Score evaluate(const Tagger& tagger, std::span<const TaggedSentence> split, TagScheme scheme);

/// Trains `tagger` on `data` (one entry per task slot, same order as the
/// tagger's tasks) and leaves the best-epoch parameters in place.
TrainResult train(Tagger& tagger, std::span<const TaskData> data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace mtltag
