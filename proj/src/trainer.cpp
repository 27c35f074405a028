#include "mtltag/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mtltag/errors.hpp"

namespace mtltag {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ContractError(std::string("invalid training config: ") + what);
  };
  require(batch_size > 0, "batch_size must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(beta1 > 0.0 && beta1 < 1.0, "beta1 must lie in (0,1)");
  require(beta2 > 0.0 && beta2 < 1.0, "beta2 must lie in (0,1)");
  require(epsilon > 0.0, "epsilon must be positive");
  require(clip_norm > 0.0, "clip_norm must be positive");
  require(lr_patience > 0, "lr_patience must be positive");
  require(stop_patience > 0, "stop_patience must be positive");
  require(max_epochs > 0, "max_epochs must be positive");
  require(char_dropout >= 0.0 && char_dropout < 1.0, "char_dropout must lie in [0,1)");
  require(word_dropout >= 0.0 && word_dropout < 1.0, "word_dropout must lie in [0,1)");
  require(transition_l2 >= 0.0, "transition_l2 must be non-negative");
}

std::vector<BatchPlan> balanced_batches(std::span<const std::size_t> task_sizes,
                                        std::size_t batch_size, Rng& rng) {
  const std::size_t tasks = task_sizes.size();
  if (tasks == 0) throw ContractError("balanced_batches needs at least one task");
  if (batch_size < tasks) {
    throw ContractError("batch size " + std::to_string(batch_size) + " is smaller than the " +
                        std::to_string(tasks) + " tasks");
  }
  std::vector<std::vector<std::size_t>> pools(tasks);
  for (std::size_t t = 0; t < tasks; ++t) {
    if (task_sizes[t] == 0) throw ContractError("task " + std::to_string(t) + " has no examples");
    pools[t].resize(task_sizes[t]);
    std::iota(pools[t].begin(), pools[t].end(), std::size_t{0});
    std::shuffle(pools[t].begin(), pools[t].end(), rng);
  }
  const std::size_t base = batch_size / tasks;
  const std::size_t extra = batch_size % tasks;
  std::vector<std::size_t> cursor(tasks, 0);
  std::vector<BatchPlan> batches;
  for (std::size_t k = 0;; ++k) {
    std::vector<std::size_t> share(tasks, base);
    for (std::size_t j = 0; j < extra; ++j) ++share[(k * extra + j) % tasks];
    bool fits = true;
    std::size_t least = std::numeric_limits<std::size_t>::max();
    for (std::size_t t = 0; t < tasks; ++t) {
      const std::size_t left = pools[t].size() - cursor[t];
      fits = fits && left >= share[t];
      least = std::min(least, left);
    }
    if (!fits) {
      if (least == 0) break;
      share.assign(tasks, least);
    }
    BatchPlan plan;
    for (std::size_t t = 0; t < tasks; ++t) {
      for (std::size_t i = 0; i < share[t]; ++i) plan.push_back({t, pools[t][cursor[t]++]});
    }
    batches.push_back(std::move(plan));
    if (!fits) break;
  }
  return batches;
}

double clip_global_norm(std::span<Tensor* const> gradients, double threshold) {
  if (threshold <= 0.0) throw ContractError("clipping threshold must be positive");
  double sq = 0.0;
  for (const Tensor* g : gradients) {
    for (double v : g->values()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > threshold) {
    const double f = threshold / norm;
    for (Tensor* g : gradients) {
      for (double& v : g->values()) v *= f;
    }
  }
  return norm;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(std::span<Parameter* const> params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const Tensor& g = p->grad_buffer();
    auto [it, fresh] = moments_.try_emplace(p->name);
    Moments& mo = it->second;
    if (fresh) {
      mo.m = Tensor(p->value.shape(), 0.0);
      mo.v = Tensor(p->value.shape(), 0.0);
    } else if (!mo.m.same_shape(p->value)) {
      throw ShapeError("Adam moments of " + p->name + " do not match the parameter shape");
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * g[i];
      mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * g[i] * g[i];
      p->value[i] -= lr_ * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + eps_);
    }
  }
}

void Adam::restore(std::uint64_t steps, double lr, std::map<std::string, Moments> moments) {
  t_ = steps;
  lr_ = lr;
  moments_ = std::move(moments);
}

F1Score evaluate(const Tagger& tagger, std::span<const TaggedSentence> split, TagScheme scheme) {
  std::vector<SpanSet> gold, pred;
  gold.reserve(split.size());
  pred.reserve(split.size());
  for (const auto& s : split) {
    gold.push_back(extract_spans(s.tags, scheme));
    pred.push_back(extract_spans(tagger.predict(s), scheme));
  }
  return micro_f1(gold, pred);
}

namespace {

std::vector<Tensor> snapshot(const ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& p : store.all()) out.push_back(p->value);
  return out;
}

void restore_snapshot(ParameterStore& store, const std::vector<Tensor>& values) {
  std::size_t i = 0;
  for (const auto& p : store.all()) p->value = values[i++];
}

}  // namespace

TrainResult train(Tagger& tagger, std::span<const TaskData> data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  const auto clock_start = std::chrono::steady_clock::now();
  if (data.size() != tagger.tasks().size()) {
    throw ContractError("training data covers " + std::to_string(data.size()) +
                        " tasks but the model has " + std::to_string(tagger.tasks().size()));
  }
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].spec.task_id != tagger.tasks()[i].task_id) {
      throw ContractError("training data order does not match the model's task slots");
    }
    if (data[i].train.empty()) throw ContractError("task " + data[i].spec.name + " has no training data");
    sizes.push_back(data[i].train.size());
  }

  Rng batch_rng(config.seed);
  DropoutSource dropout(config.seed ^ 0x9e3779b97f4a7c15ULL, config.char_dropout,
                        config.word_dropout);
  TrainResult result;
  result.optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon);
  Adam& adam = result.optimizer;
  ParameterStore& store = tagger.parameters();
  const std::vector<Parameter*> params = store.trainable();
  std::vector<Tensor*> grads;
  for (Parameter* p : params) grads.push_back(&p->grad_buffer());

  double best = -std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values = snapshot(store);
  std::size_t since_best = 0, since_lr = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = adam.learning_rate();
    const auto plans = balanced_batches(sizes, config.batch_size, batch_rng);
    for (std::size_t b = 0; b < plans.size(); ++b) {
      std::vector<const TaggedSentence*> batch;
      for (const auto& item : plans[b]) batch.push_back(&data[item.task].train[item.index]);
      double loss_value = 0.0;
      try {
        ad::Graph g;
        const ad::Var loss = tagger.batch_loss(g, batch, &dropout, config.transition_l2);
        loss_value = loss.value().item();
        store.zero_grad();
        g.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                           ": " + e.what());
      }
      if (!std::isfinite(loss_value)) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                           ": non-finite loss");
      }
      clip_global_norm(grads, config.clip_norm);
      adam.step(params);
      log.batch_losses.push_back(loss_value);
    }
    log.mean_loss = log.batch_losses.empty()
                        ? 0.0
                        : std::accumulate(log.batch_losses.begin(), log.batch_losses.end(), 0.0) /
                              static_cast<double>(log.batch_losses.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      log.dev_f1.push_back(evaluate(tagger, data[i].dev, data[i].spec.scheme).f1);
    }
    log.criterion = std::accumulate(log.dev_f1.begin(), log.dev_f1.end(), 0.0) /
                    static_cast<double>(log.dev_f1.size());

    bool stop = false;
    if (log.criterion > best) {
      best = log.criterion;
      result.best_epoch = epoch;
      best_values = snapshot(store);
      since_best = since_lr = 0;
    } else {
      if (log.criterion == best) {
        result.best_epoch = epoch;
        best_values = snapshot(store);
      }
      ++since_best;
      if (++since_lr >= config.lr_patience) {
        adam.set_learning_rate(adam.learning_rate() / 2.0);
        since_lr = 0;
      }
      stop = since_best >= config.stop_patience;
    }
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(result.epochs.back());
    if (stop) break;
  }

  result.best_criterion = best;
  restore_snapshot(store, best_values);
  for (std::size_t i = 0; i < data.size(); ++i) {
    result.test_f1.push_back(evaluate(tagger, data[i].test, data[i].spec.scheme).f1);
  }
  std::ostringstream rng_state;
  rng_state << batch_rng << ' ' << dropout.rng();
  result.rng_state = rng_state.str();
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return result;
}

}  // namespace mtltag
