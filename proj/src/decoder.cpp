#include "mtltag/decoder.hpp"

#include <cmath>
#include <limits>

#include "mtltag/errors.hpp"

namespace mtltag {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

bool allowed(const LabelMask& mask, std::size_t y) { return mask.empty() || mask[y]; }

void check_mask(const LabelMask& mask, std::size_t labels) {
  if (mask.empty()) return;
  if (mask.size() != labels) {
    throw ShapeError("label mask of size " + std::to_string(mask.size()) + " for " +
                     std::to_string(labels) + " labels");
  }
  for (bool m : mask) {
    if (m) return;
  }
  throw ContractError("label mask selects no label");
}

// Forward/backward tables in log space, L × Y each.
struct Lattice {
  std::size_t length = 0;
  std::size_t labels = 0;
  std::vector<double> alpha, beta;
  double log_z = kNegInf;
};

Lattice run_lattice(const Tensor& e, const Tensor& t, const CrfLayout& lay, const LabelMask& mask,
                    bool with_beta) {
  Lattice lat;
  const std::size_t len = e.rows(), ny = lay.labels;
  lat.length = len;
  lat.labels = ny;
  lat.alpha.assign(len * ny, kNegInf);
  for (std::size_t y = 0; y < ny; ++y) {
    if (allowed(mask, y)) lat.alpha[y] = t.at(lay.start(), y) + e.at(0, y);
  }
  for (std::size_t l = 1; l < len; ++l) {
    for (std::size_t y = 0; y < ny; ++y) {
      if (!allowed(mask, y)) continue;
      double acc = kNegInf;
      for (std::size_t i = 0; i < ny; ++i) {
        acc = log_add(acc, lat.alpha[(l - 1) * ny + i] + t.at(i, y));
      }
      lat.alpha[l * ny + y] = acc + e.at(l, y);
    }
  }
  for (std::size_t y = 0; y < ny; ++y) {
    lat.log_z = log_add(lat.log_z, lat.alpha[(len - 1) * ny + y] + t.at(y, lay.stop()));
  }
  if (!with_beta) return lat;

  lat.beta.assign(len * ny, kNegInf);
  for (std::size_t y = 0; y < ny; ++y) {
    if (allowed(mask, y)) lat.beta[(len - 1) * ny + y] = t.at(y, lay.stop());
  }
  for (std::size_t l = len - 1; l-- > 0;) {
    for (std::size_t i = 0; i < ny; ++i) {
      if (!allowed(mask, i)) continue;
      double acc = kNegInf;
      for (std::size_t j = 0; j < ny; ++j) {
        if (!allowed(mask, j)) continue;
        acc = log_add(acc, t.at(i, j) + e.at(l + 1, j) + lat.beta[(l + 1) * ny + j]);
      }
      lat.beta[l * ny + i] = acc;
    }
  }
  return lat;
}

void check_gold(std::span<const int> gold, std::size_t length, std::size_t labels,
                const LabelMask& mask) {
  if (gold.size() != length) {
    throw ShapeError("gold sequence of length " + std::to_string(gold.size()) + " for " +
                     std::to_string(length) + " emission rows");
  }
  for (int y : gold) {
    if (y < 0 || static_cast<std::size_t>(y) >= labels) {
      throw ContractError("gold label " + std::to_string(y) + " outside label range");
    }
    if (!allowed(mask, static_cast<std::size_t>(y))) {
      throw ContractError("gold label " + std::to_string(y) + " outside the task mask");
    }
  }
}

}  // namespace

CrfLayout crf_layout(const Tensor& emissions, const Tensor& transitions) {
  if (emissions.rank() != 2 || emissions.rows() == 0 || emissions.cols() == 0) {
    throw ShapeError("emissions must be a non-empty L×Y matrix, got " +
                     shape_string(emissions.shape()));
  }
  CrfLayout lay{emissions.cols()};
  if (transitions.rank() != 2 || transitions.rows() != lay.states() ||
      transitions.cols() != lay.states()) {
    throw ShapeError("transitions " + shape_string(transitions.shape()) + " for " +
                     std::to_string(lay.labels) + " labels");
  }
  return lay;
}

double crf_path_score(const Tensor& emissions, const Tensor& transitions,
                      std::span<const int> tags) {
  const CrfLayout lay = crf_layout(emissions, transitions);
  check_gold(tags, emissions.rows(), lay.labels, {});
  double s = transitions.at(lay.start(), tags[0]);
  for (std::size_t l = 0; l < tags.size(); ++l) {
    s += emissions.at(l, tags[l]);
    if (l + 1 < tags.size()) s += transitions.at(tags[l], tags[l + 1]);
  }
  return s + transitions.at(tags.back(), lay.stop());
}

double crf_log_partition(const Tensor& emissions, const Tensor& transitions,
                         const LabelMask& mask) {
  const CrfLayout lay = crf_layout(emissions, transitions);
  check_mask(mask, lay.labels);
  return run_lattice(emissions, transitions, lay, mask, false).log_z;
}

std::vector<int> viterbi(const Tensor& emissions, const Tensor& transitions,
                         const LabelMask& mask) {
  const CrfLayout lay = crf_layout(emissions, transitions);
  check_mask(mask, lay.labels);
  const std::size_t len = emissions.rows(), ny = lay.labels;
  std::vector<double> delta(len * ny, kNegInf);
  std::vector<std::size_t> back(len * ny, 0);
  for (std::size_t y = 0; y < ny; ++y) {
    if (allowed(mask, y)) delta[y] = transitions.at(lay.start(), y) + emissions.at(0, y);
  }
  for (std::size_t l = 1; l < len; ++l) {
    for (std::size_t y = 0; y < ny; ++y) {
      if (!allowed(mask, y)) continue;
      double best = kNegInf;
      std::size_t arg = ny;
      for (std::size_t i = 0; i < ny; ++i) {
        if (!allowed(mask, i)) continue;
        const double s = delta[(l - 1) * ny + i] + transitions.at(i, y);
        if (arg == ny || s > best) {
          best = s;
          arg = i;
        }
      }
      delta[l * ny + y] = best + emissions.at(l, y);
      back[l * ny + y] = arg;
    }
  }
  double best = kNegInf;
  std::size_t last = ny;
  for (std::size_t y = 0; y < ny; ++y) {
    if (!allowed(mask, y)) continue;
    const double s = delta[(len - 1) * ny + y] + transitions.at(y, lay.stop());
    if (last == ny || s > best) {
      best = s;
      last = y;
    }
  }
  std::vector<int> path(len);
  path[len - 1] = static_cast<int>(last);
  for (std::size_t l = len - 1; l > 0; --l) {
    path[l - 1] = static_cast<int>(back[l * ny + static_cast<std::size_t>(path[l])]);
  }
  return path;
}

ad::Var crf_nll(ad::Var emissions, ad::Var transitions, std::span<const int> gold,
                const LabelMask& mask) {
  ad::Graph& g = emissions.graph();
  if (&transitions.graph() != &g) throw ContractError("crf_nll operands from different graphs");
  const Tensor& e = emissions.value();
  const Tensor& t = transitions.value();
  const CrfLayout lay = crf_layout(e, t);
  check_mask(mask, lay.labels);
  check_gold(gold, e.rows(), lay.labels, mask);

  Lattice lat = run_lattice(e, t, lay, mask, true);
  const double loss = lat.log_z - crf_path_score(e, t, gold);

  const std::size_t len = lat.length, ny = lay.labels, ns = lay.states();
  // d loss / d emissions and d loss / d transitions: expected counts minus gold counts.
  Tensor ge({len, ny}, 0.0);
  Tensor gt({ns, ns}, 0.0);
  for (std::size_t l = 0; l < len; ++l) {
    for (std::size_t y = 0; y < ny; ++y) {
      const double a = lat.alpha[l * ny + y];
      if (a == kNegInf) continue;
      const double p = std::exp(a + lat.beta[l * ny + y] - lat.log_z);
      ge.at(l, y) += p;
      if (l == 0) gt.at(lay.start(), y) += p;
      if (l + 1 == len) gt.at(y, lay.stop()) += p;
    }
  }
  for (std::size_t l = 0; l + 1 < len; ++l) {
    for (std::size_t i = 0; i < ny; ++i) {
      const double a = lat.alpha[l * ny + i];
      if (a == kNegInf) continue;
      for (std::size_t j = 0; j < ny; ++j) {
        const double b = lat.beta[(l + 1) * ny + j];
        if (b == kNegInf) continue;
        gt.at(i, j) += std::exp(a + t.at(i, j) + e.at(l + 1, j) + b - lat.log_z);
      }
    }
  }
  gt.at(lay.start(), static_cast<std::size_t>(gold[0])) -= 1.0;
  for (std::size_t l = 0; l < len; ++l) {
    const auto y = static_cast<std::size_t>(gold[l]);
    ge.at(l, y) -= 1.0;
    if (l + 1 < len) gt.at(y, static_cast<std::size_t>(gold[l + 1])) -= 1.0;
  }
  gt.at(static_cast<std::size_t>(gold.back()), lay.stop()) -= 1.0;

  const std::size_t pe = emissions.id(), pt = transitions.id();
  return g.record(ad::Op::CrfNll, Tensor::scalar(loss), {pe, pt},
                  [pe, pt, ge = std::move(ge), gt = std::move(gt)](ad::Graph& g, std::size_t self) {
                    const double up = g.grad(self)[0];
                    Tensor& de = g.grad(pe);
                    for (std::size_t i = 0; i < ge.size(); ++i) de[i] += up * ge[i];
                    Tensor& dt = g.grad(pt);
                    for (std::size_t i = 0; i < gt.size(); ++i) dt[i] += up * gt[i];
                  });
}

ad::Var transition_l2_penalty(ad::Var transitions, double coefficient) {
  const Tensor& t = transitions.value();
  if (t.rank() != 2 || t.rows() != t.cols() || t.rows() < 2) {
    throw ShapeError("transitions must be square, got " + shape_string(t.shape()));
  }
  const CrfLayout lay{t.rows() - 2};
  Tensor keep(t.shape(), 1.0);
  for (std::size_t i = 0; i < lay.states(); ++i) {
    for (std::size_t j = 0; j < lay.states(); ++j) {
      if (lay.structural(i, j)) keep.at(i, j) = 0.0;
    }
  }
  ad::Graph& g = transitions.graph();
  const ad::Var finite = ad::mul(transitions, g.constant(std::move(keep)));
  return ad::scale(ad::sum(ad::mul(finite, finite)), coefficient);
}

double transition_l2_value(const Tensor& transitions, double coefficient) {
  const CrfLayout lay{transitions.rows() - 2};
  double s = 0.0;
  for (std::size_t i = 0; i < lay.states(); ++i) {
    for (std::size_t j = 0; j < lay.states(); ++j) {
      if (!lay.structural(i, j)) s += transitions.at(i, j) * transitions.at(i, j);
    }
  }
  return coefficient * s;
}

JointLabelSpace::JointLabelSpace(std::span<const TaskSpec> tasks) {
  for (const auto& task : tasks) {
    if (task.label_set.empty()) throw ContractError("task " + task.name + " has no labels");
    offsets_.push_back(labels_.size());
    sizes_.push_back(task.label_set.size());
    for (const auto& tag : task.label_set) labels_.push_back(task.name + ":" + tag);
  }
  for (std::size_t t = 0; t < offsets_.size(); ++t) {
    LabelMask m(labels_.size(), false);
    for (std::size_t k = 0; k < sizes_[t]; ++k) m[offsets_[t] + k] = true;
    masks_.push_back(std::move(m));
  }
}

int JointLabelSpace::to_joint(std::size_t task, std::size_t local) const {
  if (local >= size(task)) {
    throw ContractError("label " + std::to_string(local) + " outside task " + std::to_string(task));
  }
  return static_cast<int>(offset(task) + local);
}

std::size_t JointLabelSpace::to_local(std::size_t task, int joint) const {
  const auto j = static_cast<std::size_t>(joint);
  if (joint < 0 || j < offset(task) || j >= offset(task) + size(task)) {
    throw ContractError("joint label " + std::to_string(joint) + " does not belong to task " +
                        std::to_string(task));
  }
  return j - offset(task);
}

CrfDecoderParams CrfDecoderParams::create(ParameterStore& store, const std::string& prefix,
                                          std::size_t input, std::size_t labels, Rng& rng) {
  CrfDecoderParams p;
  p.projection =
      &store.add(prefix + ".W", init_parameter({input, labels}, InitKind::WeightMatrix, rng));
  p.bias = &store.add(prefix + ".b", init_parameter({labels}, InitKind::Bias, rng));
  Tensor trans = init_parameter({labels + 2, labels + 2}, InitKind::WeightMatrix, rng);
  const CrfLayout lay{labels};
  for (std::size_t i = 0; i < lay.states(); ++i) {
    for (std::size_t j = 0; j < lay.states(); ++j) {
      if (lay.structural(i, j)) trans.at(i, j) = 0.0;
    }
  }
  p.transitions = &store.add(prefix + ".transitions", std::move(trans));
  return p;
}

ad::Var project(ad::Graph& g, const EncoderOutput& encoded, MtlMethod method,
                std::optional<std::size_t> task, const CrfDecoderParams& params,
                Parameter* task_embedding) {
  ad::Var x = encoded.states;
  const std::size_t rows = x.value().rows();
  if (method == MtlMethod::TeEnc) {
    if (!encoded.task_token_prepended || rows < 2) {
      throw ContractError("TE-Enc projection expects a prepended task position");
    }
    x = ad::slice(x, 0, 1, rows);
  }
  if (method == MtlMethod::TeDec) {
    if (!task) throw ContractError("TE-Dec projection requires a task id");
    if (!task_embedding) throw ContractError("TE-Dec projection requires the task-embedding table");
    if (*task >= task_embedding->value.rows()) {
      throw ContractError("task " + std::to_string(*task) + " has no embedding row");
    }
    const std::vector<int> ids(x.value().rows(), static_cast<int>(*task));
    const ad::Var parts[] = {x, ad::embedding(g.param(*task_embedding), ids)};
    x = ad::concat(parts, 1);
  }
  if (x.value().cols() != params.input()) {
    throw ShapeError("decoder input width " + std::to_string(x.value().cols()) + " vs " +
                     std::to_string(params.input()));
  }
  return ad::add_bias(ad::matmul(x, g.param(*params.projection)), g.param(*params.bias));
}

}  // namespace mtltag
