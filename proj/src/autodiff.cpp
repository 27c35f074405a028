#include "mtltag/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtltag/errors.hpp"

namespace mtltag {

Tensor& Parameter::grad_buffer() {
  if (!grad.same_shape(value)) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Parameter& ParameterStore::add(std::string name, Tensor init, bool trainable) {
  if (by_name_.count(name)) throw ContractError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(init);
  p->trainable = trainable;
  Parameter* raw = p.get();
  by_name_.emplace(raw->name, raw);
  params_.push_back(std::move(p));
  return *raw;
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : it->second;
}

Parameter& ParameterStore::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ContractError("unknown parameter: " + std::string(name));
}

const Parameter& ParameterStore::get(std::string_view name) const {
  if (auto* p = find(name)) return *p;
  throw ContractError("unknown parameter: " + std::string(name));
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

std::size_t ParameterStore::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad_buffer().fill(0.0);
}

namespace ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "elementwise-mul";
    case Op::Scale: return "scale";
    case Op::AddBias: return "add-bias";
    case Op::Concat: return "concat";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::LogSumExp: return "logsumexp";
    case Op::Max: return "max";
    case Op::Embedding: return "embedding-lookup";
    case Op::Dropout: return "dropout-mask-apply";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Slice: return "slice";
    case Op::CrfNll: return "crf-nll";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value in constant");
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.op = Op::Parameter;
  n.param = &p;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

Tensor& Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.param) return n.param->grad_buffer();
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

bool Graph::has_grad(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? !n.param->grad.empty() : !n.grad.empty();
}

Var Graph::record(Op op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by " + std::string(op_name(op)));
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var root) {
  if (&root.graph() != this) throw ContractError("backward root belongs to another graph");
  if (value(root.id()).size() != 1) {
    throw ContractError("backward requires a scalar root, got shape " +
                        shape_string(value(root.id()).shape()));
  }
  grad(root.id())[0] += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.param || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

namespace {

Graph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
  return a.graph();
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank2(const Tensor& a, std::string_view op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

template <typename F, typename D>
Var unary(Var a, Op op, F f, D dfdx_from_out) {
  Graph& g = a.graph();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t pa = a.id();
  return g.record(op, std::move(y), {pa}, [pa, dfdx_from_out](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& yv = g.value(self);
    const Tensor& xv = g.value(pa);
    Tensor& gx = g.grad(pa);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * dfdx_from_out(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw ShapeError("matmul: shape mismatch " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  Tensor c({m, n}, 0.0);
  gemm_accumulate(av.data(), bv.data(), c.data(), m, k, n);
  const std::size_t pa = a.id(), pb = b.id();
  return g.record(Op::MatMul, std::move(c), {pa, pb}, [pa, pb, m, k, n](Graph& g, std::size_t self) {
    const Tensor& gc = g.grad(self);
    gemm_nt_accumulate(gc.data(), g.value(pb).data(), g.grad(pa).data(), m, n, k);
    gemm_tn_accumulate(g.value(pa).data(), gc.data(), g.grad(pb).data(), k, m, n);
  });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor c = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += bv[i];
  const std::size_t pa = a.id(), pb = b.id();
  return g.record(Op::Add, std::move(c), {pa, pb}, [pa, pb](Graph& g, std::size_t self) {
    const Tensor& gc = g.grad(self);
    Tensor& ga = g.grad(pa);
    for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i];
    Tensor& gb = g.grad(pb);
    for (std::size_t i = 0; i < gc.size(); ++i) gb[i] += gc[i];
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor c = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= bv[i];
  const std::size_t pa = a.id(), pb = b.id();
  return g.record(Op::Sub, std::move(c), {pa, pb}, [pa, pb](Graph& g, std::size_t self) {
    const Tensor& gc = g.grad(self);
    Tensor& ga = g.grad(pa);
    for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i];
    Tensor& gb = g.grad(pb);
    for (std::size_t i = 0; i < gc.size(); ++i) gb[i] -= gc[i];
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a.value(), b.value(), "elementwise-mul");
  Tensor c = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= bv[i];
  const std::size_t pa = a.id(), pb = b.id();
  return g.record(Op::Mul, std::move(c), {pa, pb}, [pa, pb](Graph& g, std::size_t self) {
    const Tensor& gc = g.grad(self);
    {
      const Tensor& bv = g.value(pb);
      Tensor& ga = g.grad(pa);
      for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * bv[i];
    }
    const Tensor& av = g.value(pa);
    Tensor& gb = g.grad(pb);
    for (std::size_t i = 0; i < gc.size(); ++i) gb[i] += gc[i] * av[i];
  });
}

Var scale(Var a, double factor) {
  Graph& g = a.graph();
  Tensor c = a.value();
  for (double& v : c.values()) v *= factor;
  const std::size_t pa = a.id();
  return g.record(Op::Scale, std::move(c), {pa}, [pa, factor](Graph& g, std::size_t self) {
    const Tensor& gc = g.grad(self);
    Tensor& ga = g.grad(pa);
    for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * factor;
  });
}

Var add_bias(Var m, Var bias) {
  Graph& g = same_graph(m, bias);
  const Tensor& mv = m.value();
  const Tensor& bv = bias.value();
  require_rank2(mv, "add-bias");
  if (bv.size() != mv.cols()) {
    throw ShapeError("add-bias: shape mismatch " + shape_string(mv.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  Tensor c = mv;
  const std::size_t rows = c.rows(), cols = c.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) c.at(r, j) += bv[j];
  const std::size_t pm = m.id(), pb = bias.id();
  return g.record(Op::AddBias, std::move(c), {pm, pb}, [pm, pb, rows, cols](Graph& g, std::size_t self) {
    const Tensor& gc = g.grad(self);
    Tensor& gm = g.grad(pm);
    for (std::size_t i = 0; i < gc.size(); ++i) gm[i] += gc[i];
    Tensor& gb = g.grad(pb);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < cols; ++j) gb[j] += gc[r * cols + j];
  });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ContractError("concat of zero operands");
  if (axis != 0 && axis != 1) throw ContractError("concat axis must be 0 or 1");
  Graph& g = parts.front().graph();
  std::vector<std::size_t> ids;
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    same_graph(parts.front(), p);
    const Tensor& v = p.value();
    require_rank2(v, "concat");
    if (axis == 0) {
      if (ids.empty()) cols = v.cols();
      if (v.cols() != cols) {
        throw ShapeError("concat: shape mismatch " + shape_string(parts.front().shape()) + " vs " +
                         shape_string(v.shape()));
      }
      rows += v.rows();
    } else {
      if (ids.empty()) rows = v.rows();
      if (v.rows() != rows) {
        throw ShapeError("concat: shape mismatch " + shape_string(parts.front().shape()) + " vs " +
                         shape_string(v.shape()));
      }
      cols += v.cols();
    }
    ids.push_back(p.id());
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (std::size_t id : ids) {
    const Tensor& v = g.value(id);
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) out.at(offset + r, c) = v.at(r, c);
        else out.at(r, offset + c) = v.at(r, c);
      }
    offset += axis == 0 ? v.rows() : v.cols();
  }
  auto parents = ids;
  return g.record(Op::Concat, std::move(out), std::move(parents), [ids, axis](Graph& g, std::size_t self) {
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const Tensor& gc = g.grad(self);
      Tensor& gp = g.grad(id);
      const std::size_t pr = gp.rows(), pc = gp.cols();
      for (std::size_t r = 0; r < pr; ++r)
        for (std::size_t c = 0; c < pc; ++c)
          gp[r * pc + c] += axis == 0 ? gc.at(offset + r, c) : gc.at(r, offset + c);
      offset += axis == 0 ? pr : pc;
    }
  });
}

Var sigmoid(Var a) {
  return unary(
      a, Op::Sigmoid,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, Op::Tanh, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(
      a, Op::Exp, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, Op::Log, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

namespace {

// Reduction helper: visits each lane (row for axis 1, column for axis 0).
struct Lanes {
  std::size_t count, length, lane_stride, elem_stride;
};

Lanes lanes_for(const Tensor& t, int axis) {
  const std::size_t rows = t.rows(), cols = t.cols();
  if (axis == 1) return {rows, cols, cols, 1};
  if (axis == 0) return {cols, rows, 1, cols};
  throw ContractError("reduction axis must be 0 or 1");
}

Shape reduced_shape(const Tensor& t, int axis) {
  return axis == 1 ? Shape{t.rows(), 1} : Shape{1, t.cols()};
}

}  // namespace

Var logsumexp(Var a, int axis) {
  Graph& g = a.graph();
  const Tensor& x = a.value();
  const Lanes ln = lanes_for(x, axis);
  Tensor y(reduced_shape(x, axis));
  for (std::size_t l = 0; l < ln.count; ++l) {
    const double* base = x.data() + l * ln.lane_stride;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ln.length; ++i) m = std::max(m, base[i * ln.elem_stride]);
    double s = 0.0;
    for (std::size_t i = 0; i < ln.length; ++i) s += std::exp(base[i * ln.elem_stride] - m);
    y[l] = m + std::log(s);
  }
  const std::size_t pa = a.id();
  return g.record(Op::LogSumExp, std::move(y), {pa}, [pa, ln](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& yv = g.value(self);
    const Tensor& xv = g.value(pa);
    Tensor& gx = g.grad(pa);
    for (std::size_t l = 0; l < ln.count; ++l)
      for (std::size_t i = 0; i < ln.length; ++i) {
        const std::size_t idx = l * ln.lane_stride + i * ln.elem_stride;
        gx[idx] += gy[l] * std::exp(xv[idx] - yv[l]);
      }
  });
}

Var max(Var a, int axis) {
  Graph& g = a.graph();
  const Tensor& x = a.value();
  const Lanes ln = lanes_for(x, axis);
  Tensor y(reduced_shape(x, axis));
  std::vector<std::size_t> argmax(ln.count);
  for (std::size_t l = 0; l < ln.count; ++l) {
    std::size_t best = l * ln.lane_stride;
    for (std::size_t i = 1; i < ln.length; ++i) {
      const std::size_t idx = l * ln.lane_stride + i * ln.elem_stride;
      if (x[idx] > x[best]) best = idx;
    }
    argmax[l] = best;
    y[l] = x[best];
  }
  const std::size_t pa = a.id();
  return g.record(Op::Max, std::move(y), {pa}, [pa, argmax](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad(pa);
    for (std::size_t l = 0; l < argmax.size(); ++l) gx[argmax[l]] += gy[l];
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Graph& g = table.graph();
  const Tensor& t = table.value();
  require_rank2(t, "embedding-lookup");
  if (ids.empty()) throw ContractError("embedding-lookup with no ids");
  const std::size_t dim = t.cols();
  Tensor out({ids.size(), dim});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= t.rows()) {
      throw ShapeError("embedding-lookup: id " + std::to_string(ids[r]) + " outside table " +
                       shape_string(t.shape()));
    }
    std::copy_n(t.data() + ids[r] * dim, dim, out.data() + r * dim);
  }
  const std::size_t pt = table.id();
  std::vector<int> rows(ids.begin(), ids.end());
  return g.record(Op::Embedding, std::move(out), {pt}, [pt, rows, dim](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& gt = g.grad(pt);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double* dst = gt.data() + rows[r] * dim;
      const double* src = go.data() + r * dim;
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
    }
  });
}

Var dropout(Var a, const Tensor& mask) {
  Graph& g = a.graph();
  require_same_shape(a.value(), mask, "dropout-mask-apply");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  const std::size_t pa = a.id();
  return g.record(Op::Dropout, std::move(y), {pa}, [pa, mask](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad(pa);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
  });
}

Var sum(Var a) {
  Graph& g = a.graph();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t pa = a.id();
  return g.record(Op::Sum, Tensor::scalar(s), {pa}, [pa](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    for (double& v : g.grad(pa).values()) v += gy;
  });
}

Var mean(Var a) {
  Graph& g = a.graph();
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t pa = a.id();
  return g.record(Op::Mean, Tensor::scalar(s / n), {pa}, [pa, n](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0] / n;
    for (double& v : g.grad(pa).values()) v += gy;
  });
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  Graph& g = a.graph();
  const Tensor& x = a.value();
  require_rank2(x, "slice");
  if (axis != 0 && axis != 1) throw ContractError("slice axis must be 0 or 1");
  const std::size_t extent = axis == 0 ? x.rows() : x.cols();
  if (begin >= end || end > extent) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t rows = axis == 0 ? end - begin : x.rows();
  const std::size_t cols = axis == 1 ? end - begin : x.cols();
  const std::size_t r0 = axis == 0 ? begin : 0, c0 = axis == 1 ? begin : 0;
  const std::size_t src_cols = x.cols();
  Tensor y({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data() + (r0 + r) * src_cols + c0, cols, y.data() + r * cols);
  const std::size_t pa = a.id();
  return g.record(Op::Slice, std::move(y), {pa},
                  [pa, rows, cols, r0, c0, src_cols](Graph& g, std::size_t self) {
                    const Tensor& gy = g.grad(self);
                    Tensor& gx = g.grad(pa);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c)
                        gx[(r0 + r) * src_cols + c0 + c] += gy[r * cols + c];
                  });
}

}  // namespace ad

std::map<std::string, Tensor> backward(ad::Var loss_root, ParameterStore& store) {
  store.zero_grad();
  loss_root.graph().backward(loss_root);
  std::map<std::string, Tensor> out;
  for (const auto& p : store.all()) {
    if (p->trainable) out.emplace(p->name, p->grad);
  }
  return out;
}

}  // namespace mtltag
