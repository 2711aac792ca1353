#include "mwgen/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace mwgen::ad {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

[[noreturn]] void shape_fail(const std::string& op, const Matrix& a, const Matrix& b) {
  throw ShapeError(op + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
}

void require_same(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape()) throw Error(op + ": operands live on different tapes");
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a.value(), b.value());
}

Tape& tape_of(const Tensor& t) {
  if (!t.valid()) throw Error("operation on an unbound tensor");
  return *t.tape();
}

// Accumulates `delta` into the gradient of `id` if that node needs one.
template <typename Derived>
void accumulate(Tape& tape, NodeId id, const Eigen::MatrixBase<Derived>& delta) {
  if (tape.needs_grad(id)) tape.grad_ref(id) += delta;
}

Tensor unary(const Tensor& a, Matrix value,
             std::function<void(Tape&, NodeId, NodeId)> rule) {
  Tape& tape = tape_of(a);
  const NodeId pa = a.id();
  return tape.record(std::move(value), {pa},
                     [pa, rule = std::move(rule)](Tape& t, NodeId self) { rule(t, self, pa); });
}

}  // namespace

const Matrix& Tensor::value() const {
  if (!tape_) throw Error("value() on an unbound tensor");
  return tape_->value(id_);
}

Tensor Tape::constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Tensor Tape::variable(Matrix value) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = record_;
  node.leaf = true;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Tensor Tape::parameter(const Matrix& value) {
  Node node;
  node.external = &value;
  node.needs_grad = record_;
  node.leaf = true;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Tensor Tape::record(Matrix value, std::vector<NodeId> parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (NodeId p : parents) {
      if (nodes_[p].needs_grad) {
        node.needs_grad = true;
        break;
      }
    }
    if (node.needs_grad) {
      node.parents = std::move(parents);
      node.backward = std::move(fn);
    }
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

const Matrix& Tape::value(NodeId id) const {
  const Node& node = nodes_.at(id);
  return node.external ? *node.external : node.value;
}

Matrix Tape::grad(NodeId id) const {
  const Node& node = nodes_.at(id);
  if (node.has_grad) return node.grad;
  const Matrix& v = value(id);
  return Matrix::Zero(v.rows(), v.cols());
}

Matrix& Tape::grad_ref(NodeId id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    const Matrix& v = value(id);
    node.grad = Matrix::Zero(v.rows(), v.cols());
    node.has_grad = true;
  }
  return node.grad;
}

GradientMap Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw Error("backward: loss does not belong to this tape");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar (1x1), got " + shape_of(lv));
  }
  if (nodes_.empty()) throw Error("backward: empty tape");
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad.resize(0, 0);
  }
  if (nodes_[loss.id()].needs_grad) {
    grad_ref(loss.id()).setOnes();
    for (NodeId id = loss.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (node.has_grad && node.backward) node.backward(*this, id);
    }
  }
  GradientMap out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].leaf && nodes_[id].needs_grad) out.emplace(id, grad(id));
  }
  return out;
}

std::string to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "elementwise-mul";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLog: return "log";
    case OpKind::kEmbeddingLookup: return "embedding-lookup";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kL2Norm: return "l2-norm";
  }
  return "unknown";
}

Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(to_string(kind) + ": expected " + std::to_string(n) + " inputs, got " +
                       std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::kMatmul: arity(2); return matmul(inputs[0], inputs[1]);
    case OpKind::kAdd: arity(2); return add(inputs[0], inputs[1]);
    case OpKind::kSub: arity(2); return sub(inputs[0], inputs[1]);
    case OpKind::kMul: arity(2); return mul(inputs[0], inputs[1]);
    case OpKind::kConcat: return concat_rows(inputs);
    case OpKind::kSlice: arity(1); return slice_rows(inputs[0], attrs.begin, attrs.count);
    case OpKind::kSigmoid: arity(1); return sigmoid(inputs[0]);
    case OpKind::kTanh: arity(1); return tanh(inputs[0]);
    case OpKind::kSoftmax: arity(1); return softmax(inputs[0]);
    case OpKind::kLog: arity(1); return log(inputs[0]);
    case OpKind::kEmbeddingLookup: arity(1); return embedding_lookup(inputs[0], attrs.ids);
    case OpKind::kSum: arity(1); return sum(inputs[0]);
    case OpKind::kMean: arity(1); return mean(inputs[0]);
    case OpKind::kL2Norm: arity(1); return l2_norm(inputs[0]);
  }
  throw Error("apply: unknown op kind");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape()) throw Error("matmul: operands live on different tapes");
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  Tape& tape = tape_of(a);
  const NodeId pa = a.id(), pb = b.id();
  Matrix value = a.value() * b.value();
  return tape.record(std::move(value), {pa, pb}, [pa, pb](Tape& t, NodeId self) {
    const Matrix& g = t.grad_ref(self);
    if (t.needs_grad(pa)) t.grad_ref(pa).noalias() += g * t.value(pb).transpose();
    if (t.needs_grad(pb)) t.grad_ref(pb).noalias() += t.value(pa).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  return unary(a, a.value().transpose(), [](Tape& t, NodeId self, NodeId pa) {
    accumulate(t, pa, t.grad_ref(self).transpose());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Tape& tape = tape_of(a);
  const NodeId pa = a.id(), pb = b.id();
  return tape.record(a.value() + b.value(), {pa, pb}, [pa, pb](Tape& t, NodeId self) {
    const Matrix& g = t.grad_ref(self);
    accumulate(t, pa, g);
    accumulate(t, pb, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  Tape& tape = tape_of(a);
  const NodeId pa = a.id(), pb = b.id();
  return tape.record(a.value() - b.value(), {pa, pb}, [pa, pb](Tape& t, NodeId self) {
    const Matrix& g = t.grad_ref(self);
    accumulate(t, pa, g);
    if (t.needs_grad(pb)) t.grad_ref(pb) -= g;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("elementwise-mul", a, b);
  Tape& tape = tape_of(a);
  const NodeId pa = a.id(), pb = b.id();
  Matrix value = a.value().cwiseProduct(b.value());
  return tape.record(std::move(value), {pa, pb}, [pa, pb](Tape& t, NodeId self) {
    const Matrix& g = t.grad_ref(self);
    accumulate(t, pa, g.cwiseProduct(t.value(pb)));
    accumulate(t, pb, g.cwiseProduct(t.value(pa)));
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, a.value() * factor, [factor](Tape& t, NodeId self, NodeId pa) {
    accumulate(t, pa, t.grad_ref(self) * factor);
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, (a.value().array() + offset).matrix(), [](Tape& t, NodeId self, NodeId pa) {
    accumulate(t, pa, t.grad_ref(self));
  });
}

Tensor one_minus(const Tensor& a) {
  return unary(a, (1.0 - a.value().array()).matrix(), [](Tape& t, NodeId self, NodeId pa) {
    if (t.needs_grad(pa)) t.grad_ref(pa) -= t.grad_ref(self);
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix value = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    const Matrix& y = t.value(self);
    accumulate(t, pa, t.grad_ref(self).cwiseProduct(
                          (y.array() * (1.0 - y.array())).matrix()));
  });
}

Tensor tanh(const Tensor& a) {
  Matrix value = a.value().array().tanh().matrix();
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    const Matrix& y = t.value(self);
    accumulate(t, pa, t.grad_ref(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Tensor log(const Tensor& a) {
  Matrix value = a.value().array().log().matrix();
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    accumulate(t, pa, t.grad_ref(self).cwiseQuotient(t.value(pa)));
  });
}

Tensor exp(const Tensor& a) {
  Matrix value = a.value().array().exp().matrix();
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    accumulate(t, pa, t.grad_ref(self).cwiseProduct(t.value(self)));
  });
}

Tensor square(const Tensor& a) {
  Matrix value = a.value().array().square().matrix();
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    accumulate(t, pa, 2.0 * t.grad_ref(self).cwiseProduct(t.value(pa)));
  });
}

Tensor mul_const(const Tensor& a, const Matrix& mask) {
  if (a.rows() != mask.rows() || a.cols() != mask.cols()) {
    shape_fail("mul_const", a.value(), mask);
  }
  return unary(a, a.value().cwiseProduct(mask), [mask](Tape& t, NodeId self, NodeId pa) {
    accumulate(t, pa, t.grad_ref(self).cwiseProduct(mask));
  });
}

Tensor add_const(const Tensor& a, const Matrix& offset) {
  if (a.rows() != offset.rows() || a.cols() != offset.cols()) {
    shape_fail("add_const", a.value(), offset);
  }
  return unary(a, a.value() + offset, [](Tape& t, NodeId self, NodeId pa) {
    accumulate(t, pa, t.grad_ref(self));
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (a.tape() != bias.tape()) throw Error("add_bias: operands live on different tapes");
  if (bias.cols() != 1 || bias.rows() != a.rows()) shape_fail("add_bias", a.value(), bias.value());
  Tape& tape = tape_of(a);
  const NodeId pa = a.id(), pb = bias.id();
  Matrix value = a.value().colwise() + bias.value().col(0);
  return tape.record(std::move(value), {pa, pb}, [pa, pb](Tape& t, NodeId self) {
    const Matrix& g = t.grad_ref(self);
    accumulate(t, pa, g);
    if (t.needs_grad(pb)) t.grad_ref(pb).col(0) += g.rowwise().sum();
  });
}

Tensor scale_cols(const Tensor& a, const Tensor& s) {
  if (a.tape() != s.tape()) throw Error("scale_cols: operands live on different tapes");
  if (s.rows() != 1 || s.cols() != a.cols()) shape_fail("scale_cols", a.value(), s.value());
  Tape& tape = tape_of(a);
  const NodeId pa = a.id(), ps = s.id();
  Matrix value = a.value() * s.value().row(0).asDiagonal();
  return tape.record(std::move(value), {pa, ps}, [pa, ps](Tape& t, NodeId self) {
    const Matrix& g = t.grad_ref(self);
    if (t.needs_grad(pa)) t.grad_ref(pa) += g * t.value(ps).row(0).asDiagonal();
    if (t.needs_grad(ps)) {
      t.grad_ref(ps).row(0) += g.cwiseProduct(t.value(pa)).colwise().sum();
    }
  });
}

Tensor scale_cols_const(const Tensor& a, const RowVector& weights) {
  if (weights.size() != a.cols()) {
    throw ShapeError("scale_cols_const: " + std::to_string(weights.size()) + " weights for " +
                     shape_of(a.value()));
  }
  return unary(a, a.value() * weights.asDiagonal(), [weights](Tape& t, NodeId self, NodeId pa) {
    accumulate(t, pa, t.grad_ref(self) * weights.asDiagonal());
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tape = tape_of(parts[0]);
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  std::vector<NodeId> ids;
  std::vector<Eigen::Index> offsets;
  for (const Tensor& p : parts) {
    if (p.tape() != &tape) throw Error("concat: operands live on different tapes");
    if (p.cols() != cols) shape_fail("concat", parts[0].value(), p.value());
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix value(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    value.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
  }
  std::vector<NodeId> parents = ids;
  return tape.record(std::move(value), std::move(parents),
                     [ids, offsets](Tape& t, NodeId self) {
                       const Matrix& g = t.grad_ref(self);
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (!t.needs_grad(ids[i])) continue;
                         Matrix& dst = t.grad_ref(ids[i]);
                         dst += g.middleRows(offsets[i], dst.rows());
                       }
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& tape = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  std::vector<NodeId> ids;
  std::vector<Eigen::Index> offsets;
  for (const Tensor& p : parts) {
    if (p.tape() != &tape) throw Error("concat_cols: operands live on different tapes");
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix value(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    value.middleCols(offsets[i], parts[i].cols()) = parts[i].value();
  }
  std::vector<NodeId> parents = ids;
  return tape.record(std::move(value), std::move(parents),
                     [ids, offsets](Tape& t, NodeId self) {
                       const Matrix& g = t.grad_ref(self);
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (!t.needs_grad(ids[i])) continue;
                         Matrix& dst = t.grad_ref(ids[i]);
                         dst += g.middleCols(offsets[i], dst.cols());
                       }
                     });
}

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ShapeError("slice: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + shape_of(a.value()));
  }
  return unary(a, a.value().middleRows(begin, count),
               [begin, count](Tape& t, NodeId self, NodeId pa) {
                 if (t.needs_grad(pa)) t.grad_ref(pa).middleRows(begin, count) += t.grad_ref(self);
               });
}

Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + shape_of(a.value()));
  }
  return unary(a, a.value().middleCols(begin, count),
               [begin, count](Tape& t, NodeId self, NodeId pa) {
                 if (t.needs_grad(pa)) t.grad_ref(pa).middleCols(begin, count) += t.grad_ref(self);
               });
}

Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_of(a.value()) + " as (" +
                     std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  Matrix value = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    if (!t.needs_grad(pa)) return;
    Matrix& dst = t.grad_ref(pa);
    const Matrix& g = t.grad_ref(self);
    Eigen::Map<Matrix>(dst.data(), g.rows(), g.cols()) += g;
  });
}

Tensor tile_cols(const Tensor& a, Eigen::Index n) {
  if (n < 1) throw ShapeError("tile_cols: n must be positive");
  const Eigen::Index c = a.cols();
  Matrix value(a.rows(), c * n);
  for (Eigen::Index k = 0; k < n; ++k) value.middleCols(k * c, c) = a.value();
  return unary(a, std::move(value), [n, c](Tape& t, NodeId self, NodeId pa) {
    if (!t.needs_grad(pa)) return;
    const Matrix& g = t.grad_ref(self);
    Matrix& dst = t.grad_ref(pa);
    for (Eigen::Index k = 0; k < n; ++k) dst += g.middleCols(k * c, c);
  });
}

Tensor block_sum_cols(const Tensor& a, Eigen::Index n) {
  if (n < 1 || a.cols() % n != 0) {
    throw ShapeError("block_sum_cols: " + shape_of(a.value()) + " not divisible into " +
                     std::to_string(n) + " blocks");
  }
  const Eigen::Index c = a.cols() / n;
  Matrix value = a.value().middleCols(0, c);
  for (Eigen::Index k = 1; k < n; ++k) value += a.value().middleCols(k * c, c);
  return unary(a, std::move(value), [n, c](Tape& t, NodeId self, NodeId pa) {
    if (!t.needs_grad(pa)) return;
    const Matrix& g = t.grad_ref(self);
    Matrix& dst = t.grad_ref(pa);
    for (Eigen::Index k = 0; k < n; ++k) dst.middleCols(k * c, c) += g;
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix value(tv.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= tv.cols()) {
      throw ShapeError("embedding-lookup: id " + std::to_string(ids[j]) + " outside table " +
                       shape_of(tv));
    }
    value.col(static_cast<Eigen::Index>(j)) = tv.col(ids[j]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return unary(table, std::move(value), [idx = std::move(idx)](Tape& t, NodeId self, NodeId pa) {
    if (!t.needs_grad(pa)) return;
    const Matrix& g = t.grad_ref(self);
    Matrix& dst = t.grad_ref(pa);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      dst.col(idx[j]) += g.col(static_cast<Eigen::Index>(j));
    }
  });
}

Tensor pick(const Tensor& a, std::span<const int> ids) {
  if (static_cast<Eigen::Index>(ids.size()) != a.cols()) {
    throw ShapeError("pick: " + std::to_string(ids.size()) + " ids for " + shape_of(a.value()));
  }
  Matrix value(1, a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const int r = ids[static_cast<std::size_t>(j)];
    if (r < 0 || r >= a.rows()) throw ShapeError("pick: row " + std::to_string(r) + " out of range");
    value(0, j) = a.value()(r, j);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return unary(a, std::move(value), [idx = std::move(idx)](Tape& t, NodeId self, NodeId pa) {
    if (!t.needs_grad(pa)) return;
    const Matrix& g = t.grad_ref(self);
    Matrix& dst = t.grad_ref(pa);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      dst(idx[j], static_cast<Eigen::Index>(j)) += g(0, static_cast<Eigen::Index>(j));
    }
  });
}

Tensor softmax(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix value(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).maxCoeff();
    value.col(j) = (x.col(j).array() - m).exp().matrix();
    value.col(j) /= value.col(j).sum();
  }
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    if (!t.needs_grad(pa)) return;
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad_ref(self);
    const RowVector dots = g.cwiseProduct(y).colwise().sum();
    t.grad_ref(pa) += y.cwiseProduct(g - Matrix::Ones(g.rows(), 1) * dots);
  });
}

Tensor log_softmax(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix value(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).maxCoeff();
    const double lse = m + std::log((x.col(j).array() - m).exp().sum());
    value.col(j) = (x.col(j).array() - lse).matrix();
  }
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    if (!t.needs_grad(pa)) return;
    const Matrix probs = t.value(self).array().exp().matrix();
    const Matrix& g = t.grad_ref(self);
    const RowVector totals = g.colwise().sum();
    t.grad_ref(pa) += g - probs * totals.asDiagonal();
  });
}

Tensor sum(const Tensor& a) {
  const Matrix& x = a.value();
  double total = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) total += x.data()[k];
  Matrix value(1, 1);
  value(0, 0) = total;
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    if (t.needs_grad(pa)) t.grad_ref(pa).array() += t.grad_ref(self)(0, 0);
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

Tensor sum_rows(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix value(1, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) total += x(i, j);
    value(0, j) = total;
  }
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    if (!t.needs_grad(pa)) return;
    const Matrix& g = t.grad_ref(self);
    Matrix& dst = t.grad_ref(pa);
    dst += Matrix::Ones(dst.rows(), 1) * g;
  });
}

Tensor l2_norm(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix value(1, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) total += x(i, j) * x(i, j);
    value(0, j) = std::sqrt(total);
  }
  return unary(a, std::move(value), [](Tape& t, NodeId self, NodeId pa) {
    if (!t.needs_grad(pa)) return;
    const Matrix& norms = t.value(self);
    const Matrix& g = t.grad_ref(self);
    const Matrix& xv = t.value(pa);
    Matrix& dst = t.grad_ref(pa);
    for (Eigen::Index j = 0; j < xv.cols(); ++j) {
      if (norms(0, j) > 0.0) dst.col(j) += xv.col(j) * (g(0, j) / norms(0, j));
    }
  });
}

double grad_check(const ScalarFn& fn, std::span<const Matrix> inputs, double epsilon) {
  if (!(epsilon > 0.0)) throw Error("grad_check: epsilon must be positive");

  auto evaluate = [&](const std::vector<Matrix>& values) {
    Tape tape(false);
    std::vector<Tensor> leaves;
    leaves.reserve(values.size());
    for (const Matrix& v : values) leaves.push_back(tape.constant(v));
    const Tensor out = fn(tape, leaves);
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("grad_check: function is not scalar");
    return out.value()(0, 0);
  };

  std::vector<Matrix> values(inputs.begin(), inputs.end());
  Tape tape;
  std::vector<Tensor> leaves;
  for (const Matrix& v : values) leaves.push_back(tape.variable(v));
  const Tensor out = fn(tape, leaves);
  tape.backward(out);

  double worst = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const Matrix analytic = tape.grad(leaves[k].id());
    for (Eigen::Index c = 0; c < values[k].size(); ++c) {
      const double saved = values[k].data()[c];
      values[k].data()[c] = saved + epsilon;
      const double up = evaluate(values);
      values[k].data()[c] = saved - epsilon;
      const double down = evaluate(values);
      values[k].data()[c] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic.data()[c];
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(a)) {
        throw NumericError("grad_check: non-finite value at input " + std::to_string(k) +
                           " coordinate " + std::to_string(c));
      }
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace mwgen::ad
