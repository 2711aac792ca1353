#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation in execution order, so the node list is
// already topologically sorted and backward() is a single reverse sweep.
// All tensors are 2-D; batched code keeps one example per column.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mwgen/error.hpp"

namespace mwgen::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;
using NodeId = std::size_t;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  NodeId id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Gradients keyed by node id; produced by Tape::backward.
using GradientMap = std::map<NodeId, Matrix>;

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  /// With `record == false` no backward rules are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives a gradient.
  Tensor constant(Matrix value);
  /// A differentiable leaf owning its value.
  Tensor variable(Matrix value);
  /// A differentiable leaf viewing an external matrix (no copy). The
  /// referenced matrix must outlive the tape and stay unchanged.
  Tensor parameter(const Matrix& value);

  /// Records an op result with parents and backward rule.
  Tensor record(Matrix value, std::vector<NodeId> parents, BackwardFn fn);

  /// Runs the reverse sweep from a 1x1 loss. Every leaf created with
  /// variable() or parameter() gets an entry; unreachable ones are zero.
  GradientMap backward(const Tensor& loss);

  const Matrix& value(NodeId id) const;
  /// Accumulated gradient of a node (zero matrix if none reached it).
  Matrix grad(NodeId id) const;
  /// Mutable upstream gradient; allocated and zeroed on first access.
  Matrix& grad_ref(NodeId id);
  bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_[id].parents; }

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool has_grad = false;
    bool needs_grad = false;
    bool leaf = false;
    std::vector<NodeId> parents;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool record_ = true;
};

/// Operation kinds accepted by the generic apply() dispatcher.
enum class OpKind {
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kConcat,
  kSlice,
  kSigmoid,
  kTanh,
  kSoftmax,
  kLog,
  kEmbeddingLookup,
  kSum,
  kMean,
  kL2Norm,
};

std::string to_string(OpKind kind);

/// Extra arguments for apply(): row ranges for slice, ids for lookup.
struct OpAttrs {
  Eigen::Index begin = 0;
  Eigen::Index count = 0;
  std::vector<int> ids;
};

Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise (operands of identical shape).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
/// 1 - a.
Tensor one_minus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
/// Elementwise product with a constant matrix of the same shape.
Tensor mul_const(const Tensor& a, const Matrix& mask);
/// Adds a constant matrix of the same shape.
Tensor add_const(const Tensor& a, const Matrix& offset);

// Broadcasting.
/// a (r x c) + bias (r x 1) broadcast over columns.
Tensor add_bias(const Tensor& a, const Tensor& bias);
/// Scales column j of a (r x c) by s(0, j); s is 1 x c and differentiable.
Tensor scale_cols(const Tensor& a, const Tensor& s);
/// Scales column j of a by a constant weight.
Tensor scale_cols_const(const Tensor& a, const RowVector& weights);

// Structural.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count);
/// Column-major reinterpretation of the data with a new shape.
Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols);
/// [a a ... a] (n copies side by side).
Tensor tile_cols(const Tensor& a, Eigen::Index n);
/// Sum of n equal-width column blocks: inverse layout of tile_cols.
Tensor block_sum_cols(const Tensor& a, Eigen::Index n);
/// Column j is column ids[j] of table (rows = embedding size).
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
/// 1 x c row whose entry j is a(ids[j], j).
Tensor pick(const Tensor& a, std::span<const int> ids);

// Normalizations and reductions.
/// Column-wise softmax.
Tensor softmax(const Tensor& a);
/// Column-wise log-softmax (numerically stable).
Tensor log_softmax(const Tensor& a);
/// 1 x 1 sum of all entries (fixed column-major order).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// 1 x c row of column sums.
Tensor sum_rows(const Tensor& a);
/// 1 x c row of column L2 norms; subgradient 0 at the origin.
Tensor l2_norm(const Tensor& a);

/// Central-difference gradient check.
///
/// `fn` builds a scalar from leaves created for each input on a fresh tape.
/// Returns the max over all coordinates of
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
using ScalarFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;
double grad_check(const ScalarFn& fn, std::span<const Matrix> inputs, double epsilon = 1e-5);

}  // namespace mwgen::ad
