#pragma once

// Minimal reverse-mode differentiation over row-major matrices.
//
// A Tape records matrix-valued nodes in evaluation order. Each op computes its
// value eagerly and, when the tape is recording and some input needs a
// gradient, pushes a closure that propagates the node's gradient into its
// parents. backward() walks the nodes in reverse creation order, so gradient
// accumulation order is fixed and results are bit-reproducible.

#include <Eigen/SparseCore>
#include <functional>
#include <memory>
#include <vector>

#include "pvd/point_cloud.hpp"

namespace pvd::ad {

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

template <typename T>
using SparseMap = Eigen::SparseMatrix<T, Eigen::RowMajor, int>;

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  /// A non-recording tape still evaluates every op but stores no closures.
  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Matrix<T> value);
  Var parameter(Matrix<T> value);

  const Matrix<T>& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient accumulated by backward(); an empty matrix if none reached v.
  const Matrix<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 for a 1x1 node and runs the reverse sweep.
  void backward(Var scalar_out);

  // Op-author interface.
  Var push(Matrix<T> value, bool requires_grad, Backward fn);
  Matrix<T>& grad_ref(int id);
  bool needs(Var v) const { return nodes_.at(v.id).requires_grad; }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  bool record_;
};

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// x * w + b, with w of shape (in, out) and b of shape (1, out).
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b);

/// x * w (no bias).
template <typename T>
Var matmul(Tape<T>& tape, Var x, Var w);

template <typename T>
Var concat_cols(Tape<T>& tape, Var a, Var b);

/// Repeats a 1 x C row `rows` times.
template <typename T>
Var broadcast_rows(Tape<T>& tape, Var row, Eigen::Index rows);

/// Group normalization over all rows and the channels of each group.
template <typename T>
Var group_norm(Tape<T>& tape, Var x, Var gamma, Var beta, int groups, T eps = T(1e-5));

template <typename T>
Var swish(Tape<T>& tape, Var x);

template <typename T>
Var leaky_relu(Tape<T>& tape, Var x, T slope);

/// Elementwise product with a fixed mask (already scaled by 1 / keep_prob).
template <typename T>
Var dropout(Tape<T>& tape, Var x, Matrix<T> mask);

/// y = S x for a constant sparse operator S (gather, scatter-average,
/// trilinear or inverse-distance interpolation).
template <typename T>
Var sparse_apply(Tape<T>& tape, std::shared_ptr<const SparseMap<T>> op, Var x);

/// 3x3x3 convolution, stride 1, zero padding 1, on a D^3 x C_in grid whose
/// rows are indexed ((ix * D) + iy) * D + iz. Weight shape (27 * C_in, C_out),
/// tap-major: row k * C_in + c with k = 9 (dx + 1) + 3 (dy + 1) + (dz + 1).
template <typename T>
Var conv3d(Tape<T>& tape, Var x, Var w, Var b, int resolution);

/// Single-head scaled dot-product self-attention over rows with a residual:
/// y = x + softmax(x Wq (x Wk)^T / sqrt(C)) (x Wv) Wo.
template <typename T>
Var self_attention(Tape<T>& tape, Var x, Var wq, Var wk, Var wv, Var wo);

/// Max over consecutive blocks of `group` rows: (R * group) x C -> R x C.
/// Ties pick the first row of the block.
template <typename T>
Var max_pool_rows(Tape<T>& tape, Var x, Eigen::Index group);

/// Mean squared error against a constant target over rows [row_begin, end).
template <typename T>
Var mse_rows(Tape<T>& tape, Var pred, const Matrix<T>& target, Eigen::Index row_begin);

/// Sum of all entries weighted by a constant matrix (scalar probe for tests).
template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, const Matrix<T>& weights);

}  // namespace pvd::ad
