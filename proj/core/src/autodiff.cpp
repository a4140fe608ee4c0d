#include "pvd/autodiff.hpp"

#include <cmath>
#include <string>

#include "pvd/errors.hpp"

namespace pvd::ad {

using Eigen::Index;

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

}  // namespace

template <typename T>
Var Tape<T>::constant(Matrix<T> value) {
  return push(std::move(value), false, {});
}

template <typename T>
Var Tape<T>::parameter(Matrix<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::push(Matrix<T> value, bool requires_grad, Backward fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Matrix<T>& Tape<T>::grad_ref(int id) {
  Node& n = nodes_.at(id);
  if (n.grad.size() == 0) n.grad = Matrix<T>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var out) {
  if (!record_) throw DomainError("backward: tape was not recording");
  Node& root = nodes_.at(out.id);
  if (root.value.size() != 1) throw ShapeError("backward: output must be a 1x1 scalar");
  if (!root.requires_grad) return;
  grad_ref(out.id).setOnes();
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  require(va.rows() == vb.rows() && va.cols() == vb.cols(), "add",
          dims(va.rows(), va.cols()) + " vs " + dims(vb.rows(), vb.cols()));
  Matrix<T> out = va + vb;
  return tape.push(std::move(out), tape.needs(a) || tape.needs(b), [a, b](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(Var{self});
    if (tp.needs(a)) tp.grad_ref(a.id) += g;
    if (tp.needs(b)) tp.grad_ref(b.id) += g;
  });
}

template <typename T>
Var matmul(Tape<T>& tape, Var x, Var w) {
  const auto& vx = tape.value(x);
  const auto& vw = tape.value(w);
  require(vx.cols() == vw.rows(), "matmul", dims(vx.rows(), vx.cols()) + " * " + dims(vw.rows(), vw.cols()));
  Matrix<T> out(vx.rows(), vw.cols());
  out.noalias() = vx * vw;
  return tape.push(std::move(out), tape.needs(x) || tape.needs(w), [x, w](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(Var{self});
    if (tp.needs(x)) tp.grad_ref(x.id).noalias() += g * tp.value(w).transpose();
    if (tp.needs(w)) tp.grad_ref(w.id).noalias() += tp.value(x).transpose() * g;
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b) {
  const auto& vx = tape.value(x);
  const auto& vw = tape.value(w);
  const auto& vb = tape.value(b);
  require(vx.cols() == vw.rows(), "linear", dims(vx.rows(), vx.cols()) + " * " + dims(vw.rows(), vw.cols()));
  require(vb.rows() == 1 && vb.cols() == vw.cols(), "linear", "bias must be 1x" + std::to_string(vw.cols()));
  Matrix<T> out(vx.rows(), vw.cols());
  out.noalias() = vx * vw;
  out.rowwise() += vb.row(0);
  const bool req = tape.needs(x) || tape.needs(w) || tape.needs(b);
  return tape.push(std::move(out), req, [x, w, b](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(Var{self});
    if (tp.needs(x)) tp.grad_ref(x.id).noalias() += g * tp.value(w).transpose();
    if (tp.needs(w)) tp.grad_ref(w.id).noalias() += tp.value(x).transpose() * g;
    if (tp.needs(b)) tp.grad_ref(b.id) += g.colwise().sum();
  });
}

template <typename T>
Var concat_cols(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  require(va.rows() == vb.rows(), "concat_cols", dims(va.rows(), va.cols()) + " | " + dims(vb.rows(), vb.cols()));
  Matrix<T> out(va.rows(), va.cols() + vb.cols());
  out.leftCols(va.cols()) = va;
  out.rightCols(vb.cols()) = vb;
  const Index ca = va.cols();
  const Index cb = vb.cols();
  return tape.push(std::move(out), tape.needs(a) || tape.needs(b), [a, b, ca, cb](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(Var{self});
    if (tp.needs(a)) tp.grad_ref(a.id) += g.leftCols(ca);
    if (tp.needs(b)) tp.grad_ref(b.id) += g.rightCols(cb);
  });
}

template <typename T>
Var broadcast_rows(Tape<T>& tape, Var row, Index rows) {
  const auto& vr = tape.value(row);
  require(vr.rows() == 1, "broadcast_rows", "input must be a single row");
  Matrix<T> out = vr.replicate(rows, 1);
  return tape.push(std::move(out), tape.needs(row), [row](Tape<T>& tp, int self) {
    tp.grad_ref(row.id) += tp.grad(Var{self}).colwise().sum();
  });
}

template <typename T>
Var group_norm(Tape<T>& tape, Var x, Var gamma, Var beta, int groups, T eps) {
  const auto& vx = tape.value(x);
  const Index rows = vx.rows();
  const Index cols = vx.cols();
  require(groups > 0 && cols % groups == 0, "group_norm",
          std::to_string(cols) + " channels not divisible by " + std::to_string(groups) + " groups");
  require(tape.value(gamma).cols() == cols && tape.value(beta).cols() == cols, "group_norm",
          "affine parameters must have one entry per channel");
  const Index cg = cols / groups;
  const double m = static_cast<double>(rows * cg);

  auto xhat = std::make_shared<Matrix<T>>(rows, cols);
  auto inv_std = std::make_shared<std::vector<double>>(groups);
  for (int g = 0; g < groups; ++g) {
    const auto block = vx.middleCols(g * cg, cg);
    double sum = 0.0;
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cg; ++c) sum += static_cast<double>(block(r, c));
    const double mean = sum / m;
    double var = 0.0;
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cg; ++c) {
        const double d = static_cast<double>(block(r, c)) - mean;
        var += d * d;
      }
    var /= m;
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    (*inv_std)[g] = is;
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cg; ++c)
        (*xhat)(r, g * cg + c) = static_cast<T>((static_cast<double>(block(r, c)) - mean) * is);
  }
  Matrix<T> out = xhat->array().rowwise() * tape.value(gamma).row(0).array();
  out.rowwise() += tape.value(beta).row(0);

  const bool req = tape.needs(x) || tape.needs(gamma) || tape.needs(beta);
  return tape.push(std::move(out), req, [x, gamma, beta, groups, cg, m, xhat, inv_std](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(Var{self});
    const Index rows = g.rows();
    if (tp.needs(gamma)) tp.grad_ref(gamma.id) += (g.array() * xhat->array()).colwise().sum().matrix();
    if (tp.needs(beta)) tp.grad_ref(beta.id) += g.colwise().sum();
    if (!tp.needs(x)) return;
    const auto& gam = tp.value(gamma);
    Matrix<T>& gx = tp.grad_ref(x.id);
    for (int grp = 0; grp < groups; ++grp) {
      double sum_d = 0.0;
      double sum_dx = 0.0;
      for (Index r = 0; r < rows; ++r)
        for (Index c = grp * cg; c < (grp + 1) * cg; ++c) {
          const double d = static_cast<double>(g(r, c)) * static_cast<double>(gam(0, c));
          sum_d += d;
          sum_dx += d * static_cast<double>((*xhat)(r, c));
        }
      const double is = (*inv_std)[grp];
      for (Index r = 0; r < rows; ++r)
        for (Index c = grp * cg; c < (grp + 1) * cg; ++c) {
          const double d = static_cast<double>(g(r, c)) * static_cast<double>(gam(0, c));
          gx(r, c) += static_cast<T>(is / m * (m * d - sum_d - static_cast<double>((*xhat)(r, c)) * sum_dx));
        }
    }
  });
}

template <typename T>
Var swish(Tape<T>& tape, Var x) {
  const auto& vx = tape.value(x);
  Matrix<T> sig = (T(1) + (-vx.array()).exp()).inverse().matrix();
  Matrix<T> out = (vx.array() * sig.array()).matrix();
  auto s = std::make_shared<Matrix<T>>(std::move(sig));
  return tape.push(std::move(out), tape.needs(x), [x, s](Tape<T>& tp, int self) {
    const auto& vx = tp.value(x);
    const auto sa = s->array();
    tp.grad_ref(x.id).array() += tp.grad(Var{self}).array() * (sa + vx.array() * sa * (T(1) - sa));
  });
}

template <typename T>
Var leaky_relu(Tape<T>& tape, Var x, T slope) {
  const auto& vx = tape.value(x);
  Matrix<T> out = vx.unaryExpr([slope](T v) { return v > T(0) ? v : slope * v; });
  return tape.push(std::move(out), tape.needs(x), [x, slope](Tape<T>& tp, int self) {
    const auto& vx = tp.value(x);
    const Matrix<T> d = vx.unaryExpr([slope](T v) { return v > T(0) ? T(1) : slope; });
    tp.grad_ref(x.id).array() += tp.grad(Var{self}).array() * d.array();
  });
}

template <typename T>
Var dropout(Tape<T>& tape, Var x, Matrix<T> mask) {
  const auto& vx = tape.value(x);
  require(mask.rows() == vx.rows() && mask.cols() == vx.cols(), "dropout", "mask shape mismatch");
  Matrix<T> out = (vx.array() * mask.array()).matrix();
  auto mk = std::make_shared<Matrix<T>>(std::move(mask));
  return tape.push(std::move(out), tape.needs(x), [x, mk](Tape<T>& tp, int self) {
    tp.grad_ref(x.id).array() += tp.grad(Var{self}).array() * mk->array();
  });
}

template <typename T>
Var sparse_apply(Tape<T>& tape, std::shared_ptr<const SparseMap<T>> op, Var x) {
  const auto& vx = tape.value(x);
  require(op->cols() == vx.rows(), "sparse_apply",
          "operator has " + std::to_string(op->cols()) + " columns, input has " + std::to_string(vx.rows()) + " rows");
  Matrix<T> out(op->rows(), vx.cols());
  out.noalias() = (*op) * vx;
  return tape.push(std::move(out), tape.needs(x), [x, op](Tape<T>& tp, int self) {
    tp.grad_ref(x.id).noalias() += op->transpose() * tp.grad(Var{self});
  });
}

namespace {

// Convolution runs on a zero-padded (D+2)^3 grid. For tap offset `off`, the
// output rows of the padded interior span [lo, lo + R) and read input rows
// [lo + off, lo + off + R), so each tap is one contiguous GEMM.
struct PaddedLayout {
  Index P = 0;   // padded side
  Index lo = 0;  // padded index of voxel (0, 0, 0)
  Index R = 0;   // rows from (0,0,0) to (D-1,D-1,D-1) in padded indexing
  Index offs[27];

  explicit PaddedLayout(Index D) : P(D + 2) {
    lo = (P + 1) * P + 1;
    const Index hi = (D * P + D) * P + D;
    R = hi - lo + 1;
    int k = 0;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz, ++k) offs[k] = (dx * P + dy) * P + dz;
  }
  Index padded(Index ix, Index iy, Index iz) const { return ((ix + 1) * P + iy + 1) * P + iz + 1; }
};

template <typename T, typename F>
void for_each_voxel(Index D, const PaddedLayout& L, F&& f) {
  Index v = 0;
  for (Index ix = 0; ix < D; ++ix)
    for (Index iy = 0; iy < D; ++iy)
      for (Index iz = 0; iz < D; ++iz, ++v) f(v, L.padded(ix, iy, iz) - L.lo);
}

template <typename T>
Matrix<T> pad_grid(const Matrix<T>& x, Index D, const PaddedLayout& L) {
  Matrix<T> xp = Matrix<T>::Zero(L.P * L.P * L.P, x.cols());
  for_each_voxel<T>(D, L, [&](Index v, Index p) { xp.row(p + L.lo) = x.row(v); });
  return xp;
}

}  // namespace

template <typename T>
Var conv3d(Tape<T>& tape, Var x, Var w, Var b, int resolution) {
  const auto& vx = tape.value(x);
  const auto& vw = tape.value(w);
  const Index D = resolution;
  require(vx.rows() == D * D * D, "conv3d", "grid has " + std::to_string(vx.rows()) + " rows, expected D^3");
  require(vw.rows() == 27 * vx.cols(), "conv3d",
          "weight " + dims(vw.rows(), vw.cols()) + " incompatible with " + std::to_string(vx.cols()) + " channels");
  require(tape.value(b).rows() == 1 && tape.value(b).cols() == vw.cols(), "conv3d", "bias shape");
  const PaddedLayout L(D);
  const Index C = vx.cols();
  auto xp = std::make_shared<Matrix<T>>(pad_grid(vx, D, L));
  Matrix<T> yp = Matrix<T>::Zero(L.R, vw.cols());
  for (int k = 0; k < 27; ++k) {
    yp.noalias() += xp->middleRows(L.lo + L.offs[k], L.R) * vw.middleRows(k * C, C);
  }
  Matrix<T> out(vx.rows(), vw.cols());
  for_each_voxel<T>(D, L, [&](Index v, Index p) { out.row(v) = yp.row(p); });
  out.rowwise() += tape.value(b).row(0);

  const bool req = tape.needs(x) || tape.needs(w) || tape.needs(b);
  if (!tape.recording()) xp.reset();
  return tape.push(std::move(out), req, [x, w, b, D, C, xp](Tape<T>& tp, int self) {
    const PaddedLayout L(D);
    const Matrix<T>& g = tp.grad(Var{self});
    if (tp.needs(b)) tp.grad_ref(b.id) += g.colwise().sum();
    Matrix<T> gp = Matrix<T>::Zero(L.R, g.cols());
    for_each_voxel<T>(D, L, [&](Index v, Index p) { gp.row(p) = g.row(v); });
    if (tp.needs(w)) {
      Matrix<T>& gw = tp.grad_ref(w.id);
      for (int k = 0; k < 27; ++k) {
        gw.middleRows(k * C, C).noalias() += xp->middleRows(L.lo + L.offs[k], L.R).transpose() * gp;
      }
    }
    if (tp.needs(x)) {
      const auto& vw = tp.value(w);
      Matrix<T> gxp = Matrix<T>::Zero(L.P * L.P * L.P, C);
      for (int k = 0; k < 27; ++k) {
        gxp.middleRows(L.lo + L.offs[k], L.R).noalias() += gp * vw.middleRows(k * C, C).transpose();
      }
      Matrix<T>& gx = tp.grad_ref(x.id);
      for_each_voxel<T>(D, L, [&](Index v, Index p) { gx.row(v) += gxp.row(p + L.lo); });
    }
  });
}

template <typename T>
Var self_attention(Tape<T>& tape, Var x, Var wq, Var wk, Var wv, Var wo) {
  const auto& vx = tape.value(x);
  const Index C = vx.cols();
  for (Var p : {wq, wk, wv, wo}) {
    require(tape.value(p).rows() == C && tape.value(p).cols() == C, "self_attention",
            "projections must be " + dims(C, C));
  }
  struct Cache {
    Matrix<T> q, k, v, attn, h;
  };
  auto cache = std::make_shared<Cache>();
  cache->q.noalias() = vx * tape.value(wq);
  cache->k.noalias() = vx * tape.value(wk);
  cache->v.noalias() = vx * tape.value(wv);
  const T scale = T(1) / std::sqrt(static_cast<T>(C));
  cache->attn.noalias() = cache->q * cache->k.transpose();
  cache->attn *= scale;
  for (Index r = 0; r < cache->attn.rows(); ++r) {
    auto row = cache->attn.row(r);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
  }
  cache->h.noalias() = cache->attn * cache->v;
  Matrix<T> out = vx;
  out.noalias() += cache->h * tape.value(wo);

  const bool req = tape.needs(x) || tape.needs(wq) || tape.needs(wk) || tape.needs(wv) || tape.needs(wo);
  return tape.push(std::move(out), req, [x, wq, wk, wv, wo, cache, scale](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(Var{self});
    const auto& vx = tp.value(x);
    if (tp.needs(wo)) tp.grad_ref(wo.id).noalias() += cache->h.transpose() * g;
    const Matrix<T> dh = g * tp.value(wo).transpose();
    const Matrix<T> dattn = dh * cache->v.transpose();
    const Matrix<T> dv = cache->attn.transpose() * dh;
    Matrix<T> ds = cache->attn;
    for (Index r = 0; r < ds.rows(); ++r) {
      const T dot = cache->attn.row(r).dot(dattn.row(r));
      ds.row(r) = (cache->attn.row(r).array() * (dattn.row(r).array() - dot)).matrix();
    }
    ds *= scale;
    const Matrix<T> dq = ds * cache->k;
    const Matrix<T> dk = ds.transpose() * cache->q;
    if (tp.needs(wq)) tp.grad_ref(wq.id).noalias() += vx.transpose() * dq;
    if (tp.needs(wk)) tp.grad_ref(wk.id).noalias() += vx.transpose() * dk;
    if (tp.needs(wv)) tp.grad_ref(wv.id).noalias() += vx.transpose() * dv;
    if (tp.needs(x)) {
      Matrix<T>& gx = tp.grad_ref(x.id);
      gx += g;
      gx.noalias() += dq * tp.value(wq).transpose();
      gx.noalias() += dk * tp.value(wk).transpose();
      gx.noalias() += dv * tp.value(wv).transpose();
    }
  });
}

template <typename T>
Var max_pool_rows(Tape<T>& tape, Var x, Index group) {
  const auto& vx = tape.value(x);
  require(group > 0 && vx.rows() % group == 0, "max_pool_rows", "row count not a multiple of the group size");
  const Index R = vx.rows() / group;
  const Index C = vx.cols();
  Matrix<T> out(R, C);
  auto arg = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(R * C));
  for (Index r = 0; r < R; ++r)
    for (Index c = 0; c < C; ++c) {
      Index best = r * group;
      for (Index j = 1; j < group; ++j) {
        if (vx(r * group + j, c) > vx(best, c)) best = r * group + j;
      }
      out(r, c) = vx(best, c);
      (*arg)[r * C + c] = best;
    }
  return tape.push(std::move(out), tape.needs(x), [x, arg, C](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(Var{self});
    Matrix<T>& gx = tp.grad_ref(x.id);
    for (Index r = 0; r < g.rows(); ++r)
      for (Index c = 0; c < C; ++c) gx((*arg)[r * C + c], c) += g(r, c);
  });
}

template <typename T>
Var mse_rows(Tape<T>& tape, Var pred, const Matrix<T>& target, Index row_begin) {
  const auto& vp = tape.value(pred);
  require(vp.rows() == target.rows() && vp.cols() == target.cols(), "mse_rows", "target shape mismatch");
  require(row_begin >= 0 && row_begin < vp.rows(), "mse_rows", "empty row range");
  const Index n = vp.rows() - row_begin;
  const double count = static_cast<double>(n * vp.cols());
  auto diff = std::make_shared<Matrix<T>>(vp.bottomRows(n) - target.bottomRows(n));
  double sum = 0.0;
  for (Index i = 0; i < diff->size(); ++i) {
    const double d = static_cast<double>(diff->data()[i]);
    sum += d * d;
  }
  Matrix<T> out(1, 1);
  out(0, 0) = static_cast<T>(sum / count);
  return tape.push(std::move(out), tape.needs(pred), [pred, diff, n, count](Tape<T>& tp, int self) {
    const T g = tp.grad(Var{self})(0, 0);
    tp.grad_ref(pred.id).bottomRows(n) += (*diff) * static_cast<T>(2.0 / count) * g;
  });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, const Matrix<T>& weights) {
  const auto& vx = tape.value(x);
  require(vx.rows() == weights.rows() && vx.cols() == weights.cols(), "weighted_sum", "weight shape mismatch");
  Matrix<T> out(1, 1);
  out(0, 0) = (vx.array() * weights.array()).sum();
  auto w = std::make_shared<Matrix<T>>(weights);
  return tape.push(std::move(out), tape.needs(x), [x, w](Tape<T>& tp, int self) {
    tp.grad_ref(x.id) += (*w) * tp.grad(Var{self})(0, 0);
  });
}

#define PVD_INSTANTIATE(T)                                                              \
  template class Tape<T>;                                                               \
  template Var add(Tape<T>&, Var, Var);                                                 \
  template Var linear(Tape<T>&, Var, Var, Var);                                         \
  template Var matmul(Tape<T>&, Var, Var);                                              \
  template Var concat_cols(Tape<T>&, Var, Var);                                         \
  template Var broadcast_rows(Tape<T>&, Var, Index);                                    \
  template Var group_norm(Tape<T>&, Var, Var, Var, int, T);                             \
  template Var swish(Tape<T>&, Var);                                                    \
  template Var leaky_relu(Tape<T>&, Var, T);                                            \
  template Var dropout(Tape<T>&, Var, Matrix<T>);                                       \
  template Var sparse_apply(Tape<T>&, std::shared_ptr<const SparseMap<T>>, Var);        \
  template Var conv3d(Tape<T>&, Var, Var, Var, int);                                    \
  template Var self_attention(Tape<T>&, Var, Var, Var, Var, Var);                       \
  template Var max_pool_rows(Tape<T>&, Var, Index);                                     \
  template Var mse_rows(Tape<T>&, Var, const Matrix<T>&, Index);                        \
  template Var weighted_sum(Tape<T>&, Var, const Matrix<T>&);

PVD_INSTANTIATE(float)
PVD_INSTANTIATE(double)

#undef PVD_INSTANTIATE

}  // namespace pvd::ad
