#ifndef HPM_GRAPH_HPP
#define HPM_GRAPH_HPP

#include "hpm/common.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

// Reverse-mode differentiation over dense Eigen matrices. A Var is a handle
// to a graph node; free functions build new nodes and record how to push
// gradients back to their parents. backward() runs the tape in reverse
// topological order.
namespace hpm::ag {

template <class S>
struct Node {
  Mat<S> value;
  Mat<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> backprop;

  void accumulate(const Mat<S>& g) {
    if (grad.size() == 0) grad = Mat<S>::Zero(value.rows(), value.cols());
    grad += g;
  }
};

template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Var leaf(Mat<S> v, bool requires_grad) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  const Mat<S>& value() const { return node_->value; }
  Mat<S>& value() { return node_->value; }
  const Mat<S>& grad() const { return node_->grad; }
  Mat<S>& grad_ref() {
    if (node_->grad.size() == 0)
      node_->grad = Mat<S>::Zero(node_->value.rows(), node_->value.cols());
    return node_->grad;
  }
  void zero_grad() { node_->grad.setZero(); }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::shared_ptr<Node<S>> node() const { return node_; }
  bool valid() const { return node_ != nullptr; }

 private:
  std::shared_ptr<Node<S>> node_;
};

template <class S>
Var<S> constant(Mat<S> v) {
  return Var<S>::leaf(std::move(v), false);
}

namespace detail {

template <class S>
Var<S> make(Mat<S> value, std::vector<Var<S>> parents,
            std::function<void(Node<S>&)> backprop) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  bool any = false;
  for (auto& p : parents) {
    any = any || p.node()->requires_grad;
    n->parents.push_back(p.node());
  }
  n->requires_grad = any;
  if (any) n->backprop = std::move(backprop);
  return Var<S>(std::move(n));
}

}  // namespace detail

// ---- arithmetic -----------------------------------------------------------

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  auto an = a.node(), bn = b.node();
  return detail::make<S>(a.value() + b.value(), {a, b}, [an, bn](Node<S>& n) {
    if (an->requires_grad) an->accumulate(n.grad);
    if (bn->requires_grad) bn->accumulate(n.grad);
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  auto an = a.node(), bn = b.node();
  return detail::make<S>(a.value() - b.value(), {a, b}, [an, bn](Node<S>& n) {
    if (an->requires_grad) an->accumulate(n.grad);
    if (bn->requires_grad) bn->accumulate(Mat<S>(-n.grad));
  });
}

template <class S>
Var<S> scale(const Var<S>& a, S s) {
  auto an = a.node();
  return detail::make<S>(Mat<S>(a.value() * s), {a}, [an, s](Node<S>& n) {
    an->accumulate(Mat<S>(n.grad * s));
  });
}

template <class S>
Var<S> cmul(const Var<S>& a, const Var<S>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "cmul: shape mismatch");
  auto an = a.node(), bn = b.node();
  return detail::make<S>(Mat<S>(a.value().cwiseProduct(b.value())), {a, b},
                         [an, bn](Node<S>& n) {
                           if (an->requires_grad)
                             an->accumulate(Mat<S>(n.grad.cwiseProduct(bn->value)));
                           if (bn->requires_grad)
                             bn->accumulate(Mat<S>(n.grad.cwiseProduct(an->value)));
                         });
}

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  auto an = a.node(), bn = b.node();
  return detail::make<S>(Mat<S>(a.value() * b.value()), {a, b},
                         [an, bn](Node<S>& n) {
                           if (an->requires_grad)
                             an->accumulate(Mat<S>(n.grad * bn->value.transpose()));
                           if (bn->requires_grad)
                             bn->accumulate(Mat<S>(an->value.transpose() * n.grad));
                         });
}

// a * b^T
template <class S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) {
  require(a.cols() == b.cols(), "matmul_nt: dimension mismatch");
  auto an = a.node(), bn = b.node();
  return detail::make<S>(Mat<S>(a.value() * b.value().transpose()), {a, b},
                         [an, bn](Node<S>& n) {
                           if (an->requires_grad)
                             an->accumulate(Mat<S>(n.grad * bn->value));
                           if (bn->requires_grad)
                             bn->accumulate(Mat<S>(n.grad.transpose() * an->value));
                         });
}

// broadcast a 1 x C row over every row of x
template <class S>
Var<S> add_rowvec(const Var<S>& x, const Var<S>& r) {
  require(r.rows() == 1 && r.cols() == x.cols(), "add_rowvec: bad row vector");
  auto xn = x.node(), rn = r.node();
  Mat<S> y = x.value();
  y.rowwise() += Eigen::RowVector<S, Eigen::Dynamic>(r.value().row(0));
  return detail::make<S>(std::move(y), {x, r}, [xn, rn](Node<S>& n) {
    if (xn->requires_grad) xn->accumulate(n.grad);
    if (rn->requires_grad) rn->accumulate(Mat<S>(n.grad.colwise().sum()));
  });
}

// scale row i of x by the constant weight w(i); used for masking
template <class S>
Var<S> mul_rows(const Var<S>& x, const Vec<S>& w) {
  require(w.size() == x.rows(), "mul_rows: bad weight length");
  auto xn = x.node();
  Vec<S> wc = w;
  return detail::make<S>(Mat<S>(wc.asDiagonal() * x.value()), {x},
                         [xn, wc](Node<S>& n) {
                           xn->accumulate(Mat<S>(wc.asDiagonal() * n.grad));
                         });
}

// ---- shape ops ------------------------------------------------------------

template <class S>
Var<S> gather_rows(const Var<S>& x, std::vector<int> idx) {
  auto xn = x.node();
  Mat<S> y(Eigen::Index(idx.size()), x.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < x.rows(), "gather_rows: index out of range");
    y.row(Eigen::Index(i)) = x.value().row(idx[i]);
  }
  return detail::make<S>(std::move(y), {x}, [xn, idx](Node<S>& n) {
    Mat<S> g = Mat<S>::Zero(xn->value.rows(), xn->value.cols());
    for (size_t i = 0; i < idx.size(); ++i)
      g.row(idx[i]) += n.grad.row(Eigen::Index(i));
    xn->accumulate(g);
  });
}

// trim from the tail or zero-pad at the tail to exactly `target` rows
template <class S>
Var<S> fit_rows(const Var<S>& x, Eigen::Index target) {
  if (target <= 0) throw InvalidConfig("fit_rows: target length must be positive");
  auto xn = x.node();
  const Eigen::Index keep = std::min(target, x.rows());
  Mat<S> y = Mat<S>::Zero(target, x.cols());
  y.topRows(keep) = x.value().topRows(keep);
  return detail::make<S>(std::move(y), {x}, [xn, keep](Node<S>& n) {
    Mat<S> g = Mat<S>::Zero(xn->value.rows(), xn->value.cols());
    g.topRows(keep) = n.grad.topRows(keep);
    xn->accumulate(g);
  });
}

template <class S>
Var<S> concat_cols(const Var<S>& a, const Var<S>& b) {
  require(a.rows() == b.rows(), "concat_cols: row mismatch");
  auto an = a.node(), bn = b.node();
  Mat<S> y(a.rows(), a.cols() + b.cols());
  y.leftCols(a.cols()) = a.value();
  y.rightCols(b.cols()) = b.value();
  return detail::make<S>(std::move(y), {a, b}, [an, bn](Node<S>& n) {
    if (an->requires_grad)
      an->accumulate(Mat<S>(n.grad.leftCols(an->value.cols())));
    if (bn->requires_grad)
      bn->accumulate(Mat<S>(n.grad.rightCols(bn->value.cols())));
  });
}

// ---- nonlinearities -------------------------------------------------------

template <class S>
Var<S> tanh_(const Var<S>& x) {
  auto xn = x.node();
  Mat<S> y = x.value().array().tanh().matrix();
  auto yv = std::make_shared<Mat<S>>(y);
  return detail::make<S>(std::move(y), {x}, [xn, yv](Node<S>& n) {
    xn->accumulate(
        Mat<S>(n.grad.array() * (S(1) - yv->array().square())));
  });
}

template <class S>
Var<S> relu(const Var<S>& x) {
  auto xn = x.node();
  return detail::make<S>(Mat<S>(x.value().cwiseMax(S(0))), {x},
                         [xn](Node<S>& n) {
                           xn->accumulate(Mat<S>(
                               (xn->value.array() > S(0))
                                   .select(n.grad.array(), S(0))
                                   .matrix()));
                         });
}

template <class S>
Var<S> abs_(const Var<S>& x) {
  auto xn = x.node();
  return detail::make<S>(Mat<S>(x.value().cwiseAbs()), {x}, [xn](Node<S>& n) {
    xn->accumulate(Mat<S>(n.grad.cwiseProduct(xn->value.cwiseSign())));
  });
}

// row-wise softmax; `logit_bias` (possibly empty) is added before the softmax,
// with -1e9 entries marking masked positions
template <class S>
Var<S> softmax_rows(const Var<S>& x, const Mat<S>& logit_bias = Mat<S>()) {
  auto xn = x.node();
  Mat<S> z = x.value();
  if (logit_bias.size() != 0) {
    require(logit_bias.rows() == z.rows() && logit_bias.cols() == z.cols(),
            "softmax_rows: bias shape mismatch");
    z += logit_bias;
  }
  Mat<S> y(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const S m = z.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (z.row(i).array() - m).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  auto yv = std::make_shared<Mat<S>>(y);
  return detail::make<S>(std::move(y), {x}, [xn, yv](Node<S>& n) {
    Mat<S> g(n.grad.rows(), n.grad.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const S dot = n.grad.row(i).dot(yv->row(i));
      g.row(i) = ((n.grad.row(i).array() - dot) * yv->row(i).array()).matrix();
    }
    xn->accumulate(g);
  });
}

template <class S>
Var<S> layer_norm_rows(const Var<S>& x, const Var<S>& gain, const Var<S>& bias,
                       S eps = S(1e-6)) {
  require(gain.rows() == 1 && gain.cols() == x.cols(), "layer_norm: bad gain");
  require(bias.rows() == 1 && bias.cols() == x.cols(), "layer_norm: bad bias");
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  const Eigen::Index T = x.rows(), C = x.cols();
  Mat<S> xhat(T, C);
  Vec<S> inv_std(T);
  for (Eigen::Index i = 0; i < T; ++i) {
    const S mu = x.value().row(i).mean();
    const S var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = S(1) / std::sqrt(var + eps);
    xhat.row(i) = ((x.value().row(i).array() - mu) * inv_std(i)).matrix();
  }
  Mat<S> y(T, C);
  for (Eigen::Index i = 0; i < T; ++i)
    y.row(i) = (xhat.row(i).array() * gain.value().row(0).array()).matrix() +
               bias.value().row(0);
  auto xh = std::make_shared<Mat<S>>(std::move(xhat));
  auto is = std::make_shared<Vec<S>>(std::move(inv_std));
  return detail::make<S>(std::move(y), {x, gain, bias},
                         [xn, gn, bn, xh, is, C](Node<S>& n) {
    if (gn->requires_grad)
      gn->accumulate(Mat<S>(n.grad.cwiseProduct(*xh).colwise().sum()));
    if (bn->requires_grad) bn->accumulate(Mat<S>(n.grad.colwise().sum()));
    if (xn->requires_grad) {
      Mat<S> g(n.grad.rows(), C);
      for (Eigen::Index i = 0; i < n.grad.rows(); ++i) {
        Eigen::Array<S, 1, Eigen::Dynamic> dxh =
            n.grad.row(i).array() * gn->value.row(0).array();
        const S m1 = dxh.mean();
        const S m2 = (dxh * xh->row(i).array()).mean();
        g.row(i) =
            (((dxh - m1) - xh->row(i).array() * m2) * (*is)(i)).matrix();
      }
      xn->accumulate(g);
    }
  });
}

// ---- reductions -----------------------------------------------------------

template <class S>
Var<S> sum_all(const Var<S>& x) {
  auto xn = x.node();
  Mat<S> y(1, 1);
  y(0, 0) = x.value().sum();
  return detail::make<S>(std::move(y), {x}, [xn](Node<S>& n) {
    xn->accumulate(Mat<S>(Mat<S>::Constant(xn->value.rows(), xn->value.cols(),
                                           n.grad(0, 0))));
  });
}

template <class S>
Var<S> mean_all(const Var<S>& x) {
  return scale(sum_all(x), S(1) / S(x.rows() * x.cols()));
}

// column-wise max over rows -> 1 x C (time max-pool)
template <class S>
Var<S> colwise_max(const Var<S>& x) {
  require(x.rows() >= 1, "colwise_max: empty input");
  auto xn = x.node();
  const Eigen::Index C = x.cols();
  Mat<S> y(1, C);
  std::vector<Eigen::Index> arg(static_cast<size_t>(C), 0);
  for (Eigen::Index j = 0; j < C; ++j) {
    Eigen::Index r = 0;
    y(0, j) = x.value().col(j).maxCoeff(&r);
    arg[size_t(j)] = r;
  }
  return detail::make<S>(std::move(y), {x}, [xn, arg](Node<S>& n) {
    Mat<S> g = Mat<S>::Zero(xn->value.rows(), xn->value.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      g(arg[size_t(j)], j) = n.grad(0, j);
    xn->accumulate(g);
  });
}

// cross entropy from raw logits (1 x C) against an integer label -> 1 x 1
template <class S>
Var<S> cross_entropy_logits(const Var<S>& logits, int label) {
  require(logits.rows() == 1, "cross_entropy_logits: expect a single row");
  if (label < 0 || label >= logits.cols())
    throw InvalidLabel("cross_entropy_logits: label out of range");
  auto ln = logits.node();
  const S m = logits.value().row(0).maxCoeff();
  Eigen::Array<S, 1, Eigen::Dynamic> e =
      (logits.value().row(0).array() - m).exp();
  const S lse = m + std::log(e.sum());
  Mat<S> y(1, 1);
  y(0, 0) = lse - logits.value()(0, label);
  Eigen::RowVector<S, Eigen::Dynamic> p = (e / e.sum()).matrix();
  return detail::make<S>(std::move(y), {logits}, [ln, p, label](Node<S>& n) {
    Mat<S> g = p * n.grad(0, 0);
    g(0, label) -= n.grad(0, 0);
    ln->accumulate(g);
  });
}

// normalize every row to unit L2 norm
template <class S>
Var<S> l2_normalize_rows(const Var<S>& x, S eps = S(1e-12)) {
  auto xn = x.node();
  Vec<S> norms(x.rows());
  Mat<S> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    norms(i) = std::max(x.value().row(i).norm(), eps);
    y.row(i) = x.value().row(i) / norms(i);
  }
  auto yv = std::make_shared<Mat<S>>(y);
  return detail::make<S>(std::move(y), {x}, [xn, yv, norms](Node<S>& n) {
    Mat<S> g(n.grad.rows(), n.grad.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const S dot = n.grad.row(i).dot(yv->row(i));
      g.row(i) = (n.grad.row(i) - dot * yv->row(i)) / norms(i);
    }
    xn->accumulate(g);
  });
}

// ---- convolution helpers --------------------------------------------------

// same-padded time unfolding: x is T x C, output T x (k*C) with tap j holding
// x.row(t + j - k/2); k must be odd
template <class S>
Var<S> unfold_rows(const Var<S>& x, int k) {
  require(k % 2 == 1, "unfold_rows: kernel must be odd");
  auto xn = x.node();
  const Eigen::Index T = x.rows(), C = x.cols();
  const int pad = k / 2;
  Mat<S> y = Mat<S>::Zero(T, Eigen::Index(k) * C);
  for (Eigen::Index t = 0; t < T; ++t)
    for (int j = 0; j < k; ++j) {
      const Eigen::Index s = t + j - pad;
      if (s >= 0 && s < T) y.block(t, Eigen::Index(j) * C, 1, C) = x.value().row(s);
    }
  return detail::make<S>(std::move(y), {x}, [xn, k, pad](Node<S>& n) {
    const Eigen::Index T = xn->value.rows(), C = xn->value.cols();
    Mat<S> g = Mat<S>::Zero(T, C);
    for (Eigen::Index t = 0; t < T; ++t)
      for (int j = 0; j < k; ++j) {
        const Eigen::Index s = t + j - pad;
        if (s >= 0 && s < T)
          g.row(s) += n.grad.block(t, Eigen::Index(j) * C, 1, C);
      }
    xn->accumulate(g);
  });
}

// 1D transposed convolution along time; x is T x Cin, w is (k*Cin) x Cout with
// tap j at w.middleRows(j*Cin, Cin); output (T-1)*stride + k rows
template <class S>
Var<S> conv_transpose_rows(const Var<S>& x, const Var<S>& w, int stride, int k) {
  require(stride >= 1 && k >= 1, "conv_transpose_rows: bad geometry");
  require(w.rows() == Eigen::Index(k) * x.cols(), "conv_transpose_rows: weight shape");
  auto xn = x.node(), wn = w.node();
  const Eigen::Index T = x.rows(), Cin = x.cols(), Cout = w.cols();
  const Eigen::Index To = (T - 1) * stride + k;
  Mat<S> y = Mat<S>::Zero(To, Cout);
  for (Eigen::Index t = 0; t < T; ++t)
    for (int j = 0; j < k; ++j)
      y.row(t * stride + j) +=
          x.value().row(t) * w.value().middleRows(Eigen::Index(j) * Cin, Cin);
  return detail::make<S>(std::move(y), {x, w},
                         [xn, wn, stride, k, Cin](Node<S>& n) {
    const Eigen::Index T = xn->value.rows();
    if (xn->requires_grad) {
      Mat<S> gx = Mat<S>::Zero(T, Cin);
      for (Eigen::Index t = 0; t < T; ++t)
        for (int j = 0; j < k; ++j)
          gx.row(t) += n.grad.row(t * stride + j) *
                       wn->value.middleRows(Eigen::Index(j) * Cin, Cin).transpose();
      xn->accumulate(gx);
    }
    if (wn->requires_grad) {
      Mat<S> gw = Mat<S>::Zero(wn->value.rows(), wn->value.cols());
      for (Eigen::Index t = 0; t < T; ++t)
        for (int j = 0; j < k; ++j)
          gw.middleRows(Eigen::Index(j) * Cin, Cin) +=
              xn->value.row(t).transpose() * n.grad.row(t * stride + j);
      wn->accumulate(gw);
    }
  });
}

// ---- backward pass --------------------------------------------------------

template <class S>
void backward(const Var<S>& root) {
  require(root.rows() == 1 && root.cols() == 1, "backward: root must be scalar");
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  // iterative post-order DFS over parents
  std::vector<std::pair<Node<S>*, size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad = Mat<S>::Constant(1, 1, S(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backprop && n->grad.size() != 0) n->backprop(*n);
  }
}

}  // namespace hpm::ag

#endif  // HPM_GRAPH_HPP
