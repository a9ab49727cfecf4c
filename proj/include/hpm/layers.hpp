#ifndef HPM_LAYERS_HPP
#define HPM_LAYERS_HPP

#include "hpm/graph.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace hpm::ag {

// geometry for a 3D convolution over (time, height, width) with Cin channels;
// time is stride-1 same-padded, spatial dims are strided with symmetric pad
struct Conv3dGeom {
  int H = 0, W = 0, Cin = 1;
  int kt = 3, kh = 3, kw = 3;
  int sh = 2, sw = 2;
  int out_h() const { return (H + 2 * (kh / 2) - kh) / sh + 1; }
  int out_w() const { return (W + 2 * (kw / 2) - kw) / sw + 1; }
  int taps() const { return kt * kh * kw * Cin; }
};

// x: T x (H*W*Cin) with element ((h*W + w)*Cin + c); w: taps x Cout;
// output: T x (Ho*Wo*Cout)
template <class S>
Var<S> conv3d(const Var<S>& x, const Var<S>& w, const Conv3dGeom& g) {
  require(x.cols() == Eigen::Index(g.H) * g.W * g.Cin, "conv3d: input width");
  require(w.rows() == g.taps(), "conv3d: weight shape");
  auto xn = x.node(), wn = w.node();
  const int T = int(x.rows()), Ho = g.out_h(), Wo = g.out_w();
  const Eigen::Index Cout = w.cols();
  const int pt = g.kt / 2, ph = g.kh / 2, pw = g.kw / 2;
  const Eigen::Index P = Eigen::Index(T) * Ho * Wo;
  // im2col with -1 marking zero-padded taps
  auto index = std::make_shared<std::vector<int64_t>>(size_t(P) * g.taps(), -1);
  Mat<S> cols = Mat<S>::Zero(P, g.taps());
  Eigen::Index p = 0;
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j, ++p) {
        Eigen::Index tap = 0;
        for (int dt = 0; dt < g.kt; ++dt) {
          const int ts = t + dt - pt;
          for (int dh = 0; dh < g.kh; ++dh) {
            const int hs = i * g.sh + dh - ph;
            for (int dw = 0; dw < g.kw; ++dw) {
              const int ws = j * g.sw + dw - pw;
              for (int c = 0; c < g.Cin; ++c, ++tap) {
                if (ts < 0 || ts >= T || hs < 0 || hs >= g.H || ws < 0 ||
                    ws >= g.W)
                  continue;
                const int64_t src =
                    int64_t(ts) * x.cols() + (int64_t(hs) * g.W + ws) * g.Cin + c;
                (*index)[size_t(p) * g.taps() + size_t(tap)] = src;
                cols(p, tap) = x.value()(ts, (Eigen::Index(hs) * g.W + ws) * g.Cin + c);
              }
            }
          }
        }
      }
  Mat<S> big = cols * w.value();  // P x Cout
  Mat<S> y(T, Eigen::Index(Ho) * Wo * Cout);
  for (Eigen::Index q = 0; q < P; ++q) {
    const Eigen::Index t = q / (Ho * Wo), s = q % (Ho * Wo);
    y.block(t, s * Cout, 1, Cout) = big.row(q);
  }
  auto cols_keep = std::make_shared<Mat<S>>(std::move(cols));
  const int taps = g.taps();
  return detail::make<S>(std::move(y), {x, w},
                         [xn, wn, cols_keep, index, taps, Ho, Wo, Cout](Node<S>& n) {
    const Eigen::Index P = cols_keep->rows();
    Mat<S> gbig(P, Cout);
    for (Eigen::Index q = 0; q < P; ++q) {
      const Eigen::Index t = q / (Ho * Wo), s = q % (Ho * Wo);
      gbig.row(q) = n.grad.block(t, s * Cout, 1, Cout);
    }
    if (wn->requires_grad)
      wn->accumulate(Mat<S>(cols_keep->transpose() * gbig));
    if (xn->requires_grad) {
      Mat<S> gcols = gbig * wn->value.transpose();  // P x taps
      Mat<S> gx = Mat<S>::Zero(xn->value.rows(), xn->value.cols());
      S* gxd = gx.data();
      const Eigen::Index C = xn->value.cols();
      for (Eigen::Index q = 0; q < P; ++q)
        for (int tap = 0; tap < taps; ++tap) {
          const int64_t src = (*index)[size_t(q) * taps + size_t(tap)];
          if (src >= 0) {
            const Eigen::Index r = src / C, c = src % C;
            gx(r, c) += gcols(q, tap);
          }
        }
      (void)gxd;
      xn->accumulate(gx);
    }
  });
}

}  // namespace hpm::ag

namespace hpm::nn {

using ag::Var;

// named parameter registry; creation order is the checkpoint order
template <class S>
class ParamStore {
 public:
  Var<S> create(const std::string& name, Mat<S> init) {
    auto v = Var<S>::leaf(std::move(init), true);
    names_.push_back(name);
    vars_.push_back(v);
    return v;
  }
  size_t size() const { return vars_.size(); }
  const std::string& name(size_t i) const { return names_[i]; }
  Var<S>& at(size_t i) { return vars_[i]; }
  Var<S>* find(const std::string& name) {
    for (size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return &vars_[i];
    return nullptr;
  }
  void zero_grads() {
    for (auto& v : vars_)
      if (v.grad().size() != 0) v.zero_grad();
  }
  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& v : vars_) n += v.rows() * v.cols();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Var<S>> vars_;
};

template <class S>
Mat<S> xavier(Rng& rng, Eigen::Index in, Eigen::Index out) {
  Mat<S> m(in, out);
  const double limit = std::sqrt(6.0 / double(in + out));
  rng.fill_uniform(m, -limit, limit);
  return m;
}

template <class S>
struct Linear {
  Var<S> w, b;
  Linear() = default;
  Linear(ParamStore<S>& ps, const std::string& name, Rng& rng, int in, int out)
      : w(ps.create(name + ".w", xavier<S>(rng, in, out))),
        b(ps.create(name + ".b", Mat<S>::Zero(1, out))) {}
  Var<S> operator()(const Var<S>& x) const {
    return ag::add_rowvec(ag::matmul(x, w), b);
  }
};

template <class S>
struct LayerNorm {
  Var<S> g, b;
  LayerNorm() = default;
  LayerNorm(ParamStore<S>& ps, const std::string& name, int dim) {
    ParamStore<S>& p = ps;
    g = p.create(name + ".g", Mat<S>::Ones(1, dim));
    b = p.create(name + ".b", Mat<S>::Zero(1, dim));
  }
  Var<S> operator()(const Var<S>& x) const {
    return ag::layer_norm_rows(x, g, b);
  }
};

template <class S>
struct Conv1d {
  int k = 3;
  Var<S> w, b;
  Conv1d() = default;
  Conv1d(ParamStore<S>& ps, const std::string& name, Rng& rng, int in, int out,
         int kernel, bool zero_init = false)
      : k(kernel),
        w(ps.create(name + ".w", zero_init
                                     ? Mat<S>::Zero(kernel * in, out)
                                     : xavier<S>(rng, kernel * in, out))),
        b(ps.create(name + ".b", Mat<S>::Zero(1, out))) {}
  Var<S> operator()(const Var<S>& x) const {
    return ag::add_rowvec(ag::matmul(ag::unfold_rows(x, k), w), b);
  }
};

template <class S>
struct ConvTranspose1d {
  int stride = 3, k = 10;
  Var<S> w, b;
  ConvTranspose1d() = default;
  ConvTranspose1d(ParamStore<S>& ps, const std::string& name, Rng& rng, int in,
                  int out, int stride_, int kernel)
      : stride(stride_),
        k(kernel),
        w(ps.create(name + ".w", xavier<S>(rng, kernel * in, out))),
        b(ps.create(name + ".b", Mat<S>::Zero(1, out))) {}
  Var<S> operator()(const Var<S>& x) const {
    return ag::add_rowvec(ag::conv_transpose_rows(x, w, stride, k), b);
  }
};

template <class S>
struct Embedding {
  Var<S> table;
  Embedding() = default;
  Embedding(ParamStore<S>& ps, const std::string& name, Rng& rng, int n, int dim) {
    Mat<S> init(n, dim);
    rng.fill_normal(init, 0.02);
    table = ps.create(name + ".table", std::move(init));
  }
  Var<S> operator()(const std::vector<int>& ids) const {
    return ag::gather_rows(table, ids);
  }
};

template <class S>
Mat<S> sinusoidal_positions(Eigen::Index T, Eigen::Index D) {
  Mat<S> pe(T, D);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < D; ++i) {
      const double angle =
          double(t) / std::pow(10000.0, 2.0 * double(i / 2) / double(D));
      pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

template <class S>
Var<S> add_positions(const Var<S>& x) {
  return ag::add(x, ag::constant<S>(sinusoidal_positions<S>(x.rows(), x.cols())));
}

template <class S>
struct AttentionOut {
  Var<S> context;                 // Tq x D
  std::vector<Var<S>> weights;    // per head, Tq x Tk
};

// scaled dot-product multi-head attention with per-head projections and a
// final learned mix of the concatenated heads
template <class S>
struct MultiHeadAttention {
  int heads = 8;
  std::vector<Linear<S>> q, k, v;
  Linear<S> out;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<S>& ps, const std::string& name, Rng& rng,
                     int dim, int n_heads)
      : heads(n_heads) {
    if (dim % n_heads != 0)
      throw InvalidConfig("attention: head count must divide model width");
    const int dk = dim / n_heads;
    for (int h = 0; h < n_heads; ++h) {
      const std::string p = name + ".h" + std::to_string(h);
      q.emplace_back(ps, p + ".q", rng, dim, dk);
      k.emplace_back(ps, p + ".k", rng, dim, dk);
      v.emplace_back(ps, p + ".v", rng, dim, dk);
    }
    out = Linear<S>(ps, name + ".out", rng, dim, dim);
  }

  // mask_bias: Tq x Tk additive logit bias (-1e9 at masked keys) or empty
  AttentionOut<S> operator()(const Var<S>& query, const Var<S>& keyval,
                             const Mat<S>& mask_bias = Mat<S>()) const {
    require(query.cols() == keyval.cols(), "attention: width mismatch");
    const S inv_sqrt = S(1) / std::sqrt(S(query.cols() / heads));
    AttentionOut<S> r;
    Var<S> cat;
    for (int h = 0; h < heads; ++h) {
      auto Q = q[h](query), K = k[h](keyval), V = v[h](keyval);
      auto w = ag::softmax_rows(ag::scale(ag::matmul_nt(Q, K), inv_sqrt),
                                mask_bias);
      r.weights.push_back(w);
      auto ctx = ag::matmul(w, V);
      cat = (h == 0) ? ctx : ag::concat_cols(cat, ctx);
    }
    r.context = out(cat);
    return r;
  }
};

// FastSpeech-style feed-forward transformer block: self-attention sublayer and
// a two-convolution sublayer, each with residual + layer norm
template <class S>
struct FftBlock {
  MultiHeadAttention<S> attn;
  LayerNorm<S> ln1, ln2;
  Conv1d<S> c1, c2;
  FftBlock() = default;
  FftBlock(ParamStore<S>& ps, const std::string& name, Rng& rng, int dim,
           int heads, int hidden, int kernel)
      : attn(ps, name + ".attn", rng, dim, heads),
        ln1(ps, name + ".ln1", dim),
        ln2(ps, name + ".ln2", dim),
        c1(ps, name + ".c1", rng, dim, hidden, kernel),
        c2(ps, name + ".c2", rng, hidden, dim, kernel) {}

  Var<S> operator()(const Var<S>& x, const Mat<S>& self_mask = Mat<S>()) const {
    auto a = attn(x, x, self_mask).context;
    auto h = ln1(ag::add(x, a));
    auto f = c2(ag::relu(c1(h)));
    return ln2(ag::add(h, f));
  }
};

// variance-predictor stack: (Conv1D k3 + ReLU + LayerNorm) x 2 + scalar linear
template <class S>
struct PredictorStack {
  Conv1d<S> c1, c2;
  LayerNorm<S> ln1, ln2;
  Linear<S> proj;
  PredictorStack() = default;
  PredictorStack(ParamStore<S>& ps, const std::string& name, Rng& rng, int dim)
      : c1(ps, name + ".c1", rng, dim, dim, 3),
        c2(ps, name + ".c2", rng, dim, dim, 3),
        ln1(ps, name + ".ln1", dim),
        ln2(ps, name + ".ln2", dim),
        proj(ps, name + ".proj", rng, dim, 1) {}
  Var<S> operator()(const Var<S>& x) const {
    auto h = ln1(ag::relu(c1(x)));
    h = ln2(ag::relu(c2(h)));
    return proj(h);  // T x 1
  }
};

// 5-layer residual refiner over mel frames; tanh on all but the last
// convolution, final layer zero-initialized so refinement starts at identity
template <class S>
struct Postnet {
  std::vector<Conv1d<S>> convs;
  Postnet() = default;
  Postnet(ParamStore<S>& ps, const std::string& name, Rng& rng, int mel_bins,
          int channels) {
    convs.emplace_back(ps, name + ".c0", rng, mel_bins, channels, 5);
    for (int i = 1; i < 4; ++i)
      convs.emplace_back(ps, name + ".c" + std::to_string(i), rng, channels,
                         channels, 5);
    convs.emplace_back(ps, name + ".c4", rng, channels, mel_bins, 5, true);
  }
  Var<S> operator()(const Var<S>& mel) const {
    auto h = mel;
    for (size_t i = 0; i < convs.size(); ++i) {
      h = convs[i](h);
      if (i + 1 < convs.size()) h = ag::tanh_(h);
    }
    return h;
  }
};

// two-layer 3D convolution stem over lip patches, global spatial average
// pool, then a linear map to the model width
template <class S>
struct LipStem {
  ag::Conv3dGeom g1, g2;
  Var<S> w1, w2;
  Linear<S> proj;
  int c1 = 8, c2 = 16;
  LipStem() = default;
  LipStem(ParamStore<S>& ps, const std::string& name, Rng& rng, int H, int W,
          int Cin, int dim) {
    g1 = {H, W, Cin, 3, 5, 5, 2, 2};
    g2 = {g1.out_h(), g1.out_w(), c1, 3, 3, 3, 2, 2};
    w1 = ps.create(name + ".w1", xavier<S>(rng, g1.taps(), c1));
    w2 = ps.create(name + ".w2", xavier<S>(rng, g2.taps(), c2));
    proj = Linear<S>(ps, name + ".proj", rng, c2, dim);
  }
  Var<S> operator()(const Var<S>& patches) const {
    auto h1 = ag::relu(ag::conv3d(patches, w1, g1));
    auto h2 = ag::relu(ag::conv3d(h1, w2, g2));
    // global spatial average pool: T x (Ho*Wo*C) -> T x C
    const int spatial = g2.out_h() * g2.out_w();
    Mat<S> pool = Mat<S>::Zero(Eigen::Index(spatial) * c2, c2);
    for (int s = 0; s < spatial; ++s)
      for (int c = 0; c < c2; ++c) pool(Eigen::Index(s) * c2 + c, c) = S(1) / spatial;
    auto pooled = ag::matmul(h2, ag::constant<S>(std::move(pool)));
    return proj(pooled);
  }
};

}  // namespace hpm::nn

#endif  // HPM_LAYERS_HPP
