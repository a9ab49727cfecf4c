#ifndef HPM_PROSODY_HPP
#define HPM_PROSODY_HPP

#include "hpm/config.hpp"
#include "hpm/layers.hpp"

namespace hpm {

namespace ag {

// additive (Bahdanau-form) attention scores: s(i,k) = w . tanh(P_i + R_k + b)
// P: Tq x D (projected queries), R: Tk x D (projected memory), b: 1 x D,
// w: D x 1; the tanh activations are recomputed in the backward pass
template <class S>
Var<S> additive_scores(const Var<S>& P, const Var<S>& R, const Var<S>& b,
                       const Var<S>& w) {
  require(P.cols() == R.cols() && b.cols() == P.cols() && w.rows() == P.cols(),
          "additive_scores: width mismatch");
  auto pn = P.node(), rn = R.node(), bn = b.node(), wn = w.node();
  const Eigen::Index Tq = P.rows(), Tk = R.rows(), D = P.cols();
  Mat<S> scores(Tq, Tk);
  Eigen::RowVector<S, Eigen::Dynamic> tmp(D);
  for (Eigen::Index i = 0; i < Tq; ++i)
    for (Eigen::Index k = 0; k < Tk; ++k) {
      tmp = (P.value().row(i) + R.value().row(k) + b.value().row(0))
                .array()
                .tanh()
                .matrix();
      scores(i, k) = tmp.dot(w.value().col(0));
    }
  return detail::make<S>(std::move(scores), {P, R, b, w},
                         [pn, rn, bn, wn, D](Node<S>& n) {
    const Eigen::Index Tq = pn->value.rows(), Tk = rn->value.rows();
    Mat<S> gP = Mat<S>::Zero(Tq, D), gR = Mat<S>::Zero(Tk, D);
    Mat<S> gb = Mat<S>::Zero(1, D), gw = Mat<S>::Zero(D, 1);
    Eigen::Array<S, 1, Eigen::Dynamic> t(D), common(D);
    for (Eigen::Index i = 0; i < Tq; ++i)
      for (Eigen::Index k = 0; k < Tk; ++k) {
        const S g = n.grad(i, k);
        if (g == S(0)) continue;
        t = (pn->value.row(i) + rn->value.row(k) + bn->value.row(0))
                .array()
                .tanh();
        common = g * (S(1) - t.square()) * wn->value.col(0).transpose().array();
        gP.row(i) += common.matrix();
        gR.row(k) += common.matrix();
        gb.row(0) += common.matrix();
        gw.col(0) += (g * t).matrix().transpose();
      }
    if (pn->requires_grad) pn->accumulate(gP);
    if (rn->requires_grad) rn->accumulate(gR);
    if (bn->requires_grad) bn->accumulate(gb);
    if (wn->requires_grad) wn->accumulate(gw);
  });
}

}  // namespace ag

template <class S>
struct AdditiveAttention {
  ag::Var<S> Wq, Um, b, w;
  AdditiveAttention() = default;
  AdditiveAttention(nn::ParamStore<S>& ps, const std::string& name, Rng& rng,
                    int dim) {
    Wq = ps.create(name + ".Wq", nn::xavier<S>(rng, dim, dim));
    Um = ps.create(name + ".Um", nn::xavier<S>(rng, dim, dim));
    b = ps.create(name + ".b", Mat<S>::Zero(1, dim));
    w = ps.create(name + ".w", nn::xavier<S>(rng, dim, 1));
  }

  struct Out {
    ag::Var<S> context;  // Tq x D
    ag::Var<S> weights;  // Tq x Tk
  };

  Out operator()(const ag::Var<S>& queries, const ag::Var<S>& memory) const {
    require(queries.cols() == memory.cols(), "additive attention: width mismatch");
    auto scores = ag::additive_scores(ag::matmul(queries, Wq),
                                      ag::matmul(memory, Um), b, w);
    auto weights = ag::softmax_rows(scores);
    return {ag::matmul(weights, memory), weights};
  }
};

// Predicts frame-level energy from arousal context and pitch from valence
// context (speaker-augmented), and assembles the aggregated prosody feature.
template <class S>
struct ProsodyAdaptor {
  bool use_arousal = true, use_valence = true;
  AdditiveAttention<S> arousal_attn, valence_attn;
  nn::PredictorStack<S> energy_predictor, pitch_predictor;
  nn::Linear<S> speaker_mix;  // (2*dim -> dim) before the pitch predictor

  ProsodyAdaptor() = default;
  ProsodyAdaptor(nn::ParamStore<S>& ps, Rng& rng, const Config& cfg)
      : use_arousal(cfg.use_arousal),
        use_valence(cfg.use_valence),
        arousal_attn(ps, "adaptor.arousal", rng, cfg.dim),
        valence_attn(ps, "adaptor.valence", rng, cfg.dim),
        energy_predictor(ps, "adaptor.energy", rng, cfg.dim),
        pitch_predictor(ps, "adaptor.pitch", rng, cfg.dim),
        speaker_mix(ps, "adaptor.spk_mix", rng, 2 * cfg.dim, cfg.dim) {}

  // arousal track (resampled to T_y) attends over M_pho,lip rows
  ag::Var<S> arousal_context(const ag::Var<S>& arousal,
                             const ag::Var<S>& memory) const {
    return arousal_attn(arousal, memory).context;
  }

  ag::Var<S> valence_context(const ag::Var<S>& valence,
                             const ag::Var<S>& memory) const {
    return valence_attn(valence, memory).context;
  }

  ag::Var<S> predict_energy(const ag::Var<S>& ctx) const {
    return energy_predictor(ctx);  // T_y x 1
  }

  ag::Var<S> predict_pitch(const ag::Var<S>& ctx, const ag::Var<S>& speaker) const {
    require(speaker.rows() == 1, "predict_pitch: speaker must be a single row");
    std::vector<int> tile(size_t(ctx.rows()), 0);
    auto spk = ag::gather_rows(speaker, tile);
    auto mixed = speaker_mix(ag::concat_cols(ctx, spk));
    return pitch_predictor(mixed);
  }

  // row-wise [arousal ; valence] concatenation, width 2*dim
  static ag::Var<S> assemble_prosody(const ag::Var<S>& arousal_ctx,
                                     const ag::Var<S>& valence_ctx) {
    if (arousal_ctx.rows() != valence_ctx.rows())
      throw ShapeError("assemble_prosody: length mismatch");
    return ag::concat_cols(arousal_ctx, valence_ctx);
  }
};

}  // namespace hpm

#endif  // HPM_PROSODY_HPP
