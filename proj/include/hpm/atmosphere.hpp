#ifndef HPM_ATMOSPHERE_HPP
#define HPM_ATMOSPHERE_HPP

#include "hpm/config.hpp"
#include "hpm/layers.hpp"

namespace hpm {

// Fuses global scene features with the prosody sequence via cross-modal
// attention and predicts a clip-level emotion distribution.
template <class S>
struct AtmosphereBooster {
  bool enabled = true;
  bool strict_paper_attention = false;
  int dim = 256;
  int n_emotions = 8;
  nn::Linear<S> scene_proj;    // D_s -> dim
  nn::Linear<S> query_proj;    // 2*dim -> dim
  nn::Linear<S> prosody_proj;  // 2*dim -> dim (strict mode and no-ab bypass)
  nn::Linear<S> emotion_head;  // dim -> C

  AtmosphereBooster() = default;
  AtmosphereBooster(nn::ParamStore<S>& ps, Rng& rng, const Config& cfg)
      : enabled(cfg.booster_enabled),
        strict_paper_attention(cfg.booster_strict_paper_attention),
        dim(cfg.dim),
        n_emotions(cfg.n_emotions),
        scene_proj(ps, "booster.scene_proj", rng, cfg.scene_dim, cfg.dim),
        query_proj(ps, "booster.query_proj", rng, 2 * cfg.dim, cfg.dim),
        prosody_proj(ps, "booster.prosody_proj", rng, 2 * cfg.dim, cfg.dim),
        emotion_head(ps, "booster.emotion_head", rng, cfg.dim, cfg.n_emotions) {}

  // single-vector scene files are tiled to this many rows before projection
  static constexpr int kTileRows = 8;

  ag::Var<S> ingest_scene(const RMat& scene_raw) const {
    if (scene_raw.rows() == 0) throw MissingFeature("ingest_scene: empty scene");
    if (!scene_raw.allFinite()) throw InvalidFeature("ingest_scene: non-finite");
    RMat tiled = scene_raw;
    if (tiled.rows() == 1) {
      tiled.resize(kTileRows, scene_raw.cols());
      for (int i = 0; i < kTileRows; ++i) tiled.row(i) = scene_raw.row(0);
    }
    return scene_proj(ag::constant<S>(tiled.template cast<S>()));
  }

  struct Fused {
    ag::Var<S> context;  // T_y x dim
    ag::Var<S> weights;  // T_y x T_s
  };

  // cross attention: prosody rows query the scene rows; scene rows are the
  // values (strict mode reproduces the printed form, which multiplies the
  // weights back onto the prosody feature and so requires T_s == T_y)
  Fused fuse_scene(const ag::Var<S>& prosody, const ag::Var<S>& scene) const {
    if (scene.rows() == 0) throw MissingFeature("fuse_scene: empty scene");
    auto q = query_proj(prosody);
    const S inv_sqrt = S(1) / std::sqrt(S(dim));
    auto weights = ag::softmax_rows(ag::scale(ag::matmul_nt(q, scene), inv_sqrt));
    if (strict_paper_attention) {
      if (scene.rows() != prosody.rows())
        throw ShapeError("fuse_scene: strict mode needs T_s == T_y");
      return {prosody_proj(ag::matmul(weights, prosody)), weights};
    }
    return {ag::matmul(weights, scene), weights};
  }

  // per-frame linear layer to C logits, then max-pool over time
  ag::Var<S> predict_emotion(const ag::Var<S>& fused) const {
    require(fused.rows() >= 1, "predict_emotion: empty input");
    return ag::colwise_max(emotion_head(fused));  // 1 x C
  }

  // bypass used by the no-ab ablation: prosody projection stands in for the
  // scene-fused context and the emotion head is unused
  ag::Var<S> bypass(const ag::Var<S>& prosody) const {
    return prosody_proj(prosody);
  }
};

template <class S>
Vec<S> softmax_vector(const Mat<S>& logits) {
  Vec<S> p = logits.row(0).transpose();
  const S m = p.maxCoeff();
  p = (p.array() - m).exp();
  p /= p.sum();
  return p;
}

}  // namespace hpm

#endif  // HPM_ATMOSPHERE_HPP
