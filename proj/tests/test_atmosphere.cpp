#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hpm/atmosphere.hpp"

using namespace hpm;

namespace {

Config micro_config() {
  Config cfg;
  cfg.dim = 6;
  cfg.scene_dim = 5;
  cfg.n_emotions = 8;
  return cfg;
}

// scalar-loop reference for scaled dot-product attention with scene values
RMat fuse_oracle(const RMat& prosody, const RMat& scene, const RMat& Wq,
                 const RMat& bq, int dim) {
  const RMat q = (prosody * Wq).rowwise() + bq.row(0);
  const double inv = 1.0 / std::sqrt(double(dim));
  RMat out = RMat::Zero(prosody.rows(), scene.cols());
  for (Eigen::Index i = 0; i < prosody.rows(); ++i) {
    RVec s(scene.rows());
    for (Eigen::Index k = 0; k < scene.rows(); ++k)
      s(k) = inv * q.row(i).dot(scene.row(k));
    const double m = s.maxCoeff();
    RVec e = (s.array() - m).exp();
    e /= e.sum();
    for (Eigen::Index k = 0; k < scene.rows(); ++k)
      out.row(i) += e(k) * scene.row(k);
  }
  return out;
}

}  // namespace

TEST_CASE("fuse_scene matches the scalar-loop oracle") {
  const Config cfg = micro_config();
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    nn::ParamStore<Real> ps;
    Rng prng(200 + trial);
    AtmosphereBooster<Real> ab(ps, prng, cfg);
    const int Ty = 1 + rng.uniform_int(0, 6), Ts = 1 + rng.uniform_int(0, 4);
    RMat prosody(Ty, 2 * cfg.dim), scene(Ts, cfg.dim);
    rng.fill_normal(prosody, 1.0);
    rng.fill_normal(scene, 1.0);
    auto out = ab.fuse_scene(ag::Var<Real>::leaf(prosody, false),
                             ag::Var<Real>::leaf(scene, false));
    const RMat oracle =
        fuse_oracle(prosody, scene, ab.query_proj.w.value(),
                    ab.query_proj.b.value(), cfg.dim);
    CHECK((out.context.value() - oracle).cwiseAbs().maxCoeff() < 1e-9);
    for (Eigen::Index i = 0; i < Ty; ++i) {
      CHECK(out.weights.value().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(out.weights.value().row(i).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("identical scene rows receive uniform attention") {
  const Config cfg = micro_config();
  nn::ParamStore<Real> ps;
  Rng rng(33);
  AtmosphereBooster<Real> ab(ps, rng, cfg);
  RMat prosody(4, 2 * cfg.dim), scene(3, cfg.dim);
  rng.fill_normal(prosody, 1.0);
  RMat one_row(1, cfg.dim);
  rng.fill_normal(one_row, 1.0);
  for (int k = 0; k < 3; ++k) scene.row(k) = one_row.row(0);
  auto out = ab.fuse_scene(ag::Var<Real>::leaf(prosody, false),
                           ag::Var<Real>::leaf(scene, false));
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index k = 0; k < 3; ++k)
      CHECK(out.weights.value()(i, k) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("ingest_scene tiles single vectors and validates input") {
  const Config cfg = micro_config();
  nn::ParamStore<Real> ps;
  Rng rng(35);
  AtmosphereBooster<Real> ab(ps, rng, cfg);
  RMat scene(1, cfg.scene_dim);
  rng.fill_normal(scene, 1.0);
  auto v = ab.ingest_scene(scene);
  REQUIRE(v.rows() == AtmosphereBooster<Real>::kTileRows);
  for (Eigen::Index k = 1; k < v.rows(); ++k)
    CHECK((v.value().row(k) - v.value().row(0)).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(ab.ingest_scene(RMat()), MissingFeature);
  scene(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(ab.ingest_scene(scene), InvalidFeature);
}

TEST_CASE("predict_emotion is a column max-pool, invariant to row order") {
  const Config cfg = micro_config();
  nn::ParamStore<Real> ps;
  Rng rng(37);
  AtmosphereBooster<Real> ab(ps, rng, cfg);
  RMat fused(5, cfg.dim);
  rng.fill_normal(fused, 1.0);
  auto logits = ab.predict_emotion(ag::Var<Real>::leaf(fused, false));
  REQUIRE(logits.rows() == 1);
  REQUIRE(logits.cols() == cfg.n_emotions);

  // brute-force maxpool over the per-frame head outputs
  const RMat per_frame =
      (fused * ab.emotion_head.w.value()).rowwise() + ab.emotion_head.b.value().row(0);
  for (Eigen::Index c = 0; c < cfg.n_emotions; ++c)
    CHECK(logits.value()(0, c) == doctest::Approx(per_frame.col(c).maxCoeff()).epsilon(1e-12));

  // permuting rows leaves the pooled logits unchanged
  RMat perm(5, cfg.dim);
  const int order[5] = {3, 0, 4, 1, 2};
  for (int i = 0; i < 5; ++i) perm.row(i) = fused.row(order[i]);
  auto logits2 = ab.predict_emotion(ag::Var<Real>::leaf(perm, false));
  CHECK((logits.value() - logits2.value()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("strict attention mode requires matching lengths") {
  Config cfg = micro_config();
  cfg.booster_strict_paper_attention = true;
  nn::ParamStore<Real> ps;
  Rng rng(39);
  AtmosphereBooster<Real> ab(ps, rng, cfg);
  RMat prosody(4, 2 * cfg.dim), scene_ok(4, cfg.dim), scene_bad(3, cfg.dim);
  rng.fill_normal(prosody, 1.0);
  rng.fill_normal(scene_ok, 1.0);
  rng.fill_normal(scene_bad, 1.0);
  auto out = ab.fuse_scene(ag::Var<Real>::leaf(prosody, false),
                           ag::Var<Real>::leaf(scene_ok, false));
  CHECK(out.context.rows() == 4);
  CHECK(out.context.cols() == cfg.dim);
  CHECK_THROWS_AS(ab.fuse_scene(ag::Var<Real>::leaf(prosody, false),
                                ag::Var<Real>::leaf(scene_bad, false)),
                  ShapeError);
}

TEST_CASE("bypass projects prosody without an emotion head") {
  const Config cfg = micro_config();
  nn::ParamStore<Real> ps;
  Rng rng(41);
  AtmosphereBooster<Real> ab(ps, rng, cfg);
  RMat prosody(6, 2 * cfg.dim);
  rng.fill_normal(prosody, 1.0);
  auto ctx = ab.bypass(ag::Var<Real>::leaf(prosody, false));
  CHECK(ctx.rows() == 6);
  CHECK(ctx.cols() == cfg.dim);
}
