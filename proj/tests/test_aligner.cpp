#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hpm/aligner.hpp"

using namespace hpm;

namespace {

// (sr, hs, fps) triples realizing the tested frame ratios
struct RatioCase {
  int sr, hs;
  double fps;
  double r;
};

const std::vector<RatioCase>& ratio_cases() {
  static const std::vector<RatioCase> cases = {
      {16000, 400, 20.0, 2.0},
      {12000, 200, 20.0, 3.0},
      {16000, 200, 20.0, 4.0},
      {22050, 256, 20.0, 4.306640625},
  };
  return cases;
}

Config cfg_for(const RatioCase& rc) {
  Config cfg;
  cfg.dim = 8;
  cfg.fft_hidden = 16;
  cfg.encoder_heads = 2;
  cfg.aligner_heads = 2;
  cfg.sr = rc.sr;
  cfg.hop = rc.hs;
  cfg.fps = rc.fps;
  return cfg;
}

}  // namespace

TEST_CASE("frame_ratio arithmetic and rounding") {
  const auto fr = frame_ratio(22050, 256, 20.0);
  CHECK(fr.r == doctest::Approx(4.306640625).epsilon(1e-12));
  CHECK(fr.n == 4);
  CHECK(frame_ratio(16000, 200, 20.0).r == doctest::Approx(4.0));
  CHECK_THROWS_AS(frame_ratio(0, 256, 20.0), InvalidConfig);
  CHECK_THROWS_AS(frame_ratio(22050, -1, 20.0), InvalidConfig);
  CHECK_THROWS_AS(frame_ratio(22050, 256, 0.0), InvalidConfig);
}

TEST_CASE("expansion length contract: all T_v in [1,64] for four ratios") {
  for (const auto& rc : ratio_cases()) {
    nn::ParamStore<Real> ps;
    Rng rng(7);
    DurationAligner<Real> da(ps, rng, cfg_for(rc));
    CHECK(da.ratio.r == doctest::Approx(rc.r).epsilon(1e-12));
    for (int tv = 1; tv <= 64; ++tv) {
      RMat x(tv, 8);
      Rng xr(100 + tv);
      xr.fill_normal(x, 1.0);
      auto fused = ag::Var<Real>::leaf(x, false);
      // inference: round(r * T_v) frames exactly
      auto inf = da.expand(fused);
      CHECK(inf.rows() == Eigen::Index(std::llround(rc.r * tv)));
      CHECK(inf.cols() == 8);
      // training: teacher length honored exactly
      const Eigen::Index teacher = std::max<Eigen::Index>(1, tv * 3 - 1);
      CHECK(da.expand(fused, teacher).rows() == teacher);
    }
  }
}

TEST_CASE("duplicate expansion repeats each frame n times") {
  const auto rc = ratio_cases()[2];  // r = 4 exactly
  Config cfg = cfg_for(rc);
  cfg.aligner_expansion = "duplicate";
  nn::ParamStore<Real> ps;
  Rng rng(9);
  DurationAligner<Real> da(ps, rng, cfg);
  RMat x(3, 8);
  rng.fill_normal(x, 1.0);
  auto fused = ag::Var<Real>::leaf(x, false);
  auto y = da.expand(fused);
  REQUIRE(y.rows() == 12);
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 4; ++k)
      CHECK((y.value().row(4 * t + k) - x.row(t)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("alignment weights are row-stochastic and mask-aware") {
  const auto rc = ratio_cases()[3];
  nn::ParamStore<Real> ps;
  Rng rng(11);
  DurationAligner<Real> da(ps, rng, cfg_for(rc));
  const int tv = 5, L = 7, D = 8;
  RMat lips_m(tv, D), pho_m(L, D);
  rng.fill_normal(lips_m, 1.0);
  rng.fill_normal(pho_m, 1.0);
  auto lips = ag::Var<Real>::leaf(lips_m, false);
  auto phonemes = ag::Var<Real>::leaf(pho_m, false);
  BoolVec mask(L, true);
  mask[2] = false;
  mask[6] = false;
  auto out = da.align(lips, phonemes, mask);
  CHECK(out.context.rows() == tv);
  CHECK(out.context.cols() == D);
  for (const auto& w : out.weights) {
    REQUIRE(w.rows() == tv);
    REQUIRE(w.cols() == L);
    for (Eigen::Index i = 0; i < tv; ++i) {
      CHECK(w.value().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(w.value().row(i).minCoeff() >= 0.0);
      CHECK(w.value()(i, 2) == 0.0);  // exactly zero, not merely small
      CHECK(w.value()(i, 6) == 0.0);
    }
  }
}

TEST_CASE("expand rejects nonpositive targets and empty input") {
  const auto rc = ratio_cases()[0];
  nn::ParamStore<Real> ps;
  Rng rng(13);
  DurationAligner<Real> da(ps, rng, cfg_for(rc));
  RMat x(2, 8);
  rng.fill_normal(x, 1.0);
  auto fused = ag::Var<Real>::leaf(x, false);
  CHECK_THROWS_AS(da.expand(fused, 0), InvalidConfig);
  CHECK_THROWS_AS(da.expand(fused, -3), InvalidConfig);
}
