#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hpm/metrics.hpp"

using namespace hpm;

namespace {

// exhaustive minimum total cost over all boundary-anchored monotone paths
double brute_force_dtw_total(const RMat& cost, int i, int j) {
  if (i == 0 && j == 0) return cost(0, 0);
  double best = std::numeric_limits<double>::infinity();
  if (i > 0 && j > 0) best = std::min(best, brute_force_dtw_total(cost, i - 1, j - 1));
  if (i > 0) best = std::min(best, brute_force_dtw_total(cost, i - 1, j));
  if (j > 0) best = std::min(best, brute_force_dtw_total(cost, i, j - 1));
  return best + cost(i, j);
}

RMat random_cepstra(Rng& rng, int t) {
  RMat c(t, 13);
  rng.fill_normal(c, 1.0);
  return c;
}

}  // namespace

TEST_CASE("to_cepstra: shape, flat-frame nulling, and a direct-sum oracle") {
  Rng rng(61);
  RMat mel(4, 80);
  rng.fill_normal(mel, 10.0);
  const RMat c = metrics::to_cepstra(mel);
  CHECK(c.rows() == 4);
  CHECK(c.cols() == 13);

  // constant across bins -> all energy in c0, which is excluded
  RMat flat = RMat::Constant(3, 80, -17.0);
  CHECK(metrics::to_cepstra(flat).cwiseAbs().maxCoeff() < 1e-10);

  // direct-summation DCT-II oracle
  const double db_to_ln = std::log(10.0) / 20.0;
  for (int k = 1; k <= 13; ++k) {
    double acc = 0.0;
    for (int n = 0; n < 80; ++n)
      acc += mel(1, n) * db_to_ln * std::cos(M_PI * k * (n + 0.5) / 80.0);
    CHECK(c(1, k - 1) == doctest::Approx(acc).epsilon(1e-9));
  }

  CHECK_THROWS_AS(metrics::to_cepstra(RMat()), EmptyInput);
  mel(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(metrics::to_cepstra(mel), InvalidFeature);
}

TEST_CASE("mcd identities and the analytic unit case") {
  Rng rng(63);
  const RMat a = random_cepstra(rng, 5), b = random_cepstra(rng, 5);
  CHECK(metrics::mcd(a, a) == 0.0);
  CHECK(metrics::mcd(a, b) == metrics::mcd(b, a));
  CHECK(metrics::mcd(a, b) >= 0.0);

  RMat u = RMat::Zero(1, 13), v = RMat::Zero(1, 13);
  v(0, 7) = 1.0;
  CHECK(metrics::mcd(u, v) ==
        doctest::Approx(10.0 / std::log(10.0) * std::sqrt(2.0)).epsilon(1e-12));

  // scalar-loop oracle on a random 4-frame pair
  const RMat x = random_cepstra(rng, 4), y = random_cepstra(rng, 4);
  double acc = 0.0;
  for (int t = 0; t < 4; ++t) {
    double s = 0.0;
    for (int k = 0; k < 13; ++k) s += (x(t, k) - y(t, k)) * (x(t, k) - y(t, k));
    acc += std::sqrt(s);
  }
  CHECK(metrics::mcd(x, y) ==
        doctest::Approx(10.0 / std::log(10.0) * std::sqrt(2.0) * acc / 4.0)
            .epsilon(1e-12));

  const RMat c = random_cepstra(rng, 6);
  CHECK_THROWS_AS(metrics::mcd(a, c), ShapeError);
}

TEST_CASE("mcd_dtw equals brute force for all length pairs up to 6") {
  Rng rng(65);
  for (int trial = 0; trial < 50; ++trial)
    for (int ta = 1; ta <= 6; ++ta)
      for (int tb = 1; tb <= 6; ++tb) {
        const RMat a = random_cepstra(rng, ta), b = random_cepstra(rng, tb);
        RMat cost(ta, tb);
        for (int i = 0; i < ta; ++i)
          for (int j = 0; j < tb; ++j)
            cost(i, j) =
                metrics::mcd_constant() * (a.row(i) - b.row(j)).norm();
        const double brute = brute_force_dtw_total(cost, ta - 1, tb - 1);
        const auto d = metrics::mcd_dtw(a, b);
        CHECK(d.total == doctest::Approx(brute).epsilon(1e-9));
        CHECK(d.value == doctest::Approx(d.total / d.path.size()).epsilon(1e-12));
      }
}

TEST_CASE("dtw path is boundary-anchored and monotone") {
  Rng rng(67);
  const RMat a = random_cepstra(rng, 5), b = random_cepstra(rng, 8);
  const auto d = metrics::mcd_dtw(a, b);
  REQUIRE(!d.path.empty());
  CHECK(d.path.front() == std::pair<int, int>(0, 0));
  CHECK(d.path.back() == std::pair<int, int>(4, 7));
  for (size_t s = 1; s < d.path.size(); ++s) {
    const int di = d.path[s].first - d.path[s - 1].first;
    const int dj = d.path[s].second - d.path[s - 1].second;
    CHECK(di >= 0);
    CHECK(dj >= 0);
    CHECK(di + dj >= 1);
    CHECK(di <= 1);
    CHECK(dj <= 1);
  }
}

TEST_CASE("mcd_dtw invariants: identity, duplication, bound by mcd") {
  Rng rng(69);
  const RMat a = random_cepstra(rng, 6), b = random_cepstra(rng, 6);
  CHECK(metrics::mcd_dtw(a, a).value == 0.0);

  // duplicating a frame leaves the value unchanged
  RMat dup(7, 13);
  dup << a.topRows(4), a.row(3), a.bottomRows(2);
  CHECK(metrics::mcd_dtw(dup, b).value ==
        doctest::Approx(metrics::mcd_dtw(a, b).value).epsilon(1e-12));
  CHECK(metrics::mcd_dtw(dup, a).value == 0.0);

  // warping can only reduce the path-mean cost at equal lengths
  CHECK(metrics::mcd_dtw(a, b).value <= metrics::mcd(a, b) + 1e-12);
}

TEST_CASE("mcd_dtw_sl scales by the length ratio") {
  Rng rng(71);
  const RMat a = random_cepstra(rng, 4), b = random_cepstra(rng, 8);
  const double dtw = metrics::mcd_dtw(a, b).value;
  CHECK(metrics::mcd_dtw_sl(a, b) == doctest::Approx(2.0 * dtw).epsilon(1e-12));
  CHECK(metrics::mcd_dtw_sl(a, a) == metrics::mcd_dtw(a, a).value);
  const RMat c = random_cepstra(rng, 4);
  CHECK(metrics::mcd_dtw_sl(a, c) ==
        doctest::Approx(metrics::mcd_dtw(a, c).value).epsilon(1e-12));
  CHECK(metrics::mcd_dtw_sl(a, b) >= dtw);

  // pluggable coefficient
  const double fixed = metrics::mcd_dtw_sl(
      a, b, [](Eigen::Index, Eigen::Index) { return 3.0; });
  CHECK(fixed == doctest::Approx(3.0 * dtw).epsilon(1e-12));
}

TEST_CASE("score_pair composes the MCD family") {
  Rng rng(73);
  RMat mel_a(6, 80), mel_b(9, 80);
  rng.fill_normal(mel_a, 5.0);
  rng.fill_normal(mel_b, 5.0);
  const auto rep = metrics::score_pair(mel_a, mel_b);
  CHECK(std::isnan(rep.mcd));  // frame-wise variant undefined across lengths
  CHECK(rep.mcd_dtw >= 0.0);
  CHECK(rep.len_ratio == doctest::Approx(1.5));
  CHECK(rep.mcd_dtw_sl == doctest::Approx(rep.len_ratio * rep.mcd_dtw));
  const auto same = metrics::score_pair(mel_a, mel_a);
  CHECK(same.mcd == 0.0);
  CHECK(same.mcd_dtw == 0.0);
}

TEST_CASE("mel classifier: single-sample accuracy and checkpoint errors") {
  Rng rng(75);
  std::vector<metrics::LabeledMel> set;
  for (int c = 0; c < 4; ++c) {
    RMat mel = RMat::Constant(6, 80, -40.0 + 10.0 * c);
    RMat noise(6, 80);
    rng.fill_normal(noise, 0.2);
    set.push_back({mel + noise, c});
  }
  metrics::MelClassifier<Real> clf(4, 16, 77);
  metrics::train_classifier(clf, set, 200, 1e-2, 79);
  CHECK(metrics::accuracy(clf, set) == doctest::Approx(1.0));
  CHECK(metrics::accuracy(clf, {set[1]}) == doctest::Approx(1.0));

  CHECK_THROWS_AS(metrics::load_classifier<Real>("/nonexistent/clf.bin"),
                  MissingModel);
  CHECK_THROWS_AS(metrics::accuracy(clf, {}), EmptyInput);
}
