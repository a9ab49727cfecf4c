#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hpm/signal.hpp"

using namespace hpm;
using namespace hpm::sig;

namespace {

RVec sine(double freq, double seconds, int sr, double amp = 0.4) {
  const int64_t n = int64_t(seconds * sr);
  RVec x(n);
  for (int64_t i = 0; i < n; ++i) x(i) = amp * std::sin(2.0 * M_PI * freq * i / sr);
  return x;
}

double spearman_rho(const RVec& x) {
  // rank correlation of a sequence against its index
  const int n = int(x.size());
  std::vector<int> order(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return x(a) < x(b); });
  std::vector<double> rank(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) rank[size_t(order[size_t(i)])] = i;
  double d2 = 0.0;
  for (int i = 0; i < n; ++i) d2 += (rank[size_t(i)] - i) * (rank[size_t(i)] - i);
  return 1.0 - 6.0 * d2 / (double(n) * (double(n) * n - 1.0));
}

}  // namespace

TEST_CASE("440 Hz sine: median detected F0 within 5 Hz") {
  MelConfig cfg;
  cfg.sr = 22050;
  cfg.hop = 256;
  auto t = extract_targets(sine(440.0, 0.8, cfg.sr), cfg);
  std::vector<double> voiced_f0;
  for (size_t i = 0; i < t.contours.voiced.size(); ++i)
    if (t.contours.voiced[i]) voiced_f0.push_back(std::exp(t.contours.pitch(Eigen::Index(i))));
  REQUIRE(!voiced_f0.empty());
  std::sort(voiced_f0.begin(), voiced_f0.end());
  const double median = voiced_f0[voiced_f0.size() / 2];
  CHECK(std::abs(median - 440.0) < 5.0);
}

TEST_CASE("silence: zero energy, no voiced frames") {
  MelConfig cfg;
  cfg.sr = 16000;
  cfg.hop = 200;
  auto t = extract_targets(RVec::Zero(8000), cfg);
  CHECK(t.contours.energy.maxCoeff() < 1e-6);
  for (bool v : t.contours.voiced) CHECK(!v);
  CHECK(t.mel.frames.maxCoeff() == doctest::Approx(-80.0));
}

TEST_CASE("chirp 200->400 Hz: monotone interpolated F0 trend") {
  const int sr = 22050;
  const double secs = 1.0;
  const int64_t n = int64_t(secs * sr);
  RVec x(n);
  double phase = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double f = 200.0 + 200.0 * double(i) / double(n);
    phase += 2.0 * M_PI * f / sr;
    x(i) = 0.4 * std::sin(phase);
  }
  MelConfig cfg;
  cfg.sr = sr;
  cfg.hop = 256;
  auto t = extract_targets(x, cfg);
  CHECK(spearman_rho(t.contours.pitch) > 0.9);
}

TEST_CASE("mel frame counts align across targets") {
  MelConfig cfg;
  cfg.sr = 16000;
  cfg.hop = 200;
  auto t = extract_targets(sine(300.0, 0.5, cfg.sr), cfg);
  CHECK(t.mel.frames.rows() == t.contours.energy.size());
  CHECK(t.mel.frames.rows() == t.contours.pitch.size());
  CHECK(t.mel.frames.cols() == 80);
}

TEST_CASE("griffin_lim: 440 Hz tone round-trips to a peak near 440 Hz") {
  MelConfig cfg;
  cfg.sr = 22050;
  cfg.hop = 256;
  auto mel = mel_spectrogram(sine(440.0, 0.7, cfg.sr), cfg);
  RVec y = griffin_lim(mel, 60);
  REQUIRE(y.size() >= cfg.win);
  RMat mag = stft_magnitude(y, cfg.win, cfg.hop);
  RVec avg = mag.colwise().mean();
  Eigen::Index peak = 0;
  avg.maxCoeff(&peak);
  const double bin_hz = double(cfg.sr) / cfg.win;
  const double expect_bin = 440.0 / bin_hz;
  CHECK(std::abs(double(peak) - expect_bin) <= 1.0);
}

TEST_CASE("griffin_lim: silence mel yields near-zero waveform, iters=1 ok") {
  MelSpectrogram mel;
  mel.frames = RMat::Constant(40, 80, -80.0);
  mel.sr = 22050;
  mel.hop = 256;
  RVec y1 = griffin_lim(mel, 1);
  CHECK(y1.size() == 40 * 256);
  CHECK(y1.cwiseAbs().maxCoeff() < 1e-3);
  RVec y = griffin_lim(mel, 10);
  CHECK(y.cwiseAbs().maxCoeff() < 1e-3);
  CHECK_THROWS_AS(griffin_lim(mel, 0), InvalidConfig);
}

TEST_CASE("resample_indices nearest-frame lookup") {
  auto idx = resample_indices(3, 12, 4.0);
  CHECK(idx.front() == 0);
  CHECK(idx[4] == 1);
  CHECK(idx.back() == 2);
}
