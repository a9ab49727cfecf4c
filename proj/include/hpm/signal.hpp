#ifndef HPM_SIGNAL_HPP
#define HPM_SIGNAL_HPP

#include "hpm/common.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

namespace hpm::sig {

struct MelConfig {
  int sr = 22050;
  int hop = 256;
  int win = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 -> sr/2
  double floor_db = -80.0;
  double effective_fmax() const { return fmax > 0.0 ? fmax : sr / 2.0; }
};

struct MelSpectrogram {
  RMat frames;  // T x n_mels, log magnitude in dB
  int sr = 22050;
  int hop = 256;
  double fmin = 0.0;
  double fmax = 0.0;
};

struct ProsodyContours {
  RVec pitch;               // log-F0, unvoiced-interpolated
  RVec energy;              // L2 norm of the magnitude STFT frame
  std::vector<bool> voiced;
};

inline RVec hann_window(int n) {
  RVec w(n);
  for (int i = 0; i < n; ++i)
    w(i) = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n - 1));
  return w;
}

inline int frame_count(int64_t samples, int hop) {
  return int(samples / hop) + 1;
}

// centered frame extraction with reflect padding
inline RVec frame_at(const RVec& audio, int center, int win) {
  RVec f(win);
  const int64_t n = audio.size();
  for (int i = 0; i < win; ++i) {
    int64_t idx = int64_t(center) - win / 2 + i;
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * (n - 1) - idx;
    f(i) = (idx >= 0 && idx < n) ? audio(idx) : 0.0;
  }
  return f;
}

// magnitude STFT, T x (win/2 + 1)
inline RMat stft_magnitude(const RVec& audio, int win, int hop) {
  if (audio.size() < win) throw InvalidAudio("stft: audio shorter than one window");
  const int T = frame_count(audio.size(), hop);
  const int bins = win / 2 + 1;
  const RVec w = hann_window(win);
  Eigen::FFT<Real> fft;
  RMat mag(T, bins);
  std::vector<std::complex<Real>> spec;
  for (int t = 0; t < T; ++t) {
    RVec f = frame_at(audio, t * hop, win).cwiseProduct(w);
    std::vector<Real> buf(f.data(), f.data() + win);
    fft.fwd(spec, buf);
    for (int b = 0; b < bins; ++b) mag(t, b) = std::abs(spec[size_t(b)]);
  }
  return mag;
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// triangular filters, (win/2+1) x n_mels
inline RMat mel_filterbank(int bins, int n_mels, int sr, double fmin, double fmax) {
  const int win = (bins - 1) * 2;
  RMat fb = RMat::Zero(bins, n_mels);
  const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
  std::vector<double> centers(size_t(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[size_t(i)] = mel_to_hz(mlo + (mhi - mlo) * i / (n_mels + 1));
  for (int b = 0; b < bins; ++b) {
    const double f = double(b) * sr / win;
    for (int m = 0; m < n_mels; ++m) {
      const double lo = centers[size_t(m)], c = centers[size_t(m) + 1],
                   hi = centers[size_t(m) + 2];
      if (f > lo && f < hi)
        fb(b, m) = (f <= c) ? (f - lo) / (c - lo) : (hi - f) / (hi - c);
    }
  }
  return fb;
}

inline MelSpectrogram mel_spectrogram(const RVec& audio, const MelConfig& cfg) {
  RMat mag = stft_magnitude(audio, cfg.win, cfg.hop);
  RMat fb = mel_filterbank(int(mag.cols()), cfg.n_mels, cfg.sr, cfg.fmin,
                           cfg.effective_fmax());
  RMat mel = mag * fb;
  RMat db =
      (20.0 * mel.array().max(1e-10).log10()).cwiseMax(cfg.floor_db).matrix();
  return MelSpectrogram{std::move(db), cfg.sr, cfg.hop, cfg.fmin,
                        cfg.effective_fmax()};
}

// frame-level F0 by normalized autocorrelation with parabolic peak refinement
inline RVec f0_track(const RVec& audio, int sr, int hop, int win,
                     std::vector<bool>& voiced, double f_lo = 60.0,
                     double f_hi = 500.0, double threshold = 0.35) {
  const int T = frame_count(audio.size(), hop);
  RVec f0 = RVec::Zero(T);
  voiced.assign(size_t(T), false);
  const int lag_lo = std::max(2, int(sr / f_hi));
  const int lag_hi = std::min(win / 2, int(sr / f_lo));
  for (int t = 0; t < T; ++t) {
    RVec f = frame_at(audio, t * hop, win);
    const double r0 = f.squaredNorm();
    if (r0 < 1e-10) continue;
    int best = 0;
    double best_r = 0.0;
    RVec rv = RVec::Zero(lag_hi + 2);
    for (int lag = lag_lo; lag <= lag_hi; ++lag) {
      const int n = win - lag;
      const double r = f.head(n).dot(f.tail(n)) /
                       std::sqrt(f.head(n).squaredNorm() * f.tail(n).squaredNorm() + 1e-20);
      rv(lag) = r;
      if (r > best_r) {
        best_r = r;
        best = lag;
      }
    }
    // a strongly periodic frame has autocorrelation maxima at every multiple
    // of the true period and the global max can land on a subharmonic, so
    // prefer the shortest local peak that is nearly as strong
    int pick = best;
    for (int lag = lag_lo + 1; lag < best; ++lag)
      if (rv(lag) >= 0.99 * best_r && rv(lag) >= rv(lag - 1) &&
          rv(lag) >= rv(lag + 1)) {
        pick = lag;
        break;
      }
    if (best_r > threshold && pick > lag_lo && pick < lag_hi) {
      // parabolic interpolation around the peak
      const double a = rv(pick - 1), b = rv(pick), c = rv(pick + 1);
      const double denom = a - 2 * b + c;
      double shift = 0.0;
      if (std::abs(denom) > 1e-12) shift = 0.5 * (a - c) / denom;
      const double lag = double(pick) + std::clamp(shift, -0.5, 0.5);
      f0(t) = double(sr) / lag;
      voiced[size_t(t)] = true;
    }
  }
  return f0;
}

// log-scale pitch with linear interpolation across unvoiced stretches
inline RVec interpolate_log_f0(const RVec& f0, const std::vector<bool>& voiced) {
  const int T = int(f0.size());
  RVec out = RVec::Zero(T);
  int prev = -1;
  for (int t = 0; t < T; ++t) {
    if (!voiced[size_t(t)]) continue;
    const double lv = std::log(f0(t));
    out(t) = lv;
    if (prev < 0) {
      for (int s = 0; s < t; ++s) out(s) = lv;
    } else {
      const double pv = out(prev);
      for (int s = prev + 1; s < t; ++s)
        out(s) = pv + (lv - pv) * double(s - prev) / double(t - prev);
    }
    prev = t;
  }
  if (prev >= 0)
    for (int s = prev + 1; s < T; ++s) out(s) = out(prev);
  return out;
}

struct Targets {
  MelSpectrogram mel;
  ProsodyContours contours;
};

// aligned mel / pitch / energy with identical frame counts
inline Targets extract_targets(const RVec& audio, const MelConfig& cfg) {
  if (audio.size() < cfg.win)
    throw InvalidAudio("extract_targets: audio shorter than one analysis window");
  Targets t;
  t.mel = mel_spectrogram(audio, cfg);
  RMat mag = stft_magnitude(audio, cfg.win, cfg.hop);
  t.contours.energy = mag.rowwise().norm();
  RVec f0 = f0_track(audio, cfg.sr, cfg.hop, cfg.win, t.contours.voiced);
  t.contours.pitch = interpolate_log_f0(f0, t.contours.voiced);
  return t;
}

// inverse STFT with hann overlap-add
inline RVec istft(const std::vector<std::vector<std::complex<Real>>>& frames,
                  int win, int hop) {
  const int T = int(frames.size());
  const int64_t n = int64_t(T - 1) * hop + win;
  RVec out = RVec::Zero(n), wsum = RVec::Zero(n);
  const RVec w = hann_window(win);
  Eigen::FFT<Real> fft;
  std::vector<Real> time;
  for (int t = 0; t < T; ++t) {
    fft.inv(time, frames[size_t(t)]);
    const int64_t off = int64_t(t) * hop;
    for (int i = 0; i < win; ++i) {
      out(off + i) += time[size_t(i)] * w(i);
      wsum(off + i) += w(i) * w(i);
    }
  }
  for (int64_t i = 0; i < n; ++i)
    if (wsum(i) > 1e-8) out(i) /= wsum(i);
  // drop the half-window lead-in introduced by centered analysis
  const int64_t lead = win / 2;
  const int64_t keep = std::max<int64_t>(0, n - lead);
  return out.segment(lead, keep);
}

// iterative phase recovery from a log-mel spectrogram via the pseudo-inverse
// of the mel filterbank
inline RVec griffin_lim(const MelSpectrogram& mel, int iters) {
  if (iters < 1) throw InvalidConfig("griffin_lim: iters must be >= 1");
  if (mel.sr <= 0 || mel.hop <= 0)
    throw InvalidConfig("griffin_lim: invalid mel metadata");
  const int win = 1024;
  const int bins = win / 2 + 1;
  const int T = int(mel.frames.rows());
  RMat fb = mel_filterbank(bins, int(mel.frames.cols()), mel.sr, mel.fmin,
                           mel.fmax > 0 ? mel.fmax : mel.sr / 2.0);
  RMat linmel(T, mel.frames.cols());
  for (int t = 0; t < T; ++t)
    for (int m = 0; m < mel.frames.cols(); ++m)
      linmel(t, m) = std::pow(10.0, mel.frames(t, m) / 20.0);
  // least-squares inversion, clamped to nonnegative magnitudes
  Eigen::CompleteOrthogonalDecomposition<RMat> cod(fb.transpose());
  RMat mag = cod.solve(linmel.transpose()).transpose().cwiseMax(0.0);  // T x bins
  Eigen::FFT<Real> fft;
  const size_t nT = size_t(T), nwin = size_t(win);
  std::vector<std::vector<std::complex<Real>>> spec(nT,
      std::vector<std::complex<Real>>(nwin));
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < win; ++b) {
      const int src = (b < bins) ? b : win - b;
      spec[size_t(t)][size_t(b)] = {mag(t, src), 0.0};
    }
  RVec y;
  const RVec w = hann_window(win);
  for (int it = 0; it < iters; ++it) {
    y = istft(spec, win, mel.hop);
    if (int64_t(y.size()) < win) break;
    std::vector<Real> buf;
    std::vector<std::complex<Real>> s;
    for (int t = 0; t < T; ++t) {
      RVec f = frame_at(y, t * mel.hop, win).cwiseProduct(w);
      buf.assign(f.data(), f.data() + win);
      fft.fwd(s, buf);
      for (int b = 0; b < win; ++b) {
        const int src = (b < bins) ? b : win - b;
        const std::complex<Real> c =
            (b < bins) ? s[size_t(b)] : std::conj(s[size_t(src)]);
        const double a = std::abs(c);
        spec[size_t(t)][size_t(b)] =
            (a > 1e-12) ? std::complex<Real>(mag(t, src) * c.real() / a,
                                             mag(t, src) * c.imag() / a)
                        : std::complex<Real>(mag(t, src), 0.0);
      }
    }
  }
  y = istft(spec, win, mel.hop);
  const int64_t target = int64_t(T) * mel.hop;
  RVec out = RVec::Zero(target);
  out.head(std::min<int64_t>(target, y.size())) =
      y.head(std::min<int64_t>(target, y.size()));
  return out;
}

// nearest-frame resampling of a per-video-frame track to mel-frame rate
inline std::vector<int> resample_indices(int t_video, int t_mel, double ratio) {
  std::vector<int> idx(static_cast<size_t>(t_mel), 0);
  for (int i = 0; i < t_mel; ++i)
    idx[size_t(i)] = std::min(t_video - 1, int(std::floor(double(i) / ratio)));
  return idx;
}

}  // namespace hpm::sig

#endif  // HPM_SIGNAL_HPP
