#ifndef HPM_ALIGNER_HPP
#define HPM_ALIGNER_HPP

#include "hpm/config.hpp"
#include "hpm/layers.hpp"

#include <cmath>
#include <optional>

namespace hpm {

// mel frames per video frame: r = (sr/hs)/fps, n = round(r)
struct FrameRatio {
  double r = 0.0;
  int n = 0;
  int sr = 0;
  int hs = 0;
  double fps = 0.0;
};

inline FrameRatio frame_ratio(int sr, int hs, double fps) {
  if (sr <= 0 || hs <= 0 || fps <= 0.0)
    throw InvalidConfig("frame_ratio: sr, hs, fps must be positive");
  FrameRatio fr;
  fr.sr = sr;
  fr.hs = hs;
  fr.fps = fps;
  fr.r = (double(sr) / hs) / fps;
  fr.n = std::max(1, int(std::lround(fr.r)));
  return fr;
}

inline Eigen::Index inference_mel_len(const FrameRatio& fr, Eigen::Index t_video) {
  return Eigen::Index(std::llround(fr.r * double(t_video)));
}

template <class S>
struct AlignmentResult {
  ag::Var<S> fused;                      // T_v x D
  std::vector<ag::Var<S>> attention;     // per head, T_v x L
  ag::Var<S> expanded;                   // T_y x D
};

// Aligns phoneme embeddings to lip frames with multi-head cross attention
// (lips are queries) and expands the fused track to mel-frame rate with a
// two-stage learned transposed convolution.
template <class S>
struct DurationAligner {
  FrameRatio ratio;
  bool use_conv_expansion = true;
  nn::MultiHeadAttention<S> cross;
  nn::ConvTranspose1d<S> up1, up2;

  DurationAligner() = default;
  DurationAligner(nn::ParamStore<S>& ps, Rng& rng, const Config& cfg)
      : ratio(frame_ratio(cfg.sr, cfg.hop, cfg.fps)),
        use_conv_expansion(cfg.aligner_expansion == "conv_transpose"),
        cross(ps, "aligner.cross", rng, cfg.dim, cfg.aligner_heads) {
    // second stage sized so the combined stretch always exceeds r
    const int s2 = std::max(1, int(std::ceil(ratio.r / cfg.aligner_stride)));
    up1 = nn::ConvTranspose1d<S>(ps, "aligner.up1", rng, cfg.dim, cfg.dim,
                                 cfg.aligner_stride, cfg.aligner_kernel);
    up2 = nn::ConvTranspose1d<S>(ps, "aligner.up2", rng, cfg.dim, cfg.dim, s2,
                                 2 * s2);
  }

  // phoneme_mask: true = valid token; masked logits get -1e9 before softmax
  nn::AttentionOut<S> align(const ag::Var<S>& lips, const ag::Var<S>& phonemes,
                            const BoolVec& phoneme_mask) const {
    require(lips.cols() == phonemes.cols(), "align: width mismatch");
    require(Eigen::Index(phoneme_mask.size()) == phonemes.rows(),
            "align: mask length mismatch");
    Mat<S> bias = Mat<S>::Zero(lips.rows(), phonemes.rows());
    for (Eigen::Index j = 0; j < phonemes.rows(); ++j)
      if (!phoneme_mask[size_t(j)]) bias.col(j).setConstant(S(-1e9));
    return cross(lips, phonemes, bias);
  }

  // learned expansion, trimmed/zero-padded at the tail to the target length
  // (teacher length in training, round(r * T_v) at inference)
  ag::Var<S> expand(const ag::Var<S>& fused,
                    std::optional<Eigen::Index> target_len = std::nullopt) const {
    require(fused.rows() >= 1, "expand: empty input");
    const Eigen::Index target =
        target_len ? *target_len : inference_mel_len(ratio, fused.rows());
    if (target <= 0) throw InvalidConfig("expand: target length must be positive");
    if (!use_conv_expansion) return expand_duplicate(fused, target);
    return ag::fit_rows(up2(up1(fused)), target);
  }

  // ablation baseline: every frame repeated n times, no learned parameters
  ag::Var<S> expand_duplicate(const ag::Var<S>& fused,
                              std::optional<Eigen::Index> target_len =
                                  std::nullopt) const {
    std::vector<int> idx;
    for (int t = 0; t < fused.rows(); ++t)
      for (int k = 0; k < ratio.n; ++k) idx.push_back(t);
    auto dup = ag::gather_rows(fused, idx);
    return target_len ? ag::fit_rows(dup, *target_len) : dup;
  }
};

}  // namespace hpm

#endif  // HPM_ALIGNER_HPP
