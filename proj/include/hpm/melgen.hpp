#ifndef HPM_MELGEN_HPP
#define HPM_MELGEN_HPP

#include "hpm/config.hpp"
#include "hpm/layers.hpp"

namespace hpm {

// Decodes the concatenated hidden streams into an 80-bin mel-spectrogram:
// linear reconcile -> FFT-block decoder -> mel linear -> residual postnet.
template <class S>
struct MelGenerator {
  static constexpr int kMelBins = 80;
  nn::Linear<S> input_proj;  // (dim + 2*dim + dim) -> dim
  std::vector<nn::FftBlock<S>> blocks;
  nn::Linear<S> mel_linear;  // dim -> 80
  nn::Postnet<S> postnet;

  MelGenerator() = default;
  MelGenerator(nn::ParamStore<S>& ps, Rng& rng, const Config& cfg)
      : input_proj(ps, "melgen.input_proj", rng, 4 * cfg.dim, cfg.dim),
        mel_linear(ps, "melgen.mel_linear", rng, cfg.dim, kMelBins),
        postnet(ps, "melgen.postnet", rng, kMelBins, cfg.postnet_channels) {
    for (int i = 0; i < cfg.decoder_blocks; ++i)
      blocks.emplace_back(ps, "melgen.fft" + std::to_string(i), rng, cfg.dim,
                          cfg.encoder_heads, cfg.fft_hidden, cfg.fft_kernel);
  }

  ag::Var<S> decode(const ag::Var<S>& phoneme_lip, const ag::Var<S>& prosody,
                    const ag::Var<S>& emotion_ctx) const {
    if (phoneme_lip.rows() != prosody.rows() ||
        prosody.rows() != emotion_ctx.rows())
      throw ShapeError("decode: stream length mismatch");
    auto h = input_proj(
        ag::concat_cols(ag::concat_cols(phoneme_lip, prosody), emotion_ctx));
    h = nn::add_positions(h);
    for (const auto& blk : blocks) h = blk(h);
    return h;
  }

  struct MelPair {
    ag::Var<S> before;  // T_y x 80
    ag::Var<S> after;   // before + Postnet(before)
  };

  MelPair to_mel(const ag::Var<S>& hidden) const {
    auto before = mel_linear(hidden);
    auto after = ag::add(before, postnet(before));
    return {before, after};
  }
};

}  // namespace hpm

#endif  // HPM_MELGEN_HPP
