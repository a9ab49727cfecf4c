#ifndef HPM_MODEL_HPP
#define HPM_MODEL_HPP

#include "hpm/aligner.hpp"
#include "hpm/atmosphere.hpp"
#include "hpm/frontend.hpp"
#include "hpm/losses.hpp"
#include "hpm/melgen.hpp"
#include "hpm/prosody.hpp"
#include "hpm/signal.hpp"

#include <filesystem>
#include <fstream>
#include <optional>

namespace hpm {

// One training/inference bundle: text tokens, video-side features, speaker,
// emotion label, and the extracted targets.
struct DubbingSample {
  std::string id;
  PhonemeSequence phonemes;
  VideoFeatureTrack video;
  int speaker_id = 0;
  int emotion_label = 0;
  RMat mel_target;     // T_y x 80, dB scale
  RVec pitch_target;   // raw log-F0, unvoiced-interpolated
  RVec energy_target;  // raw frame energy
};

// z-normalization statistics computed on the training split
struct NormStats {
  RVec mel_mean = RVec::Zero(80), mel_std = RVec::Ones(80);
  double pitch_mean = 0.0, pitch_std = 1.0;
  double energy_mean = 0.0, energy_std = 1.0;

  RMat normalize_mel(const RMat& mel) const {
    RMat out = mel;
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out.col(j) = (out.col(j).array() - mel_mean(j)) / mel_std(j);
    return out;
  }
  RMat denormalize_mel(const RMat& mel) const {
    RMat out = mel;
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out.col(j) = out.col(j).array() * mel_std(j) + mel_mean(j);
    return out;
  }
  RVec normalize_pitch(const RVec& p) const {
    return (p.array() - pitch_mean) / pitch_std;
  }
  RVec normalize_energy(const RVec& e) const {
    return (e.array() - energy_mean) / energy_std;
  }
};

template <class S>
struct ModelOutput {
  ag::Var<S> phoneme_lip;  // T_y x D
  ag::Var<S> prosody;      // T_y x 2D
  ag::Var<S> emotion_ctx;  // T_y x D
  ag::Var<S> pitch;        // T_y x 1, normalized space
  ag::Var<S> energy;       // T_y x 1
  ag::Var<S> emotion_logits;  // 1 x C; invalid when booster disabled
  ag::Var<S> mel_before, mel_after;  // T_y x 80, normalized space
  std::vector<ag::Var<S>> align_weights;
  Eigen::Index mel_len = 0;
};

template <class S>
class DubbingModel {
 public:
  explicit DubbingModel(const Config& cfg) : cfg_(cfg) {
    Rng rng(cfg.seed);
    frontend_ = FeatureFrontend<S>(params_, rng, cfg);
    aligner_ = DurationAligner<S>(params_, rng, cfg);
    adaptor_ = ProsodyAdaptor<S>(params_, rng, cfg);
    booster_ = AtmosphereBooster<S>(params_, rng, cfg);
    melgen_ = MelGenerator<S>(params_, rng, cfg);
  }

  const Config& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return params_; }
  NormStats& stats() { return stats_; }
  const NormStats& stats() const { return stats_; }
  const FrameRatio& ratio() const { return aligner_.ratio; }
  FeatureFrontend<S>& frontend() { return frontend_; }
  DurationAligner<S>& aligner() { return aligner_; }
  ProsodyAdaptor<S>& adaptor() { return adaptor_; }
  AtmosphereBooster<S>& booster() { return booster_; }
  MelGenerator<S>& melgen() { return melgen_; }

  ModelOutput<S> forward(const DubbingSample& sample,
                         std::optional<Eigen::Index> teacher_len = std::nullopt) {
    ModelOutput<S> out;
    const Eigen::Index t_video = sample.video.lip_patches.rows();
    require(t_video >= 1, "forward: empty video track");

    auto phonemes = frontend_.encode_phonemes(sample.phonemes);
    ag::Var<S> fused;
    if (cfg_.aligner_enabled) {
      auto lips = frontend_.encode_lips(sample.video.lip_patches);
      auto aligned = aligner_.align(lips, phonemes, sample.phonemes.mask);
      fused = aligned.context;
      out.align_weights = aligned.weights;
    } else {
      // no-da ablation: phoneme track resampled to video rate, no lip evidence
      std::vector<int> idx(size_t(t_video), 0);
      for (Eigen::Index t = 0; t < t_video; ++t)
        idx[size_t(t)] = int(t * phonemes.rows() / t_video);
      fused = ag::gather_rows(phonemes, idx);
    }

    const Eigen::Index t_mel =
        teacher_len ? *teacher_len : inference_mel_len(aligner_.ratio, t_video);
    out.mel_len = t_mel;
    out.phoneme_lip = aligner_.expand(fused, t_mel);

    auto [valence, arousal] = frontend_.encode_affect(sample.video);
    const auto idx = sig::resample_indices(int(t_video), int(t_mel),
                                           aligner_.ratio.r);
    auto arousal_y = ag::gather_rows(arousal, idx);
    auto valence_y = ag::gather_rows(valence, idx);

    auto arousal_ctx = cfg_.use_arousal
                           ? adaptor_.arousal_context(arousal_y, out.phoneme_lip)
                           : out.phoneme_lip;
    auto valence_ctx = cfg_.use_valence
                           ? adaptor_.valence_context(valence_y, out.phoneme_lip)
                           : out.phoneme_lip;
    out.energy = adaptor_.predict_energy(arousal_ctx);
    auto speaker = frontend_.encode_speaker(sample.speaker_id);
    out.pitch = adaptor_.predict_pitch(valence_ctx, speaker);
    out.prosody = ProsodyAdaptor<S>::assemble_prosody(arousal_ctx, valence_ctx);

    if (cfg_.booster_enabled) {
      auto scene = booster_.ingest_scene(sample.video.scene_raw);
      auto fusedscene = booster_.fuse_scene(out.prosody, scene);
      out.emotion_ctx = fusedscene.context;
      out.emotion_logits = booster_.predict_emotion(out.emotion_ctx);
    } else {
      out.emotion_ctx = booster_.bypass(out.prosody);
    }

    auto hidden = melgen_.decode(out.phoneme_lip, out.prosody, out.emotion_ctx);
    auto mel = melgen_.to_mel(hidden);
    out.mel_before = mel.before;
    out.mel_after = mel.after;
    return out;
  }

  // graph loss for one sample plus the matching scalar report; mel loss
  // supervises both the pre- and post-postnet output
  std::pair<ag::Var<S>, LossReport> loss(const DubbingSample& sample,
                                         const ModelOutput<S>& out) const {
    const Eigen::Index t = out.mel_len;
    if (sample.mel_target.rows() != t)
      throw ShapeError("loss: teacher mel length mismatch");
    Mat<S> mel_t = stats_.normalize_mel(sample.mel_target).template cast<S>();
    Mat<S> pitch_t = stats_.normalize_pitch(sample.pitch_target).template cast<S>();
    Mat<S> energy_t =
        stats_.normalize_energy(sample.energy_target).template cast<S>();

    auto l_mel = ag::add(ag::graph_mel_l1(out.mel_before, mel_t),
                         ag::graph_mel_l1(out.mel_after, mel_t));
    auto l_pitch = ag::graph_mse(out.pitch, pitch_t);
    auto l_energy = ag::graph_mse(out.energy, energy_t);

    ag::Var<S> total = ag::add(
        ag::add(ag::scale(l_mel, S(cfg_.lambda_mel)),
                ag::scale(l_pitch, S(cfg_.lambda_pitch))),
        ag::scale(l_energy, S(cfg_.lambda_energy)));
    LossReport rep;
    rep.mel = double(l_mel.value()(0, 0));
    rep.pitch = double(l_pitch.value()(0, 0));
    rep.energy = double(l_energy.value()(0, 0));
    if (cfg_.booster_enabled) {
      auto l_emo = ag::cross_entropy_logits(out.emotion_logits,
                                            sample.emotion_label);
      rep.emo = double(l_emo.value()(0, 0));
      total = ag::add(total, ag::scale(l_emo, S(cfg_.lambda_emo)));
    }
    rep.total = cfg_.lambda_mel * rep.mel + cfg_.lambda_pitch * rep.pitch +
                cfg_.lambda_energy * rep.energy + cfg_.lambda_emo * rep.emo;
    return {total, rep};
  }

  // ---- checkpoint io ------------------------------------------------------

  static constexpr char kMagic[8] = {'H', 'P', 'M', 'C', 'K', 'P', 'T', '1'};

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write " + path.string());
    out.write(kMagic, 8);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::string cfg_text = cfg_.serialize();
    write_u64(out, cfg_text.size());
    out.write(cfg_text.data(), std::streamsize(cfg_text.size()));
    const std::uint64_t cfg_hash = cfg_.hash();
    write_u64(out, cfg_hash);
    write_vec(out, stats_.mel_mean);
    write_vec(out, stats_.mel_std);
    write_f64(out, stats_.pitch_mean);
    write_f64(out, stats_.pitch_std);
    write_f64(out, stats_.energy_mean);
    write_f64(out, stats_.energy_std);
    write_u64(out, params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      const std::string& name = params_.name(i);
      write_u64(out, name.size());
      out.write(name.data(), std::streamsize(name.size()));
      const auto& v =
          const_cast<nn::ParamStore<S>&>(params_).at(i).value();
      write_u64(out, std::uint64_t(v.rows()));
      write_u64(out, std::uint64_t(v.cols()));
      for (Eigen::Index c = 0; c < v.cols(); ++c)
        for (Eigen::Index r = 0; r < v.rows(); ++r) write_f64(out, double(v(r, c)));
    }
    if (!out) throw IoError("checkpoint: write failed: " + path.string());
  }

  static DubbingModel load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingModel("checkpoint: cannot read " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != std::string(kMagic, 8))
      throw IoError("checkpoint: bad magic in " + path.string());
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) throw IoError("checkpoint: unsupported version");
    std::string cfg_text(read_u64(in), '\0');
    in.read(cfg_text.data(), std::streamsize(cfg_text.size()));
    const std::uint64_t stored_hash = read_u64(in);

    // reparse the stored config
    Config cfg;
    try {
      std::istringstream cs(cfg_text);
      std::string line;
      while (std::getline(cs, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
          const auto b = s.find_first_not_of(" \t");
          const auto e = s.find_last_not_of(" \t");
          return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      }
    } catch (const std::exception& e) {
      throw IoError("checkpoint: corrupt stored config: " +
                    std::string(e.what()));
    }
    if (cfg.hash() != stored_hash)
      throw IoError("checkpoint: config hash mismatch");

    DubbingModel m(cfg);
    read_vec(in, m.stats_.mel_mean);
    read_vec(in, m.stats_.mel_std);
    m.stats_.pitch_mean = read_f64(in);
    m.stats_.pitch_std = read_f64(in);
    m.stats_.energy_mean = read_f64(in);
    m.stats_.energy_std = read_f64(in);
    const std::uint64_t n = read_u64(in);
    if (n != m.params_.size())
      throw IoError("checkpoint: parameter count mismatch");
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name(read_u64(in), '\0');
      in.read(name.data(), std::streamsize(name.size()));
      if (name != m.params_.name(size_t(i)))
        throw IoError("checkpoint: parameter order mismatch at " + name);
      const auto rows = Eigen::Index(read_u64(in));
      const auto cols = Eigen::Index(read_u64(in));
      auto& v = m.params_.at(size_t(i)).value();
      if (v.rows() != rows || v.cols() != cols)
        throw IoError("checkpoint: shape mismatch at " + name);
      for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) v(r, c) = S(read_f64(in));
    }
    if (!in) throw IoError("checkpoint: truncated file " + path.string());
    return m;
  }

 private:
  static void write_u64(std::ostream& o, std::uint64_t v) {
    o.write(reinterpret_cast<const char*>(&v), 8);
  }
  static void write_f64(std::ostream& o, double v) {
    o.write(reinterpret_cast<const char*>(&v), 8);
  }
  static std::uint64_t read_u64(std::istream& i) {
    std::uint64_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
  }
  static double read_f64(std::istream& i) {
    double v = 0;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
  }
  static void write_vec(std::ostream& o, const RVec& v) {
    write_u64(o, std::uint64_t(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(o, v(i));
  }
  static void read_vec(std::istream& i, RVec& v) {
    v.resize(Eigen::Index(read_u64(i)));
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = read_f64(i);
  }

  Config cfg_;
  nn::ParamStore<S> params_;
  FeatureFrontend<S> frontend_;
  DurationAligner<S> aligner_;
  ProsodyAdaptor<S> adaptor_;
  AtmosphereBooster<S> booster_;
  MelGenerator<S> melgen_;
  NormStats stats_;
};

using Model = DubbingModel<Real>;

}  // namespace hpm

#endif  // HPM_MODEL_HPP
