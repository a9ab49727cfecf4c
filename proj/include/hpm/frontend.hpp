#ifndef HPM_FRONTEND_HPP
#define HPM_FRONTEND_HPP

#include "hpm/config.hpp"
#include "hpm/layers.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

namespace hpm {

using ag::Var;

// ---- phoneme inventory ----------------------------------------------------

// 39 ARPAbet-style symbols + sil + sp (punctuation pause) + 3 specials = 44
inline const std::vector<std::string>& phoneme_inventory() {
  static const std::vector<std::string> inv = {
      "<pad>", "<unk>", "<eos>", "sil", "sp",
      "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH", "ER",
      "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG",
      "OW", "OY", "P",  "R",  "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",
      "Y",  "Z",  "ZH"};
  return inv;
}

inline int phoneme_id(const std::string& sym) {
  const auto& inv = phoneme_inventory();
  const auto it = std::find(inv.begin(), inv.end(), sym);
  return it == inv.end() ? 1 /*<unk>*/ : int(it - inv.begin());
}

struct PhonemeSequence {
  std::vector<int> tokens;
  BoolVec mask;  // true = valid
};

// deterministic rule-based letter -> pseudo-phoneme mapping; a real G2P
// frontend is out of scope
inline PhonemeSequence tokenize(const std::string& text) {
  std::string s;
  for (char c : text) s.push_back(char(std::tolower((unsigned char)c)));
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) throw EmptyInput("tokenize: empty text");

  static const std::map<std::string, std::vector<std::string>> digraphs = {
      {"ch", {"CH"}}, {"sh", {"SH"}}, {"th", {"TH"}}, {"ph", {"F"}},
      {"ng", {"NG"}}, {"qu", {"K", "W"}}, {"ck", {"K"}}, {"ee", {"IY"}},
      {"oo", {"UW"}}, {"ou", {"AW"}}, {"ai", {"EY"}}, {"ay", {"EY"}},
      {"oi", {"OY"}}, {"oy", {"OY"}}, {"ow", {"OW"}}, {"er", {"ER"}}};
  static const std::map<char, std::vector<std::string>> singles = {
      {'a', {"AH"}}, {'b', {"B"}},  {'c', {"K"}},  {'d', {"D"}},
      {'e', {"EH"}}, {'f', {"F"}},  {'g', {"G"}},  {'h', {"HH"}},
      {'i', {"IH"}}, {'j', {"JH"}}, {'k', {"K"}},  {'l', {"L"}},
      {'m', {"M"}},  {'n', {"N"}},  {'o', {"OW"}}, {'p', {"P"}},
      {'q', {"K"}},  {'r', {"R"}},  {'s', {"S"}},  {'t', {"T"}},
      {'u', {"UH"}}, {'v', {"V"}},  {'w', {"W"}},  {'x', {"K", "S"}},
      {'y', {"Y"}},  {'z', {"Z"}}};

  std::vector<std::string> syms;
  syms.push_back("sil");
  for (size_t i = 0; i < s.size();) {
    const char c = s[i];
    if (std::isspace((unsigned char)c)) {
      ++i;
      continue;
    }
    if (c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':') {
      syms.push_back("sp");
      ++i;
      continue;
    }
    if (i + 1 < s.size()) {
      const auto dig = digraphs.find(s.substr(i, 2));
      if (dig != digraphs.end()) {
        for (const auto& p : dig->second) syms.push_back(p);
        i += 2;
        continue;
      }
    }
    const auto sg = singles.find(c);
    if (sg != singles.end())
      for (const auto& p : sg->second) syms.push_back(p);
    else
      syms.push_back("<unk>");
    ++i;
  }
  syms.push_back("sil");

  PhonemeSequence seq;
  for (const auto& sym : syms) seq.tokens.push_back(phoneme_id(sym));
  seq.mask.assign(seq.tokens.size(), true);
  return seq;
}

inline std::vector<std::string> phoneme_symbols(const PhonemeSequence& p) {
  std::vector<std::string> out;
  for (int t : p.tokens) out.push_back(phoneme_inventory()[size_t(t)]);
  return out;
}

// ---- raw video-side features ----------------------------------------------

struct VideoFeatureTrack {
  RMat lip_patches;  // T_v x (H*W*C)
  RVec valence_raw;  // T_v, in [-1, 1]
  RVec arousal_raw;  // T_v
  RMat scene_raw;    // T_s x D_s
  double fps = 20.0;

  void validate_affect() const {
    if (valence_raw.size() == 0 || arousal_raw.size() == 0)
      throw MissingFeature("affect track missing");
    if (valence_raw.cwiseAbs().maxCoeff() > 1.0 ||
        arousal_raw.cwiseAbs().maxCoeff() > 1.0)
      throw ValidationError("valence/arousal outside [-1, 1]");
  }
};

// ---- encoders -------------------------------------------------------------

template <class S>
struct FeatureFrontend {
  int dim = 256;
  std::string affect_source = "va";
  nn::Embedding<S> phoneme_embed;
  std::vector<nn::FftBlock<S>> phoneme_blocks;
  nn::LipStem<S> lip_stem;
  std::vector<nn::FftBlock<S>> lip_blocks;
  // file-ingested affect: per-scalar learned linear lift
  Var<S> valence_w, valence_b, arousal_w, arousal_b;
  // stand-in trainable conv encoder over face patches
  nn::LipStem<S> face_stem;
  nn::Linear<S> face_to_valence, face_to_arousal;
  nn::Embedding<S> speaker_table;
  int n_speakers = 8;

  FeatureFrontend() = default;
  FeatureFrontend(nn::ParamStore<S>& ps, Rng& rng, const Config& cfg)
      : dim(cfg.dim), affect_source(cfg.affect_source), n_speakers(cfg.n_speakers) {
    phoneme_embed = nn::Embedding<S>(ps, "frontend.phoneme_embed", rng,
                                     int(phoneme_inventory().size()), cfg.dim);
    for (int i = 0; i < cfg.phoneme_blocks; ++i)
      phoneme_blocks.emplace_back(ps, "frontend.phoneme_fft" + std::to_string(i),
                                  rng, cfg.dim, cfg.encoder_heads,
                                  cfg.fft_hidden, cfg.fft_kernel);
    lip_stem = nn::LipStem<S>(ps, "frontend.lip_stem", rng, cfg.lip_size,
                              cfg.lip_size, 1, cfg.dim);
    for (int i = 0; i < cfg.lip_blocks; ++i)
      lip_blocks.emplace_back(ps, "frontend.lip_fft" + std::to_string(i), rng,
                              cfg.dim, cfg.encoder_heads, cfg.fft_hidden,
                              cfg.fft_kernel);
    valence_w = ps.create("frontend.valence.w", nn::xavier<S>(rng, 1, cfg.dim));
    valence_b = ps.create("frontend.valence.b", Mat<S>::Zero(1, cfg.dim));
    arousal_w = ps.create("frontend.arousal.w", nn::xavier<S>(rng, 1, cfg.dim));
    arousal_b = ps.create("frontend.arousal.b", Mat<S>::Zero(1, cfg.dim));
    face_stem = nn::LipStem<S>(ps, "frontend.face_stem", rng, cfg.lip_size,
                               cfg.lip_size, 1, cfg.dim);
    face_to_valence = nn::Linear<S>(ps, "frontend.face_v", rng, cfg.dim, cfg.dim);
    face_to_arousal = nn::Linear<S>(ps, "frontend.face_a", rng, cfg.dim, cfg.dim);
    speaker_table =
        nn::Embedding<S>(ps, "frontend.speakers", rng, cfg.n_speakers, cfg.dim);
  }

  // mask-aware: masked rows carry exact zeros; attention cannot see them
  Var<S> encode_phonemes(const PhonemeSequence& p) const {
    require(!p.tokens.empty(), "encode_phonemes: empty sequence");
    require(p.mask.size() == p.tokens.size(), "encode_phonemes: mask length");
    const Eigen::Index L = Eigen::Index(p.tokens.size());
    Mat<S> bias = Mat<S>::Zero(L, L);
    Vec<S> keep(L);
    for (Eigen::Index i = 0; i < L; ++i) {
      keep(i) = p.mask[size_t(i)] ? S(1) : S(0);
      if (!p.mask[size_t(i)]) bias.col(i).setConstant(S(-1e9));
    }
    auto h = nn::add_positions(phoneme_embed(p.tokens));
    h = ag::mul_rows(h, keep);
    for (const auto& blk : phoneme_blocks) h = blk(h, bias);
    return ag::mul_rows(h, keep);
  }

  Var<S> encode_lips(const RMat& lip_patches) const {
    if (!lip_patches.allFinite())
      throw InvalidFeature("encode_lips: non-finite patch values");
    auto x = ag::constant<S>(lip_patches.template cast<S>());
    auto h = nn::add_positions(lip_stem(x));
    for (const auto& blk : lip_blocks) h = blk(h);
    return h;
  }

  // returns (valence embedding, arousal embedding), each T_v x dim
  std::pair<Var<S>, Var<S>> encode_affect(const VideoFeatureTrack& v) const {
    if (affect_source == "face_features") {
      if (v.lip_patches.size() == 0)
        throw MissingFeature("encode_affect: no face patches");
      auto base = face_stem(ag::constant<S>(v.lip_patches.template cast<S>()));
      return {nn::add_positions(face_to_valence(base)),
              nn::add_positions(face_to_arousal(base))};
    }
    v.validate_affect();
    auto lift = [&](const RVec& track, const Var<S>& w, const Var<S>& b) {
      Mat<S> col = track.template cast<S>();
      auto scaled = ag::matmul(ag::constant<S>(std::move(col)), w);
      return nn::add_positions(ag::add_rowvec(scaled, b));
    };
    return {lift(v.valence_raw, valence_w, valence_b),
            lift(v.arousal_raw, arousal_w, arousal_b)};
  }

  // row of a trainable lookup table, L2-normalized
  Var<S> encode_speaker(int speaker_id) const {
    if (speaker_id < 0 || speaker_id >= n_speakers)
      throw UnknownSpeaker("encode_speaker: id " + std::to_string(speaker_id));
    return ag::l2_normalize_rows(speaker_table({speaker_id}));
  }
};

}  // namespace hpm

#endif  // HPM_FRONTEND_HPP
