#ifndef HPM_CONFIG_HPP
#define HPM_CONFIG_HPP

#include "hpm/common.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace hpm {

// Flat key-value configuration. Files hold `key = value` lines with `#`
// comments; CLI overrides arrive as `key=value` strings.
struct Config {
  // model
  int dim = 256;
  int encoder_heads = 2;
  int fft_hidden = 1024;
  int fft_kernel = 9;
  int phoneme_blocks = 4;
  int lip_blocks = 3;
  int decoder_blocks = 6;
  int postnet_channels = 256;
  // duration aligner
  bool aligner_enabled = true;
  int aligner_heads = 8;
  std::string aligner_expansion = "conv_transpose";  // or "duplicate"
  int aligner_stride = 3;
  int aligner_kernel = 10;
  // prosody adaptor
  bool use_valence = true;
  bool use_arousal = true;
  std::string affect_source = "va";  // or "face_features"
  // atmosphere booster
  bool booster_enabled = true;
  bool booster_strict_paper_attention = false;
  // audio / video clocks
  int sr = 22050;
  int hop = 256;
  double fps = 20.0;
  // data
  int n_speakers = 8;
  int n_emotions = 8;
  int lip_size = 32;
  int scene_dim = 1024;
  // training
  double lr = 1e-4;
  int steps = 2000;
  int batch = 16;
  std::uint64_t seed = 1;
  double grad_clip = 1.0;
  double lambda_mel = 1.0, lambda_pitch = 1.0, lambda_energy = 1.0,
         lambda_emo = 1.0;

  void set(const std::string& key, const std::string& value);
  std::string serialize() const;
  std::uint64_t hash() const;

  static Config from_file(const std::string& path);
  void apply_preset(const std::string& preset);
};

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidConfig("config: not a boolean: " + v);
}

}  // namespace detail

inline void Config::set(const std::string& key, const std::string& v) {
  using detail::parse_bool;
  if (key == "model.dim") dim = std::stoi(v);
  else if (key == "model.encoder_heads") encoder_heads = std::stoi(v);
  else if (key == "model.fft_hidden") fft_hidden = std::stoi(v);
  else if (key == "model.fft_kernel") fft_kernel = std::stoi(v);
  else if (key == "model.phoneme_blocks") phoneme_blocks = std::stoi(v);
  else if (key == "model.lip_blocks") lip_blocks = std::stoi(v);
  else if (key == "model.decoder_blocks") decoder_blocks = std::stoi(v);
  else if (key == "model.postnet_channels") postnet_channels = std::stoi(v);
  else if (key == "aligner.enabled") aligner_enabled = parse_bool(v);
  else if (key == "aligner.heads") aligner_heads = std::stoi(v);
  else if (key == "aligner.expansion") {
    if (v != "conv_transpose" && v != "duplicate")
      throw InvalidConfig("config: aligner.expansion must be conv_transpose or duplicate");
    aligner_expansion = v;
  } else if (key == "aligner.stride") aligner_stride = std::stoi(v);
  else if (key == "aligner.kernel") aligner_kernel = std::stoi(v);
  else if (key == "adaptor.use_valence") use_valence = parse_bool(v);
  else if (key == "adaptor.use_arousal") use_arousal = parse_bool(v);
  else if (key == "adaptor.affect_source") {
    if (v != "va" && v != "face_features")
      throw InvalidConfig("config: adaptor.affect_source must be va or face_features");
    affect_source = v;
  } else if (key == "booster.enabled") booster_enabled = parse_bool(v);
  else if (key == "booster.strict_paper_attention")
    booster_strict_paper_attention = parse_bool(v);
  else if (key == "audio.sr") sr = std::stoi(v);
  else if (key == "audio.hop") hop = std::stoi(v);
  else if (key == "video.fps") fps = std::stod(v);
  else if (key == "data.n_speakers") n_speakers = std::stoi(v);
  else if (key == "data.n_emotions") n_emotions = std::stoi(v);
  else if (key == "data.lip_size") lip_size = std::stoi(v);
  else if (key == "data.scene_dim") scene_dim = std::stoi(v);
  else if (key == "train.lr") lr = std::stod(v);
  else if (key == "train.steps") steps = std::stoi(v);
  else if (key == "train.batch") batch = std::stoi(v);
  else if (key == "train.seed") seed = std::stoull(v);
  else if (key == "train.grad_clip") grad_clip = std::stod(v);
  else if (key == "loss.lambda_mel") lambda_mel = std::stod(v);
  else if (key == "loss.lambda_pitch") lambda_pitch = std::stod(v);
  else if (key == "loss.lambda_energy") lambda_energy = std::stod(v);
  else if (key == "loss.lambda_emo") lambda_emo = std::stod(v);
  else throw InvalidConfig("config: unknown key: " + key);
}

inline std::string Config::serialize() const {
  std::ostringstream os;
  os << "model.dim = " << dim << "\n";
  os << "model.encoder_heads = " << encoder_heads << "\n";
  os << "model.fft_hidden = " << fft_hidden << "\n";
  os << "model.fft_kernel = " << fft_kernel << "\n";
  os << "model.phoneme_blocks = " << phoneme_blocks << "\n";
  os << "model.lip_blocks = " << lip_blocks << "\n";
  os << "model.decoder_blocks = " << decoder_blocks << "\n";
  os << "model.postnet_channels = " << postnet_channels << "\n";
  os << "aligner.enabled = " << (aligner_enabled ? "true" : "false") << "\n";
  os << "aligner.heads = " << aligner_heads << "\n";
  os << "aligner.expansion = " << aligner_expansion << "\n";
  os << "aligner.stride = " << aligner_stride << "\n";
  os << "aligner.kernel = " << aligner_kernel << "\n";
  os << "adaptor.use_valence = " << (use_valence ? "true" : "false") << "\n";
  os << "adaptor.use_arousal = " << (use_arousal ? "true" : "false") << "\n";
  os << "adaptor.affect_source = " << affect_source << "\n";
  os << "booster.enabled = " << (booster_enabled ? "true" : "false") << "\n";
  os << "booster.strict_paper_attention = "
     << (booster_strict_paper_attention ? "true" : "false") << "\n";
  os << "audio.sr = " << sr << "\n";
  os << "audio.hop = " << hop << "\n";
  os << "video.fps = " << fps << "\n";
  os << "data.n_speakers = " << n_speakers << "\n";
  os << "data.n_emotions = " << n_emotions << "\n";
  os << "data.lip_size = " << lip_size << "\n";
  os << "data.scene_dim = " << scene_dim << "\n";
  os << "train.lr = " << lr << "\n";
  os << "train.steps = " << steps << "\n";
  os << "train.batch = " << batch << "\n";
  os << "train.seed = " << seed << "\n";
  os << "train.grad_clip = " << grad_clip << "\n";
  os << "loss.lambda_mel = " << lambda_mel << "\n";
  os << "loss.lambda_pitch = " << lambda_pitch << "\n";
  os << "loss.lambda_energy = " << lambda_energy << "\n";
  os << "loss.lambda_emo = " << lambda_emo << "\n";
  return os.str();
}

inline std::uint64_t Config::hash() const {
  const std::string s = serialize();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  Config cfg;
  std::string line;
  while (std::getline(in, line)) {
    const auto hashpos = line.find('#');
    if (hashpos != std::string::npos) line.erase(hashpos);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) cfg.set(key, val);
  }
  return cfg;
}

// Ablation switch presets
inline void Config::apply_preset(const std::string& preset) {
  if (preset == "no-da") aligner_enabled = false;
  else if (preset == "no-pa") { use_valence = false; use_arousal = false; }
  else if (preset == "no-ab") booster_enabled = false;
  else if (preset == "no-valence") use_valence = false;
  else if (preset == "no-arousal") use_arousal = false;
  else if (preset == "face-features") affect_source = "face_features";
  else if (preset == "single-head") aligner_heads = 1;
  else if (preset == "duplicate") aligner_expansion = "duplicate";
  else if (preset == "full") {}
  else throw InvalidConfig("unknown ablation preset: " + preset);
}

}  // namespace hpm

#endif  // HPM_CONFIG_HPP
