#ifndef HPM_DATASET_HPP
#define HPM_DATASET_HPP

#include "hpm/frontend.hpp"
#include "hpm/io.hpp"
#include "hpm/model.hpp"
#include "hpm/signal.hpp"

#include <array>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace hpm::data {

namespace fs = std::filesystem;

// fixed (valence, arousal) circumplex anchor per emotion class; documented in
// docs/data-format.md
struct AffectAnchor {
  double valence, arousal;
};

inline const std::array<AffectAnchor, 8>& affect_anchors() {
  // arousal levels are spaced 0.18 apart so every class has a distinct mean
  // energy; the per-sample jitter is zero-mean and leaves that mean intact
  static const std::array<AffectAnchor, 8> anchors = {{
      {-0.60, 0.72},   // 0 angry
      {-0.70, -0.36},  // 1 disgust
      {-0.55, 0.36},   // 2 fear
      {0.80, 0.18},    // 3 happy
      {0.05, 0.00},    // 4 neutral
      {-0.70, -0.54},  // 5 sad
      {0.40, 0.54},    // 6 surprise
      {0.30, -0.18},   // 7 others
  }};
  return anchors;
}

inline const std::array<std::string, 8>& emotion_names() {
  static const std::array<std::string, 8> names = {
      "angry", "disgust", "fear", "happy", "neutral", "sad", "surprise",
      "others"};
  return names;
}

struct SyntheticSpec {
  int n_samples = 32;
  int n_speakers = 8;
  int n_emotions = 8;
  double fps = 20.0;
  int sr = 16000;
  int hs = 200;        // hop size; (sr/hs)/fps = 4 mel frames per video frame
  int min_frames = 8;  // utterance length range in video frames
  int max_frames = 16;
  int lip_size = 32;
  int scene_dim = 64;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_samples < 1 || n_speakers < 1 || n_speakers > 8 || n_emotions != 8 ||
        fps <= 0 || sr <= 0 || hs <= 0 || min_frames < 1 ||
        max_frames < min_frames || lip_size < 8 || scene_dim < 1)
      throw InvalidConfig("SyntheticSpec: invalid field");
    if (sr % hs != 0 || std::abs(sr / fps - std::round(sr / fps)) > 1e-9)
      throw InvalidConfig("SyntheticSpec: sr must be divisible by hs and fps");
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "n_samples = " << n_samples << "\n"
       << "n_speakers = " << n_speakers << "\n"
       << "n_emotions = " << n_emotions << "\n"
       << "fps = " << fps << "\n"
       << "sr = " << sr << "\n"
       << "hs = " << hs << "\n"
       << "min_frames = " << min_frames << "\n"
       << "max_frames = " << max_frames << "\n"
       << "lip_size = " << lip_size << "\n"
       << "scene_dim = " << scene_dim << "\n"
       << "seed = " << seed << "\n";
    return os.str();
  }

  std::uint64_t hash() const {
    const std::string s = serialize();
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

struct ManifestEntry {
  std::string id;
  std::string path;   // directory, relative to the dataset root
  std::string split;  // train | val | test
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  std::uint64_t spec_hash = 0;

  std::vector<ManifestEntry> split(const std::string& name) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == name) out.push_back(e);
    return out;
  }
};

// ---- generation internals -------------------------------------------------

struct GeneratedSample {
  std::vector<std::string> symbols;
  RVec valence, arousal;  // per video frame
  RMat lips;              // T_v x (lip*lip)
  RVec scene;             // scene_dim
  RVec audio;
  int speaker_id = 0;
  int emotion = 0;
};

inline double clamp_affect(double v) { return std::clamp(v, -0.95, 0.95); }

// smooth sinusoidal wander around the class anchor, kept inside [-1, 1]
inline void affect_contours(const SyntheticSpec& spec, int emotion, int t_video,
                            Rng& rng, RVec& valence, RVec& arousal) {
  const auto& anchor = affect_anchors()[size_t(emotion)];
  // jitter amplitude scaled to the headroom below the [-0.95, 0.95] clamp so
  // the contour keeps its full swing (a clipped flat contour would decouple
  // arousal from the extracted energy)
  const double jv =
      (0.95 - std::abs(anchor.valence)) * (0.5 + 0.5 * rng.uniform());
  const double ja =
      (0.95 - std::abs(anchor.arousal)) * (0.7 + 0.3 * rng.uniform());
  const double pv = rng.uniform() * 2.0 * M_PI;
  const double pa = rng.uniform() * 2.0 * M_PI;
  const double cycles = 1.0 + double(rng.uniform_int(0, 1));
  valence.resize(t_video);
  arousal.resize(t_video);
  for (int t = 0; t < t_video; ++t) {
    const double phase = 2.0 * M_PI * cycles * t / double(t_video);
    valence(t) = clamp_affect(anchor.valence + jv * std::sin(phase + pv));
    arousal(t) = clamp_affect(anchor.arousal + ja * std::sin(phase + pa));
  }
}

// grayscale ellipse whose vertical aperture tracks the amplitude envelope
inline RVec render_lip_frame(int lip_size, double amplitude) {
  const double cx = (lip_size - 1) / 2.0, cy = (lip_size - 1) / 2.0;
  const double rx = 0.32 * lip_size;
  const double ry = (0.06 + 0.26 * amplitude) * lip_size;
  RVec img(lip_size * lip_size);
  for (int y = 0; y < lip_size; ++y)
    for (int x = 0; x < lip_size; ++x) {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      const double d = std::sqrt(dx * dx + dy * dy);
      img(y * lip_size + x) = 1.0 / (1.0 + std::exp(10.0 * (d - 1.0)));
    }
  return img;
}

inline double speaker_base_f0(int speaker_id) {
  return 120.0 + 18.0 * speaker_id;  // 120..246 Hz for 8 speakers
}

// amplitude envelope value for a given arousal value; linear so the extracted
// energy contour stays highly correlated with the written affect track
inline double arousal_to_amplitude(double arousal) {
  return 0.15 + 0.35 * (arousal + 1.0);
}

inline RVec scene_prototype(std::uint64_t seed, int emotion, int scene_dim) {
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * std::uint64_t(emotion + 1)));
  RVec proto(scene_dim);
  for (int i = 0; i < scene_dim; ++i) proto(i) = rng.normal();
  return proto;
}

inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> pool = {
      "hello", "thank", "you",  "never", "always", "again", "sorry", "please",
      "stop",  "look",  "here", "there", "friend", "story", "quiet", "now"};
  return pool;
}

inline GeneratedSample generate_sample(const SyntheticSpec& spec, int index,
                                       Rng& rng) {
  GeneratedSample g;
  g.emotion = index % spec.n_emotions;  // exhaustive class coverage
  g.speaker_id = rng.uniform_int(0, spec.n_speakers - 1);
  const int t_video = spec.min_frames +
                      rng.uniform_int(0, spec.max_frames - spec.min_frames);

  // text: a few pool words joined with spaces
  const int n_words = 2 + rng.uniform_int(0, 2);
  std::string text;
  for (int w = 0; w < n_words; ++w) {
    if (w) text += " ";
    text += word_pool()[size_t(rng.uniform_int(0, int(word_pool().size()) - 1))];
  }
  g.symbols = phoneme_symbols(tokenize(text));

  affect_contours(spec, g.emotion, t_video, rng, g.valence, g.arousal);

  // audio: harmonic stack; F0 follows speaker base pitch modulated by valence,
  // amplitude follows arousal; contours linearly interpolated to sample rate
  const int spf = int(std::llround(spec.sr / spec.fps));  // samples per frame
  const int64_t n = int64_t(t_video) * spf;
  g.audio.resize(n);
  const double base_f0 = speaker_base_f0(g.speaker_id);
  double phase = rng.uniform() * 2.0 * M_PI;
  auto lerp_track = [&](const RVec& track, int64_t s) {
    const double pos = std::min(double(t_video - 1), double(s) / spf);
    const int i0 = int(pos);
    const int i1 = std::min(t_video - 1, i0 + 1);
    const double f = pos - i0;
    return track(i0) * (1.0 - f) + track(i1) * f;
  };
  for (int64_t s = 0; s < n; ++s) {
    const double f0 = base_f0 * (1.0 + 0.25 * lerp_track(g.valence, s));
    const double amp = arousal_to_amplitude(lerp_track(g.arousal, s));
    phase += 2.0 * M_PI * f0 / spec.sr;
    g.audio(s) =
        amp * (std::sin(phase) + 0.5 * std::sin(2.0 * phase) +
               0.25 * std::sin(3.0 * phase)) /
        1.75;
  }

  g.lips.resize(t_video, spec.lip_size * spec.lip_size);
  for (int t = 0; t < t_video; ++t)
    g.lips.row(t) =
        render_lip_frame(spec.lip_size, arousal_to_amplitude(g.arousal(t)))
            .transpose();

  g.scene = scene_prototype(spec.seed, g.emotion, spec.scene_dim);
  for (int i = 0; i < spec.scene_dim; ++i) g.scene(i) += 0.1 * rng.normal();
  return g;
}

// ---- on-disk layout -------------------------------------------------------

inline std::string sample_dir_name(int index) {
  std::ostringstream os;
  os << "sample_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

inline void write_sample(const fs::path& dir, const SyntheticSpec& spec,
                         const GeneratedSample& g) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());

  std::string toks;
  for (size_t i = 0; i < g.symbols.size(); ++i) {
    if (i) toks += " ";
    toks += g.symbols[i];
  }
  io::write_text(dir / "tokens.txt", toks + "\n");

  const auto u32 = [](int64_t v) { return std::uint32_t(v); };
  io::write_bin(dir / "lips.npyish",
                {u32(g.lips.rows()), u32(spec.lip_size), u32(spec.lip_size), 1},
                g.lips);

  std::vector<std::vector<double>> affect;
  for (Eigen::Index t = 0; t < g.valence.size(); ++t)
    affect.push_back({g.valence(t), g.arousal(t)});
  io::write_csv(dir / "affect.csv", "frame,valence,arousal", affect);

  io::write_bin(dir / "scene.bin", {1, u32(g.scene.size()), 1, 1},
                g.scene.transpose());
  io::write_text(dir / "speaker.txt", std::to_string(g.speaker_id) + "\n");
  io::write_text(dir / "emotion.txt", std::to_string(g.emotion) + "\n");

  // extracted targets, trimmed to exactly round(r * T_v) frames
  sig::MelConfig mc;
  mc.sr = spec.sr;
  mc.hop = spec.hs;
  // one-video-frame analysis window keeps the extracted energy contour tightly
  // coupled to the per-frame arousal that generated the amplitude envelope
  mc.win = int(std::llround(spec.sr / spec.fps));
  auto targets = sig::extract_targets(g.audio, mc);
  const double r = double(spec.sr) / spec.hs / spec.fps;
  const Eigen::Index t_mel = Eigen::Index(std::llround(r * g.lips.rows()));
  if (targets.mel.frames.rows() < t_mel)
    throw InvalidAudio("write_sample: too few extracted frames");
  io::write_bin(dir / "mel.bin", {u32(t_mel), 80, 1, 1},
                targets.mel.frames.topRows(t_mel));
  std::vector<std::vector<double>> pitch_rows, energy_rows;
  for (Eigen::Index t = 0; t < t_mel; ++t) {
    pitch_rows.push_back({targets.contours.pitch(t)});
    energy_rows.push_back({targets.contours.energy(t)});
  }
  io::write_csv(dir / "pitch.csv", "frame,log_f0", pitch_rows);
  io::write_csv(dir / "energy.csv", "frame,energy", energy_rows);
}

inline void write_manifest(const fs::path& root, const DatasetManifest& m) {
  std::ostringstream os;
  os << "# hpm-dataset-manifest v1\n";
  os << "# seed=" << m.seed << "\n";
  os << "# spec_hash=" << m.spec_hash << "\n";
  for (const auto& e : m.entries)
    os << e.id << "\t" << e.path << "\t" << e.split << "\n";
  io::write_text(root / "manifest.txt", os.str());
}

inline DatasetManifest read_manifest(const fs::path& root) {
  const std::string text = io::read_text(root / "manifest.txt");
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (line.find("seed") != std::string::npos && eq != std::string::npos)
        m.seed = std::stoull(line.substr(eq + 1));
      if (line.find("spec_hash") != std::string::npos && eq != std::string::npos)
        m.spec_hash = std::stoull(line.substr(eq + 1));
      continue;
    }
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(std::getline(ls, e.id, '\t') && std::getline(ls, e.path, '\t') &&
          std::getline(ls, e.split)))
      throw IoError("manifest: bad line: " + line);
    m.entries.push_back(std::move(e));
  }
  return m;
}

// pure function of the spec: running twice produces byte-identical output
inline DatasetManifest generate_dataset(const SyntheticSpec& spec,
                                        const fs::path& root) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string());

  Rng master(spec.seed);
  DatasetManifest m;
  m.seed = spec.seed;
  m.spec_hash = spec.hash();
  std::vector<int> labels;
  for (int i = 0; i < spec.n_samples; ++i) {
    Rng rng = master.child(std::uint64_t(i) + 1);
    const GeneratedSample g = generate_sample(spec, i, rng);
    const std::string name = sample_dir_name(i);
    write_sample(root / name, spec, g);
    m.entries.push_back({name, name, ""});
    labels.push_back(g.emotion);
  }

  // 60/10/30 split, disjoint and exhaustive, stratified by emotion class:
  // samples are shuffled within each class and then dealt round-robin, so
  // every class that has enough samples lands in the training split instead
  // of occasionally ending up held-out in full
  std::vector<std::vector<int>> by_class(size_t(spec.n_emotions));
  for (int i = 0; i < spec.n_samples; ++i)
    by_class[size_t(labels[size_t(i)])].push_back(i);
  Rng split_rng = master.child(0);
  for (auto& cls : by_class)
    for (size_t i = cls.size(); i > 1; --i)
      std::swap(cls[i - 1], cls[size_t(split_rng.uniform_int(0, int(i) - 1))]);
  std::vector<int> order;
  order.reserve(size_t(spec.n_samples));
  for (size_t k = 0; int(order.size()) < spec.n_samples; ++k)
    for (const auto& cls : by_class)
      if (k < cls.size()) order.push_back(cls[k]);
  const int n_train = int(std::llround(0.6 * spec.n_samples));
  const int n_val = int(std::llround(0.1 * spec.n_samples));
  for (int k = 0; k < spec.n_samples; ++k) {
    const int idx = order[size_t(k)];
    m.entries[size_t(idx)].split =
        k < n_train ? "train" : (k < n_train + n_val ? "val" : "test");
  }
  write_manifest(root, m);
  io::write_text(root / "spec.txt", spec.serialize());
  return m;
}

// ---- loading --------------------------------------------------------------

inline DubbingSample load_sample(const fs::path& root, const ManifestEntry& e,
                                 double fps = 20.0) {
  const fs::path dir = root / e.path;
  DubbingSample s;
  s.id = e.id;

  std::istringstream toks(io::read_text(dir / "tokens.txt"));
  std::string sym;
  while (toks >> sym) s.phonemes.tokens.push_back(phoneme_id(sym));
  if (s.phonemes.tokens.empty())
    throw IoError("load_sample: empty tokens in " + dir.string());
  s.phonemes.mask.assign(s.phonemes.tokens.size(), true);

  const auto lips = io::read_bin(dir / "lips.npyish");
  s.video.lip_patches = lips.data;
  const auto affect = io::read_csv(dir / "affect.csv", 2);
  s.video.valence_raw.resize(Eigen::Index(affect.size()));
  s.video.arousal_raw.resize(Eigen::Index(affect.size()));
  for (size_t t = 0; t < affect.size(); ++t) {
    s.video.valence_raw(Eigen::Index(t)) = affect[t][0];
    s.video.arousal_raw(Eigen::Index(t)) = affect[t][1];
  }
  s.video.scene_raw = io::read_bin(dir / "scene.bin").data;
  s.video.fps = fps;
  s.speaker_id = std::stoi(io::read_text(dir / "speaker.txt"));
  s.emotion_label = std::stoi(io::read_text(dir / "emotion.txt"));

  s.mel_target = io::read_bin(dir / "mel.bin").data;
  const auto pitch = io::read_csv(dir / "pitch.csv", 1);
  const auto energy = io::read_csv(dir / "energy.csv", 1);
  s.pitch_target.resize(Eigen::Index(pitch.size()));
  s.energy_target.resize(Eigen::Index(energy.size()));
  for (size_t t = 0; t < pitch.size(); ++t)
    s.pitch_target(Eigen::Index(t)) = pitch[t][0];
  for (size_t t = 0; t < energy.size(); ++t)
    s.energy_target(Eigen::Index(t)) = energy[t][0];
  if (s.pitch_target.size() != s.mel_target.rows() ||
      s.energy_target.size() != s.mel_target.rows())
    throw IoError("load_sample: target length mismatch in " + dir.string());
  return s;
}

inline std::vector<DubbingSample> load_split(const fs::path& root,
                                             const DatasetManifest& m,
                                             const std::string& split,
                                             double fps = 20.0) {
  std::vector<DubbingSample> out;
  for (const auto& e : m.split(split)) out.push_back(load_sample(root, e, fps));
  return out;
}

}  // namespace hpm::data

#endif  // HPM_DATASET_HPP
