// hpm: hierarchical-prosody movie dubbing toolkit
//
// Subcommands: synth-data, train, infer, eval, export-mel, ablate.
// All commands honor the HPM_SEED environment variable as a seed override.

#include "hpm/dataset.hpp"
#include "hpm/metrics.hpp"
#include "hpm/model.hpp"
#include "hpm/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("HPM_SEED");
  if (!s || !*s) return std::nullopt;
  return std::stoull(s);
}

// dataset directories carry a spec.txt; audio/video geometry and feature
// dimensions must match it for shapes to line up
void apply_dataset_spec(hpm::Config& cfg, const fs::path& root) {
  const fs::path spec_file = root / "spec.txt";
  if (!fs::exists(spec_file)) return;
  std::istringstream in(hpm::io::read_text(spec_file));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "sr") cfg.sr = std::stoi(val);
    else if (key == "hs") cfg.hop = std::stoi(val);
    else if (key == "fps") cfg.fps = std::stod(val);
    else if (key == "lip_size") cfg.lip_size = std::stoi(val);
    else if (key == "scene_dim") cfg.scene_dim = std::stoi(val);
    else if (key == "n_speakers") cfg.n_speakers = std::stoi(val);
    else if (key == "n_emotions") cfg.n_emotions = std::stoi(val);
  }
}

void apply_overrides(hpm::Config& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw hpm::InvalidConfig("--set expects key=value, got: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

void emit(bool as_json, const json& j, const std::string& text) {
  if (as_json)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << text;
}

hpm::sig::MelConfig mel_config_for(const hpm::Config& cfg) {
  hpm::sig::MelConfig mc;
  mc.sr = cfg.sr;
  mc.hop = cfg.hop;
  mc.win = std::min(1024, int(std::llround(cfg.sr / cfg.fps)));
  return mc;
}

// ---- subcommand bodies ----------------------------------------------------

int cmd_synth_data(const std::string& out, int n, std::uint64_t seed,
                   int speakers, int scene_dim, bool as_json) {
  hpm::data::SyntheticSpec spec;
  spec.n_samples = n;
  spec.n_speakers = speakers;
  spec.scene_dim = scene_dim;
  spec.seed = env_seed().value_or(seed);
  const auto manifest = hpm::data::generate_dataset(spec, out);
  int tr = 0, va = 0, te = 0;
  for (const auto& e : manifest.entries) {
    tr += e.split == "train";
    va += e.split == "val";
    te += e.split == "test";
  }
  json j{{"out", out},
         {"n_samples", n},
         {"seed", spec.seed},
         {"spec_hash", manifest.spec_hash},
         {"splits", {{"train", tr}, {"val", va}, {"test", te}}}};
  std::ostringstream os;
  os << "wrote " << n << " samples to " << out << " (train/val/test = " << tr
     << "/" << va << "/" << te << ", seed " << spec.seed << ")\n";
  emit(as_json, j, os.str());
  return 0;
}

hpm::Config load_config(const std::string& config_path, const std::string& data,
                        const std::vector<std::string>& sets,
                        const std::string& preset) {
  hpm::Config cfg;
  if (!config_path.empty()) cfg = hpm::Config::from_file(config_path);
  if (!data.empty()) apply_dataset_spec(cfg, data);
  apply_overrides(cfg, sets);
  if (!preset.empty()) cfg.apply_preset(preset);
  if (auto s = env_seed()) cfg.seed = *s;
  return cfg;
}

int cmd_train(const hpm::Config& cfg, const std::string& data,
              const std::string& out, const std::string& history,
              bool as_json) {
  const auto manifest = hpm::data::read_manifest(data);
  auto samples = hpm::data::load_split(data, manifest, "train", cfg.fps);
  hpm::Model model(cfg);
  std::ostringstream hist;
  hist << "step,mel,pitch,energy,emo,total\n";
  const auto result = hpm::train(model, samples, [&](const hpm::LossReport& r) {
    hist << r.step << "," << r.mel << "," << r.pitch << "," << r.energy << ","
         << r.emo << "," << r.total << "\n";
    if (r.step % 50 == 0 || r.step == 1)
      std::cerr << "step " << r.step << " total " << r.total << "\n";
  });
  model.save(out);
  if (!history.empty()) hpm::io::write_text(history, hist.str());
  const auto& last = result.history.back();
  json j{{"checkpoint", out},
         {"steps", cfg.steps},
         {"seed", cfg.seed},
         {"train_samples", samples.size()},
         {"final_loss",
          {{"mel", last.mel},
           {"pitch", last.pitch},
           {"energy", last.energy},
           {"emo", last.emo},
           {"total", last.total}}}};
  std::ostringstream os;
  os << "trained " << cfg.steps << " steps on " << samples.size()
     << " samples; final total loss " << last.total << "; saved " << out
     << "\n";
  emit(as_json, j, os.str());
  return 0;
}

int cmd_infer(const std::string& model_path, const std::string& data,
              const std::string& split, const std::string& out, bool wav,
              bool as_json) {
  auto model = hpm::Model::load(model_path);
  const auto manifest = hpm::data::read_manifest(data);
  const auto entries = manifest.split(split);
  if (entries.empty()) throw hpm::EmptyInput("infer: empty split " + split);
  fs::create_directories(out);
  const auto mc = mel_config_for(model.config());
  json items = json::array();
  for (const auto& e : entries) {
    auto sample = hpm::data::load_sample(data, e, model.config().fps);
    auto o = model.forward(sample);  // inference length: round(r * T_v)
    const hpm::RMat mel =
        model.stats().denormalize_mel(o.mel_after.value());
    const fs::path dir = fs::path(out) / e.id;
    fs::create_directories(dir);
    hpm::io::write_bin(dir / "mel.bin",
                       {std::uint32_t(mel.rows()), 80, 1, 1}, mel);
    json item{{"id", e.id}, {"frames", mel.rows()}};
    if (model.config().booster_enabled) {
      hpm::Vec<hpm::Real> probs =
          hpm::softmax_vector<hpm::Real>(o.emotion_logits.value());
      Eigen::Index arg = 0;
      probs.maxCoeff(&arg);
      hpm::io::write_text(dir / "emotion_pred.txt",
                          std::to_string(int(arg)) + "\n");
      item["emotion_pred"] = int(arg);
    }
    if (wav) {
      hpm::sig::MelSpectrogram ms{mel, mc.sr, mc.hop, 0.0, mc.sr / 2.0};
      const hpm::RVec audio = hpm::sig::griffin_lim(ms, 30);
      hpm::io::write_wav16(dir / "gen.wav", audio, mc.sr);
    }
    items.push_back(item);
  }
  // record the generating config so eval knows which heads existed
  hpm::io::write_text(fs::path(out) / "gen_config.txt",
                      model.config().serialize());
  json j{{"out", out}, {"split", split}, {"samples", items}};
  std::ostringstream os;
  os << "generated " << entries.size() << " mels into " << out << "\n";
  emit(as_json, j, os.str());
  return 0;
}

int cmd_export_mel(const std::string& data, const std::string& id,
                   const std::string& out, const std::string& wav,
                   bool as_json) {
  const auto manifest = hpm::data::read_manifest(data);
  const hpm::data::ManifestEntry* entry = nullptr;
  for (const auto& e : manifest.entries)
    if (e.id == id) entry = &e;
  if (!entry) throw hpm::IoError("export-mel: unknown sample id " + id);
  const auto sample = hpm::data::load_sample(data, *entry);
  hpm::io::write_bin(out, {std::uint32_t(sample.mel_target.rows()), 80, 1, 1},
                     sample.mel_target);
  hpm::Config cfg;
  apply_dataset_spec(cfg, data);
  if (!wav.empty()) {
    hpm::sig::MelSpectrogram ms{sample.mel_target, cfg.sr, cfg.hop, 0.0,
                                cfg.sr / 2.0};
    hpm::io::write_wav16(wav, hpm::sig::griffin_lim(ms, 30), cfg.sr);
  }
  json j{{"id", id}, {"out", out}, {"frames", sample.mel_target.rows()}};
  std::ostringstream os;
  os << "exported " << sample.mel_target.rows() << " frames to " << out << "\n";
  emit(as_json, j, os.str());
  return 0;
}

int cmd_eval(const std::string& ref, const std::string& gen,
             const std::string& report_csv, const std::string& summary_path,
             int clf_steps, bool as_json) {
  const auto manifest = hpm::data::read_manifest(ref);

  // which heads existed in the generator
  bool booster_enabled = true;
  const fs::path gen_cfg = fs::path(gen) / "gen_config.txt";
  if (fs::exists(gen_cfg)) {
    hpm::Config cfg;
    std::istringstream in(hpm::io::read_text(gen_cfg));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      if (line.find("booster.enabled") != std::string::npos)
        booster_enabled = line.find("true", eq) != std::string::npos;
    }
  }

  std::ostringstream csv;
  csv << "id,mcd,mcd_dtw,mcd_dtw_sl,path_len,len_ratio\n";
  double sum_dtw = 0.0, sum_sl = 0.0;
  int n = 0, gemo_hits = 0, gemo_total = 0;
  bool any_nonfinite = false;
  std::vector<hpm::metrics::LabeledMel> gen_emo, gen_spk;
  for (const auto& e : manifest.split("test")) {
    const fs::path gen_dir = fs::path(gen) / e.id;
    if (!fs::exists(gen_dir / "mel.bin")) continue;
    const auto sample = hpm::data::load_sample(ref, e);
    const hpm::RMat gen_mel = hpm::io::read_bin(gen_dir / "mel.bin").data;
    const auto rep = hpm::metrics::score_pair(gen_mel, sample.mel_target);
    csv << e.id << "," << rep.mcd << "," << rep.mcd_dtw << "," << rep.mcd_dtw_sl
        << "," << rep.path_len << "," << rep.len_ratio << "\n";
    if (!std::isfinite(rep.mcd_dtw) || !std::isfinite(rep.mcd_dtw_sl))
      any_nonfinite = true;
    sum_dtw += rep.mcd_dtw;
    sum_sl += rep.mcd_dtw_sl;
    ++n;
    gen_emo.push_back({gen_mel, sample.emotion_label});
    gen_spk.push_back({gen_mel, sample.speaker_id});
    if (booster_enabled && fs::exists(gen_dir / "emotion_pred.txt")) {
      gemo_hits += std::stoi(hpm::io::read_text(gen_dir / "emotion_pred.txt")) ==
                   sample.emotion_label;
      ++gemo_total;
    }
  }
  if (n == 0) throw hpm::EmptyInput("eval: no generated test samples found");
  hpm::io::write_text(report_csv, csv.str());

  // desk-scale emotion / identity accuracy: tiny mel classifiers trained on
  // the reference train+val mels, scored on the generated mels
  std::vector<hpm::metrics::LabeledMel> ref_emo, ref_spk;
  for (const auto& split : {"train", "val"})
    for (const auto& e : manifest.split(split)) {
      const auto s = hpm::data::load_sample(ref, e);
      ref_emo.push_back({s.mel_target, s.emotion_label});
      ref_spk.push_back({s.mel_target, s.speaker_id});
    }
  const std::uint64_t seed = env_seed().value_or(1);
  hpm::metrics::MelClassifier<hpm::Real> emo_clf(8, 32, seed + 100);
  hpm::metrics::MelClassifier<hpm::Real> spk_clf(8, 32, seed + 200);
  hpm::metrics::train_classifier(emo_clf, ref_emo, clf_steps, 3e-3, seed + 1);
  hpm::metrics::train_classifier(spk_clf, ref_spk, clf_steps, 3e-3, seed + 2);
  const double emo_acc = hpm::metrics::accuracy(emo_clf, gen_emo);
  const double id_acc = hpm::metrics::accuracy(spk_clf, gen_spk);

  json summary{{"n", n},
               {"mcd_dtw_mean", sum_dtw / n},
               {"mcd_dtw_sl_mean", sum_sl / n},
               {"emo_acc", emo_acc},
               {"id_acc", id_acc}};
  if (booster_enabled && gemo_total > 0)
    summary["gemo_acc"] = double(gemo_hits) / gemo_total;
  else
    summary["gemo_acc"] = "N/A";
  hpm::io::write_text(summary_path, summary.dump(2) + "\n");

  std::ostringstream os;
  os << "evaluated " << n << " samples: MCD-DTW " << sum_dtw / n
     << ", MCD-DTW-SL " << sum_sl / n << ", Emo.Acc " << emo_acc << ", Id.Acc "
     << id_acc << ", G_emo Acc "
     << (booster_enabled && gemo_total > 0
             ? std::to_string(double(gemo_hits) / gemo_total)
             : std::string("N/A"))
     << "\n";
  emit(as_json, summary, os.str());
  return any_nonfinite ? 3 : 0;
}

int cmd_ablate(const hpm::Config& base_cfg, const std::string& preset,
               const std::string& data, const std::string& out, bool as_json) {
  fs::create_directories(out);
  const auto manifest = hpm::data::read_manifest(data);
  auto train_set = hpm::data::load_split(data, manifest, "train", base_cfg.fps);
  auto held_out = hpm::data::load_split(data, manifest, "val", base_cfg.fps);
  for (auto& s : hpm::data::load_split(data, manifest, "test", base_cfg.fps))
    held_out.push_back(std::move(s));

  auto run = [&](const hpm::Config& cfg, const std::string& tag) {
    hpm::Model model(cfg);
    std::vector<hpm::DubbingSample> train_copy = train_set;
    hpm::train(model, train_copy);
    model.save(fs::path(out) / (tag + ".ckpt"));
    return hpm::evaluate(model, held_out);
  };

  hpm::Config ablated = base_cfg;
  ablated.apply_preset(preset);
  std::cerr << "training full model...\n";
  const auto full = run(base_cfg, "full");
  std::cerr << "training preset " << preset << "...\n";
  const auto abl = run(ablated, preset);

  auto to_json = [](const hpm::LossReport& r) {
    return json{{"mel", r.mel},
                {"pitch", r.pitch},
                {"energy", r.energy},
                {"emo", r.emo},
                {"pitch_plus_energy", r.pitch + r.energy},
                {"total", r.total}};
  };
  json j{{"preset", preset},
         {"steps", base_cfg.steps},
         {"held_out_samples", held_out.size()},
         {"full", to_json(full)},
         {"ablated", to_json(abl)}};
  hpm::io::write_text(fs::path(out) / "report.json", j.dump(2) + "\n");
  std::ostringstream os;
  os << "preset " << preset << " vs full on " << held_out.size()
     << " held-out samples:\n"
     << "  full:    pitch+energy " << full.pitch + full.energy << ", total "
     << full.total << "\n"
     << "  ablated: pitch+energy " << abl.pitch + abl.energy << ", total "
     << abl.total << "\n";
  emit(as_json, j, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical-prosody movie dubbing toolkit"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable JSON output");

  // synth-data
  auto* sd = app.add_subcommand("synth-data", "generate a synthetic dataset");
  std::string sd_out = "data";
  int sd_n = 32, sd_speakers = 8, sd_scene = 64;
  std::uint64_t sd_seed = 1;
  sd->add_option("--out", sd_out, "output directory")->required();
  sd->add_option("--n", sd_n, "number of samples");
  sd->add_option("--seed", sd_seed, "generator seed");
  sd->add_option("--speakers", sd_speakers, "number of speakers (<= 8)");
  sd->add_option("--scene-dim", sd_scene, "scene feature width");

  // shared model-command options
  std::string config_path, data_dir, preset;
  std::vector<std::string> sets;

  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_out = "model.ckpt", tr_history;
  tr->add_option("--config", config_path, "config file (key = value)");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint path");
  tr->add_option("--history", tr_history, "loss history csv path");
  tr->add_option("--set", sets, "config override key=value (repeatable)");
  tr->add_option("--preset", preset,
                 "ablation preset: no-da|no-pa|no-ab|no-valence|no-arousal|"
                 "face-features|single-head|duplicate");

  auto* in = app.add_subcommand("infer", "generate mels from a checkpoint");
  std::string in_model, in_split = "test", in_out = "gen";
  bool in_wav = false;
  in->add_option("--model", in_model, "checkpoint path")->required();
  in->add_option("--data", data_dir, "dataset directory")->required();
  in->add_option("--split", in_split, "split to generate (train|val|test)");
  in->add_option("--out", in_out, "output directory");
  in->add_flag("--wav", in_wav, "also write Griffin-Lim waveforms");

  auto* ev = app.add_subcommand("eval", "score generated mels");
  std::string ev_ref, ev_gen, ev_csv = "report.csv", ev_sum = "summary.json";
  int ev_clf_steps = 800;
  ev->add_option("--ref", ev_ref, "reference dataset directory")->required();
  ev->add_option("--gen", ev_gen, "generated mel directory")->required();
  ev->add_option("--report", ev_csv, "per-sample csv path");
  ev->add_option("--summary", ev_sum, "summary json path");
  ev->add_option("--clf-steps", ev_clf_steps, "classifier training steps");

  auto* em = app.add_subcommand("export-mel", "export a ground-truth mel");
  std::string em_id, em_out = "mel.bin", em_wav;
  em->add_option("--data", data_dir, "dataset directory")->required();
  em->add_option("--id", em_id, "sample id")->required();
  em->add_option("--out", em_out, "output mel.bin path");
  em->add_option("--wav", em_wav, "also write a Griffin-Lim waveform here");

  auto* ab = app.add_subcommand("ablate", "train full vs preset and compare");
  std::string ab_out = "ablation";
  ab->add_option("--preset", preset,
                 "ablation preset: no-da|no-pa|no-ab|no-valence|no-arousal|"
                 "face-features|single-head|duplicate")
      ->required();
  ab->add_option("--config", config_path, "config file (key = value)");
  ab->add_option("--data", data_dir, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory");
  ab->add_option("--set", sets, "config override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sd->parsed())
      return cmd_synth_data(sd_out, sd_n, sd_seed, sd_speakers, sd_scene,
                            as_json);
    if (tr->parsed()) {
      const auto cfg = load_config(config_path, data_dir, sets, preset);
      return cmd_train(cfg, data_dir, tr_out, tr_history, as_json);
    }
    if (in->parsed())
      return cmd_infer(in_model, data_dir, in_split, in_out, in_wav, as_json);
    if (ev->parsed())
      return cmd_eval(ev_ref, ev_gen, ev_csv, ev_sum, ev_clf_steps, as_json);
    if (em->parsed())
      return cmd_export_mel(data_dir, em_id, em_out, em_wav, as_json);
    if (ab->parsed()) {
      const auto cfg = load_config(config_path, data_dir, sets, "");
      return cmd_ablate(cfg, preset, data_dir, ab_out, as_json);
    }
  } catch (const hpm::HpmError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
