#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hpm/dataset.hpp"
#include "hpm/train.hpp"

#include <filesystem>

using namespace hpm;
namespace fs = std::filesystem;

namespace {

Config micro_config() {
  Config cfg;
  cfg.dim = 16;
  cfg.fft_hidden = 32;
  cfg.fft_kernel = 3;
  cfg.encoder_heads = 2;
  cfg.aligner_heads = 2;
  cfg.phoneme_blocks = 1;
  cfg.lip_blocks = 1;
  cfg.decoder_blocks = 1;
  cfg.postnet_channels = 8;
  cfg.lip_size = 8;
  cfg.scene_dim = 8;
  cfg.sr = 16000;
  cfg.hop = 200;
  cfg.fps = 20.0;
  cfg.batch = 2;
  cfg.steps = 10;
  cfg.lr = 1e-3;
  cfg.seed = 1;
  return cfg;
}

DubbingSample make_sample(const Config& cfg, int t_video, std::uint64_t seed) {
  Rng rng(seed);
  DubbingSample s;
  s.id = "toy";
  s.phonemes = tokenize("go now");
  s.video.lip_patches = RMat(t_video, cfg.lip_size * cfg.lip_size);
  rng.fill_uniform(s.video.lip_patches, 0.0, 1.0);
  s.video.valence_raw = RVec::LinSpaced(t_video, -0.4, 0.4);
  s.video.arousal_raw = RVec::Constant(t_video, 0.2);
  s.video.scene_raw = RMat(1, cfg.scene_dim);
  rng.fill_normal(s.video.scene_raw, 1.0);
  s.speaker_id = 1;
  s.emotion_label = 3;
  const Eigen::Index ty =
      Eigen::Index(std::llround(double(cfg.sr) / cfg.hop / cfg.fps * t_video));
  s.mel_target = RMat(ty, 80);
  rng.fill_normal(s.mel_target, 1.0);
  s.pitch_target = RVec::Constant(ty, 5.0);
  s.energy_target = RVec::Constant(ty, 0.2);
  return s;
}

}  // namespace

TEST_CASE("forward produces consistent shapes in teacher and inference mode") {
  const Config cfg = micro_config();
  Model model(cfg);
  const auto s = make_sample(cfg, 6, 3);
  auto out = model.forward(s, s.mel_target.rows());
  const Eigen::Index ty = s.mel_target.rows();
  CHECK(out.mel_len == ty);
  CHECK(out.mel_before.rows() == ty);
  CHECK(out.mel_after.cols() == 80);
  CHECK(out.pitch.rows() == ty);
  CHECK(out.energy.rows() == ty);
  CHECK(out.prosody.cols() == 2 * cfg.dim);
  CHECK(out.emotion_ctx.rows() == ty);
  CHECK(out.emotion_logits.valid());
  CHECK(out.emotion_logits.cols() == cfg.n_emotions);
  CHECK(!out.align_weights.empty());

  auto inf = model.forward(s);  // inference length round(r * T_v) = 24
  CHECK(inf.mel_len == 24);
  CHECK(inf.mel_after.rows() == 24);
}

TEST_CASE("loss report matches the weighted graph total") {
  Config cfg = micro_config();
  cfg.lambda_pitch = 2.0;
  cfg.lambda_emo = 0.5;
  Model model(cfg);
  const auto s = make_sample(cfg, 5, 5);
  auto out = model.forward(s, s.mel_target.rows());
  auto [total, rep] = model.loss(s, out);
  CHECK(total.value()(0, 0) == doctest::Approx(rep.total).epsilon(1e-12));
  CHECK(rep.total == doctest::Approx(rep.mel + 2.0 * rep.pitch + rep.energy +
                                     0.5 * rep.emo)
                         .epsilon(1e-12));
  const auto bad = make_sample(cfg, 4, 5);
  CHECK_THROWS_AS(model.loss(bad, out), ShapeError);
}

TEST_CASE("every ablation preset runs end to end") {
  for (const std::string preset :
       {"no-da", "no-pa", "no-ab", "no-valence", "no-arousal", "face-features",
        "single-head", "duplicate", "full"}) {
    Config cfg = micro_config();
    cfg.apply_preset(preset);
    Model model(cfg);
    const auto s = make_sample(cfg, 5, 7);
    auto out = model.forward(s, s.mel_target.rows());
    CHECK(out.mel_after.rows() == s.mel_target.rows());
    auto [total, rep] = model.loss(s, out);
    CHECK(std::isfinite(rep.total));
    if (preset == "no-ab") {
      CHECK(!out.emotion_logits.valid());
      CHECK(rep.emo == 0.0);
    } else {
      CHECK(out.emotion_logits.valid());
    }
    if (preset == "no-da") CHECK(out.align_weights.empty());
  }
  Config cfg = micro_config();
  CHECK_THROWS_AS(cfg.apply_preset("no-such-preset"), InvalidConfig);
}

TEST_CASE("checkpoint round-trip reproduces forward outputs to 1e-12") {
  const Config cfg = micro_config();
  Model model(cfg);
  const auto s = make_sample(cfg, 6, 9);
  std::vector<DubbingSample> ds{s};
  train(model, ds);  // move off the init point so the test is not vacuous

  const fs::path ckpt = fs::temp_directory_path() / "hpm_model_rt.ckpt";
  model.save(ckpt);
  auto model2 = Model::load(ckpt);
  auto a = model.forward(s, s.mel_target.rows());
  auto b = model2.forward(s, s.mel_target.rows());
  CHECK((a.mel_after.value() - b.mel_after.value()).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((a.pitch.value() - b.pitch.value()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.emotion_logits.value() - b.emotion_logits.value())
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  CHECK_THROWS_AS(Model::load("/nonexistent/path.ckpt"), MissingModel);
}

TEST_CASE("checkpoints reject corrupted headers") {
  const Config cfg = micro_config();
  Model model(cfg);
  const fs::path ckpt = fs::temp_directory_path() / "hpm_model_bad.ckpt";
  model.save(ckpt);
  // flip a byte inside the stored config text
  std::fstream f(ckpt, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(40);
  f.put('~');
  f.close();
  CHECK_THROWS_AS(Model::load(ckpt), IoError);
}

TEST_CASE("fixed-seed training is deterministic to 1e-10") {
  const Config cfg = micro_config();
  std::vector<DubbingSample> ds;
  for (int i = 0; i < 3; ++i) ds.push_back(make_sample(cfg, 5 + i, 11 + i));

  auto run = [&] {
    Model model(cfg);
    auto copy = ds;
    return train(model, copy).history;
  };
  const auto h1 = run();
  const auto h2 = run();
  REQUIRE(h1.size() == h2.size());
  for (size_t i = 0; i < h1.size(); ++i)
    CHECK(std::abs(h1[i].total - h2[i].total) < 1e-10);
}

TEST_CASE("training reduces the loss and rejects empty datasets") {
  Config cfg = micro_config();
  cfg.steps = 30;
  Model model(cfg);
  std::vector<DubbingSample> ds{make_sample(cfg, 6, 17)};
  const auto result = train(model, ds);
  REQUIRE(int(result.history.size()) == cfg.steps);
  CHECK(result.history.back().total < result.history.front().total);

  std::vector<DubbingSample> empty;
  CHECK_THROWS_AS(train(model, empty), EmptyInput);
  CHECK_THROWS_AS(evaluate(model, empty), EmptyInput);
}

TEST_CASE("norm stats round-trip and normalization identities") {
  const Config cfg = micro_config();
  std::vector<DubbingSample> ds{make_sample(cfg, 6, 19),
                                make_sample(cfg, 8, 23)};
  const NormStats st = compute_norm_stats(ds);
  const RMat mel = ds[0].mel_target;
  CHECK((st.denormalize_mel(st.normalize_mel(mel)) - mel).cwiseAbs().maxCoeff() <
        1e-9);
  // normalized train mels have near-zero mean per bin
  RVec acc = RVec::Zero(80);
  int64_t n = 0;
  for (const auto& s : ds) {
    const RMat z = st.normalize_mel(s.mel_target);
    for (Eigen::Index t = 0; t < z.rows(); ++t) acc += z.row(t).transpose();
    n += z.rows();
  }
  CHECK((acc / double(n)).cwiseAbs().maxCoeff() < 1e-9);
}
