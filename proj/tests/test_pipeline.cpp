#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "animpref/checkpoint.hpp"
#include "animpref/config.hpp"
#include "animpref/experiments.hpp"

using namespace animpref;
using namespace animpref::pipeline;

namespace {

config::RunConfig tiny_config() {
  config::RunConfig c;
  c.train.audio.steps = 30;
  c.train.audio.learning_rate = 3e-3;
  c.train.audio.warmup_steps = 5;
  c.train.skeleton.steps = 10;
  c.train.skeleton.learning_rate = 3e-3;
  c.train.skeleton.warmup_steps = 2;
  c.bench.n_tasks = 6;
  c.sample.steps = 4;
  return c;
}

codec::VideoTensor white_noise(const SynthTask& t, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  codec::VideoTensor v = t.video;
  for (auto& x : v.data.data) x = u(rng);
  return v;
}

codec::VideoTensor frozen_frame(const SynthTask& t, int frame) {
  codec::VideoTensor v = t.video;
  for (int f = 0; f < v.frames(); ++f)
    for (int y = 0; y < v.height(); ++y)
      for (int x = 0; x < v.width(); ++x)
        for (int c = 0; c < v.channels(); ++c) v.at(f, y, x, c) = t.video.at(frame, y, x, c);
  return v;
}

}  // namespace

TEST_CASE("mouth intensity tracks the aperture by construction") {
  const FaceLayout layout = layout_for(32, 32);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const SynthTask t = gen_task(s, 16, 32, 32);
    REQUIRE(t.aperture.size() == 16);
    CHECK(pearson(mouth_intensity(t.video, layout), t.aperture) > 0.99);
  }
}

TEST_CASE("zero envelope gives a constant mouth") {
  SynthOptions opts;
  opts.envelope = Envelope::kZero;
  const SynthTask t = gen_task(4, 16, 32, 32, opts);
  const auto m = mouth_intensity(t.video, layout_for(32, 32));
  double mean = 0, var = 0;
  for (double v : m) mean += v / double(m.size());
  for (double v : m) var += (v - mean) * (v - mean) / double(m.size());
  CHECK(var < 1e-8);
}

TEST_CASE("tasks are deterministic in the seed") {
  const SynthTask a = gen_task(9, 16, 32, 32), b = gen_task(9, 16, 32, 32), c = gen_task(10, 16, 32, 32);
  CHECK(a.video.data.data == b.video.data.data);
  CHECK(a.audio.samples == b.audio.samples);
  CHECK(a.skeleton.keypoints == b.skeleton.keypoints);
  CHECK(a.id == "task_000009");
  CHECK(a.video.data.data != c.video.data.data);
}

TEST_CASE("hand blob follows the wrist joint") {
  const FaceLayout layout = layout_for(32, 32);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const SynthTask t = gen_task(s, 16, 32, 32);
    const auto track = detect_hand(t.video, layout);
    for (int f = 0; f < 16; ++f) {
      const double wx = t.skeleton.at(f, kWristJoint, 0) * 32 - 0.5, wy = t.skeleton.at(f, kWristJoint, 1) * 32 - 0.5;
      CHECK(std::hypot(track[f][0] - wx, track[f][1] - wy) < 8.0);
      CHECK(std::hypot(t.hand[f][0] - wx, t.hand[f][1] - wy) < 1e-9);
    }
  }
}

TEST_CASE("static videos have no hand motion") {
  const SynthTask t = gen_task(3, 16, 32, 32);
  CHECK(motion_variance(detect_hand(frozen_frame(t, 5), layout_for(32, 32))) < 1e-20);
  CHECK(motion_variance(detect_hand(t.video, layout_for(32, 32))) > 0.0);
}

TEST_CASE("annotator on ground truth, shuffled and noise videos") {
  int shuffled_low = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const SynthTask t = gen_task(s, 16, 32, 32);
    const auto gt = synthetic_annotator(t, t.video);
    CHECK(gt.r_align == doctest::Approx(5.0).epsilon(0.01));
    CHECK(gt.r_fidelity == doctest::Approx(5.0).epsilon(0.01));
    shuffled_low += synthetic_annotator(t, shuffle_frames(t.video, 1000 + s)).r_align <= 2.0;
    if (s < 10) CHECK(synthetic_annotator(t, white_noise(t, s)).r_fidelity <= 2.0);
  }
  CHECK(shuffled_low >= 95);
}

TEST_CASE("ground-truth evaluation saturates sync") {
  std::vector<TaskEval> evals;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const SynthTask t = gen_task(s, 16, 32, 32);
    evals.push_back(evaluate_video(t, t.video, nullptr));
  }
  const EvalReport r = aggregate(evals);
  CHECK(r.sync_corr > 0.99);
  CHECK(r.recon_mse == 0.0);
  CHECK(r.tasks.front().id < r.tasks.back().id);
}

TEST_CASE("untrained model has no sync") {
  const config::RunConfig cfg = tiny_config();
  const LatentSpace space = config::latent_space(cfg);
  const models::ModelConfig mc = config::model_config(cfg);
  const auto tasks = generate_tasks(cfg, 500, 50);
  const EvalReport r =
      evaluate(mc, models::init_params(mc, 1), space, tasks, task_conditionings(mc, tasks, false), {4, 3});
  CHECK(r.tasks.size() == 50);
  CHECK(std::abs(r.sync_corr) < 3 * r.sync_corr_se);
}

TEST_CASE("phase plans must cover every parameter exactly once") {
  const config::RunConfig cfg = tiny_config();
  const models::ModelConfig mc = config::model_config(cfg);
  const models::DenoiserParams p = models::init_params(mc, 0);
  for (Phase ph : {Phase::kAudio, Phase::kSkeleton, Phase::kDpo}) CHECK_NOTHROW(resolve_plan(config::phase_plan(cfg, ph), p));
  PhasePlan plan = config::phase_plan(cfg, Phase::kAudio);
  plan.frozen.clear();
  CHECK_THROWS_AS(resolve_plan(plan, p), Error);
  plan = config::phase_plan(cfg, Phase::kAudio);
  plan.frozen.push_back("unembed.*");
  CHECK_THROWS_AS(resolve_plan(plan, p), Error);
  const auto skel = resolve_plan(config::phase_plan(cfg, Phase::kSkeleton), p);
  CHECK(skel("motion.skeleton.w"));
  CHECK_FALSE(skel("motion.audio.w"));
  CHECK_FALSE(skel("blocks.0.xattn.q"));
  CHECK(glob_match("blocks.*.attn.q", "blocks.12.attn.q"));
  CHECK_FALSE(glob_match("blocks.*.q", "blocks.0.attn.k"));
  CHECK(phase_from_string(to_string(Phase::kSft)) == Phase::kSft);
}

TEST_CASE("phased training honours the freeze contracts") {
  const config::RunConfig cfg = tiny_config();
  const auto tasks = generate_tasks(cfg, 0, cfg.bench.n_tasks);
  const BaseModel base = train_base(cfg, tasks);
  REQUIRE(base.phases == std::vector<std::string>{"audio", "skeleton"});
  CHECK(base.audio_losses.size() == 30);
  CHECK(base.skeleton_losses.size() == 10);

  // Redo the skeleton phase from the audio result and compare tensors.
  const LatentSpace space = config::latent_space(cfg);
  const models::ModelConfig mc = config::model_config(cfg);
  const BaseModel audio_only = train_base(cfg, tasks, false);
  const models::DenoiserParams init = models::init_params(mc, cfg.model.seed);
  for (const auto& [name, m] : audio_only.params.tensors) {
    if (name.rfind("motion.skeleton.", 0) == 0)
      CHECK(m == init.at(name));
  }
  for (const auto& [name, m] : base.params.tensors) {
    if (name.rfind("motion.skeleton.", 0) == 0)
      CHECK(m != audio_only.params.at(name));
    else
      CHECK(m == audio_only.params.at(name));
  }
}

TEST_CASE("flow-matching loss falls during the audio phase") {
  config::RunConfig cfg = tiny_config();
  cfg.train.audio.steps = 300;
  cfg.train.audio.warmup_steps = 20;
  const auto tasks = generate_tasks(cfg, 0, 24);
  const BaseModel base = train_base(cfg, tasks, false);
  double head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) {
    head += base.audio_losses[std::size_t(i)];
    tail += base.audio_losses[base.audio_losses.size() - 1 - std::size_t(i)];
  }
  CHECK(tail < 0.5 * head);
}

TEST_CASE("preference phase with zero learning rate is a no-op") {
  config::RunConfig cfg = tiny_config();
  cfg.dpo.core.learning_rate = 0.0;
  cfg.dpo.core.steps = 5;
  cfg.dpo.core.warmup_steps = 0;
  const auto tasks = generate_tasks(cfg, 0, 4);
  const BaseModel base = train_base(cfg, tasks);
  const LatentSpace space = config::latent_space(cfg);
  const models::ModelConfig mc = config::model_config(cfg);
  const auto conds = task_conditionings(mc, tasks, true);
  ScoreConfig sc;
  sc.candidates_per_task = 2;
  sc.steps = 4;
  const auto scored = score_tasks(mc, base.params, space, tasks, conds, sc);
  REQUIRE(scored.size() == 4);
  CHECK(scored[0].group.candidates.size() == 4);
  CHECK(scored[0].group.candidates[0].sample_id == tasks[0].id + "/s0");
  CHECK(scored[0].group.candidates[3].sample_id == tasks[0].id + "/smooth");
  std::map<std::string, Mat> latents;
  std::vector<prefs::PreferencePair> pairs;
  for (const auto& st : scored) {
    latents.insert(st.latents.begin(), st.latents.end());
    for (auto& p : prefs::build_pairs(st.group, prefs::PairStrategy::kBestVsWorst, 0.0)) pairs.push_back(p);
  }
  const DpoData data = make_dpo_data(pairs, tasks, latents);
  REQUIRE_FALSE(data.pairs.empty());
  const PhaseResult r = train_dpo(config::phase_plan(cfg, Phase::kDpo), cfg.dpo.core, mc, base.params, data, conds);
  CHECK(r.losses.size() == 5);
  CHECK(r.params.tensors == base.params.tensors);
}

TEST_CASE("checkpoints round trip through float32") {
  const config::RunConfig cfg = tiny_config();
  const models::ModelConfig mc = config::model_config(cfg);
  checkpoint::Checkpoint ck;
  ck.config = cfg;
  ck.params = models::init_params(mc, 5, false);
  ck.phases = {"audio"};
  const auto dir = std::filesystem::temp_directory_path() / "animpref_ckpt_test";
  std::filesystem::remove_all(dir);
  checkpoint::save(dir, ck);
  const checkpoint::Checkpoint back = checkpoint::load(dir);
  CHECK(back.phases == ck.phases);
  CHECK_FALSE(back.with_skeleton());
  CHECK(back.params.tensors == checkpoint::as_stored(ck.params).tensors);
  CHECK(config::to_json(back.config) == config::to_json(cfg));
  std::filesystem::remove_all(dir);
}

TEST_CASE("tasks persist to disk") {
  const auto dir = std::filesystem::temp_directory_path() / "animpref_task_test";
  std::filesystem::remove_all(dir);
  const SynthTask t = gen_task(12, 16, 32, 32);
  save_task(dir / "tasks" / t.id, t);
  const auto loaded = load_tasks(dir);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].id == t.id);
  CHECK(loaded[0].skeleton.joints == kJoints);
  for (std::size_t i = 0; i < t.video.data.size(); ++i)
    REQUIRE(std::abs(loaded[0].video.data.data[i] - t.video.data.data[i]) < 1e-6);
  for (std::size_t i = 0; i < t.aperture.size(); ++i) CHECK(std::abs(loaded[0].aperture[i] - t.aperture[i]) < 1e-6);
  std::filesystem::remove_all(dir);
}

TEST_CASE("latent space scaling and geometry") {
  const config::RunConfig cfg = tiny_config();
  const LatentSpace space = config::latent_space(cfg);
  const SynthTask t = gen_task(1, 16, 32, 32);
  const Mat z = space.encode(t.video);
  CHECK(z.rows() == 4 * 4 * 4);
  CHECK(z.cols() == 16);
  const codec::LatentVideo raw = codec::encode(t.video, space.basis);
  CHECK((z - space.scale * raw.tokens).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((space.encode(space.decode(0.01 * z)) - 0.01 * z).cwiseAbs().maxCoeff() < 1e-10);
  models::ModelConfig mc = config::model_config(cfg);
  CHECK(mc.tokens() == 64);
  mc.d = 8;
  CHECK_THROWS_AS(bind_geometry(mc, space), Error);
}

TEST_CASE("seed mixing and parallel loops") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  std::vector<int> out(100);
  parallel_for(out.size(), [&](std::size_t i) { out[i] = int(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == int(i * i));
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 7) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}

TEST_CASE("paired difference") {
  const PairedDiff d = paired_difference({3, 4, 5, 6}, {1, 3, 2, 4});
  CHECK(d.mean == doctest::Approx(2.0));
  // diffs 2, 1, 3, 2: sample sd sqrt(2/3), se = sd / 2
  CHECK(d.se == doctest::Approx(std::sqrt(2.0 / 3.0) / 2.0));
  CHECK_THROWS_AS(paired_difference({1}, {1, 2}), Error);
}

TEST_CASE("frame shuffle and smoothing keep content") {
  const SynthTask t = gen_task(2, 16, 32, 32);
  const codec::VideoTensor s = shuffle_frames(t.video, 4);
  double a = 0, b = 0;
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    a += s.data.data[i];
    b += t.video.data.data[i];
  }
  CHECK(a == doctest::Approx(b));
  CHECK(s.data.data != t.video.data.data);
  CHECK(smooth_frames(t.video, 0).data.data == t.video.data.data);
  CHECK(total_variation(smooth_frames(t.video, 2)) < total_variation(t.video));
}
