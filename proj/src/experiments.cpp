#include "animpref/experiments.hpp"

#include <algorithm>

namespace animpref::pipeline {

std::vector<SynthTask> generate_tasks(const config::RunConfig& cfg, std::uint64_t first_seed, int n, Envelope envelope) {
  SynthOptions opts = config::synth_options(cfg);
  opts.envelope = envelope;
  std::vector<SynthTask> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = gen_task(first_seed + i, cfg.bench.T, cfg.bench.H, cfg.bench.W, opts);
  });
  return out;
}

std::vector<Mat> encode_tasks(const LatentSpace& space, const std::vector<SynthTask>& tasks) {
  std::vector<Mat> out(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) { out[i] = space.encode(tasks[i].video); });
  return out;
}

BaseModel train_base(const config::RunConfig& cfg, const std::vector<SynthTask>& tasks, bool skeleton_phase) {
  const LatentSpace space = config::latent_space(cfg);
  const models::ModelConfig mc = config::model_config(cfg);
  const std::vector<Mat> latents = encode_tasks(space, tasks);
  BaseModel base;
  PhaseResult audio = train_fm(config::phase_plan(cfg, Phase::kAudio), mc, models::init_params(mc, cfg.model.seed), latents,
                               task_conditionings(mc, tasks, false));
  base.params = std::move(audio.params);
  base.audio_losses = std::move(audio.losses);
  base.phases.push_back("audio");
  if (skeleton_phase && mc.use_skeleton && cfg.train.skeleton.steps > 0) {
    PhaseResult skel = train_fm(config::phase_plan(cfg, Phase::kSkeleton), mc, std::move(base.params), latents,
                                task_conditionings(mc, tasks, true));
    base.params = std::move(skel.params);
    base.skeleton_losses = std::move(skel.losses);
    base.phases.push_back("skeleton");
  }
  return base;
}

namespace {

double head_mean(const std::vector<double>& v, bool tail) {
  if (v.empty()) return 0.0;
  const std::size_t n = std::max<std::size_t>(1, std::min<std::size_t>(100, v.size() / 10));
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += tail ? v[v.size() - 1 - i] : v[i];
  return s / double(n);
}

std::vector<double> r_align_of(const EvalReport& r) {
  std::vector<double> out;
  for (const auto& t : r.tasks) out.push_back(t.r_align);
  return out;
}

}  // namespace

std::vector<ConditioningArm> ablate_conditioning(const config::RunConfig& cfg, const std::vector<SynthTask>& train,
                                                 const std::vector<SynthTask>& eval,
                                                 const std::vector<motion::Strategy>& strategies) {
  const LatentSpace space = config::latent_space(cfg);
  const std::vector<Mat> latents = encode_tasks(space, train);
  std::vector<ConditioningArm> arms;
  for (motion::Strategy s : strategies) {
    config::RunConfig arm_cfg = cfg;
    arm_cfg.motion.conditioning = motion::to_string(s);
    const models::ModelConfig mc = config::model_config(arm_cfg);
    PhaseResult r = train_fm(config::phase_plan(arm_cfg, Phase::kAudio), mc, models::init_params(mc, cfg.model.seed),
                             latents, task_conditionings(mc, train, false));
    ConditioningArm arm;
    arm.strategy = s;
    arm.initial_loss = head_mean(r.losses, false);
    arm.final_loss = head_mean(r.losses, true);
    arm.report = evaluate(mc, r.params, space, eval, task_conditionings(mc, eval, false), {cfg.sample.steps, cfg.sample.seed},
                          cfg.annotator);
    arms.push_back(std::move(arm));
  }
  return arms;
}

const PreferenceArm& PreferenceStudy::arm(const std::string& name) const {
  for (const auto& a : arms)
    if (a.name == name) return a;
  throw Error(ErrorKind::kOutOfRange, "no preference arm named " + name);
}

PreferenceStudy preference_study(const config::RunConfig& cfg, const BaseModel& base, const std::vector<SynthTask>& train,
                                 const std::vector<SynthTask>& eval, const std::vector<prefs::PairStrategy>& strategies,
                                 bool sft_arm) {
  const LatentSpace space = config::latent_space(cfg);
  const models::ModelConfig mc = config::model_config(cfg);
  const bool skel = mc.use_skeleton && std::find(base.phases.begin(), base.phases.end(), "skeleton") != base.phases.end();
  const auto train_conds = task_conditionings(mc, train, skel);
  const auto eval_conds = task_conditionings(mc, eval, skel);
  const SampleConfig sample{cfg.sample.steps, cfg.sample.seed};

  PreferenceStudy study;
  study.base = evaluate(mc, base.params, space, eval, eval_conds, sample, cfg.annotator);
  const std::vector<double> base_align = r_align_of(study.base);

  ScoreConfig sc;
  sc.candidates_per_task = cfg.score.candidates_per_task;
  sc.degraded = cfg.score.degraded;
  sc.steps = cfg.sample.steps;
  sc.seed = cfg.score.seed;
  const std::vector<ScoredTask> scored = score_tasks(mc, base.params, space, train, train_conds, sc, cfg.annotator);
  std::map<std::string, Mat> latents;
  for (const auto& st : scored)
    for (const auto& [id, z] : st.latents) latents.emplace(id, z);

  const auto pairs_for = [&](prefs::PairStrategy s) {
    std::vector<prefs::PreferencePair> pairs;
    for (const auto& st : scored)
      for (auto& p : prefs::build_pairs(st.group, s, cfg.dpo.core.min_margin)) pairs.push_back(std::move(p));
    return pairs;
  };
  const auto finish = [&](PreferenceArm arm, const models::DenoiserParams& params) {
    arm.report = evaluate(mc, params, space, eval, eval_conds, sample, cfg.annotator);
    arm.lift = paired_difference(r_align_of(arm.report), base_align);
    return arm;
  };

  for (prefs::PairStrategy s : strategies) {
    PreferenceArm arm;
    arm.name = prefs::to_string(s);
    const DpoData data = make_dpo_data(pairs_for(s), train, latents);
    arm.pairs = data.pairs.size();
    const PhaseResult r = train_dpo(config::phase_plan(cfg, Phase::kDpo), cfg.dpo.core, mc, base.params, data, train_conds);
    study.arms.push_back(finish(std::move(arm), r.params));
  }

  if (sft_arm) {
    const DpoData data = make_dpo_data(pairs_for(prefs::pair_strategy_from_string(cfg.dpo.strategy)), train, latents);
    std::vector<Mat> winners;
    std::vector<models::Conditioning> conds;
    for (std::size_t k = 0; k < data.pairs.size(); ++k) {
      winners.push_back(data.latents.at(data.pairs[k].winner_id));
      conds.push_back(train_conds[data.condition[k]]);
    }
    PhasePlan plan = config::phase_plan(cfg, Phase::kDpo);
    plan.phase = Phase::kSft;
    PreferenceArm arm;
    arm.name = "sft_winners";
    arm.pairs = winners.size();
    const PhaseResult r = train_fm(plan, mc, base.params, winners, conds);
    study.arms.push_back(finish(std::move(arm), r.params));
  }
  return study;
}

nlohmann::ordered_json to_json(const std::vector<ConditioningArm>& arms) {
  nlohmann::ordered_json j;
  j["what"] = "conditioning";
  j["arms"] = nlohmann::ordered_json::array();
  for (const auto& a : arms) {
    nlohmann::ordered_json e;
    e["strategy"] = motion::to_string(a.strategy);
    e["initial_loss"] = a.initial_loss;
    e["final_loss"] = a.final_loss;
    e["report"] = to_json(a.report, false);
    j["arms"].push_back(e);
  }
  return j;
}

nlohmann::ordered_json to_json(const PreferenceStudy& study) {
  nlohmann::ordered_json j;
  j["what"] = "pairing";
  j["base"] = to_json(study.base, false);
  j["arms"] = nlohmann::ordered_json::array();
  for (const auto& a : study.arms) {
    nlohmann::ordered_json e;
    e["name"] = a.name;
    e["pairs"] = a.pairs;
    e["r_align_lift"] = a.lift.mean;
    e["r_align_lift_se"] = a.lift.se;
    e["report"] = to_json(a.report, false);
    j["arms"].push_back(e);
  }
  return j;
}

}  // namespace animpref::pipeline
