// Command-line driver for the desk-scale benchmark workflow.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "animpref/checkpoint.hpp"
#include "animpref/config.hpp"
#include "animpref/experiments.hpp"
#include "animpref/gradcheck.hpp"
#include "animpref/pipeline.hpp"
#include "animpref/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace animpref;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

config::RunConfig load_config(const std::string& path) { return path.empty() ? config::RunConfig{} : config::load(path); }

fs::path output_dir_of(const fs::path& file) {
  const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  fs::create_directories(dir);
  return dir;
}

void log_progress(const char* phase, int step, int total, double loss) {
  if (step == 0 || (step + 1) % 100 == 0 || step + 1 == total)
    std::printf("[%s] step %d/%d loss %.6f\n", phase, step + 1, total, loss);
}

// Model-defining sections must agree between a checkpoint and a new config.
void require_same_model(const config::RunConfig& a, const config::RunConfig& b) {
  const auto ja = config::to_json(a), jb = config::to_json(b);
  for (const char* key : {"codec", "model", "motion"})
    if (ja[key] != jb[key]) throw config::ConfigError(key, "differs from the checkpoint's configuration");
  for (const char* key : {"T", "H", "W", "sample_rate", "frame_rate"})
    if (ja["bench"][key] != jb["bench"][key])
      throw config::ConfigError(std::string("bench.") + key, "differs from the checkpoint's configuration");
}

const pipeline::SynthTask& find_task(const std::vector<pipeline::SynthTask>& tasks, const std::string& id) {
  for (const auto& t : tasks)
    if (t.id == id) return t;
  throw Error(ErrorKind::kOutOfRange, "no task with id " + id);
}

// ------------------------------------------------------------------ commands

int cmd_gen_data(const std::string& config_path, const fs::path& out) {
  const auto cfg = load_config(config_path);
  const auto tasks = pipeline::generate_tasks(cfg, cfg.bench.seed, cfg.bench.n_tasks);
  for (const auto& t : tasks) pipeline::save_task(out / "tasks" / t.id, t);
  config::echo_resolved(out, cfg);
  std::printf("wrote %zu tasks to %s\n", tasks.size(), (out / "tasks").string().c_str());
  return 0;
}

int cmd_train_base(const std::string& config_path, const fs::path& data, const std::string& phase_name,
                   const std::string& init, const fs::path& out) {
  const auto cfg = load_config(config_path);
  const pipeline::Phase phase = pipeline::phase_from_string(phase_name);
  if (phase != pipeline::Phase::kAudio && phase != pipeline::Phase::kSkeleton)
    throw config::ConfigError("--phase", "train-base runs the audio or skeleton phase");
  const models::ModelConfig mc = config::model_config(cfg);
  checkpoint::Checkpoint ckpt;
  ckpt.config = cfg;
  if (!init.empty()) {
    checkpoint::Checkpoint start = checkpoint::load(init);
    require_same_model(start.config, cfg);
    ckpt.params = std::move(start.params);
    ckpt.phases = std::move(start.phases);
  } else if (phase == pipeline::Phase::kSkeleton) {
    throw config::ConfigError("--init", "the skeleton phase starts from an audio-phase checkpoint");
  } else {
    ckpt.params = models::init_params(mc, cfg.model.seed);
  }
  const auto tasks = pipeline::load_tasks(data);
  const auto space = config::latent_space(cfg);
  const auto plan = config::phase_plan(cfg, phase);
  const bool with_skeleton = phase == pipeline::Phase::kSkeleton;
  const auto result = pipeline::train_fm(plan, mc, std::move(ckpt.params), pipeline::encode_tasks(space, tasks),
                                         pipeline::task_conditionings(mc, tasks, with_skeleton),
                                         [&](int step, double loss) { log_progress(phase_name.c_str(), step, plan.steps, loss); });
  ckpt.params = result.params;
  ckpt.phases.push_back(phase_name);
  checkpoint::save(out, ckpt);
  pipeline::write_loss_csv(out / "loss.csv", result.losses);
  config::echo_resolved(out, cfg);
  return 0;
}

int cmd_score(const fs::path& ckpt_dir, const fs::path& data, int candidates, const fs::path& out) {
  const auto ckpt = checkpoint::load(ckpt_dir);
  auto cfg = ckpt.config;
  if (candidates > 0) cfg.score.candidates_per_task = candidates;
  config::validate(cfg);
  const auto mc = config::model_config(cfg);
  const auto space = config::latent_space(cfg);
  const auto tasks = pipeline::load_tasks(data);
  pipeline::ScoreConfig sc;
  sc.candidates_per_task = cfg.score.candidates_per_task;
  sc.degraded = cfg.score.degraded;
  sc.steps = cfg.sample.steps;
  sc.seed = cfg.score.seed;
  const auto scored = pipeline::score_tasks(mc, ckpt.params, space, tasks,
                                            pipeline::task_conditionings(mc, tasks, ckpt.with_skeleton()), sc, cfg.annotator);
  const fs::path dir = output_dir_of(out);
  std::vector<prefs::PreferenceGroup> groups;
  for (const auto& st : scored) {
    groups.push_back(st.group);
    for (const auto& [id, z] : st.latents) {
      const fs::path file = dir / "candidates" / (id + ".ten");
      fs::create_directories(file.parent_path());
      write_ten(file, z);
    }
  }
  prefs::write_groups(out, groups);
  config::echo_resolved(dir, cfg);
  std::printf("scored %zu groups\n", groups.size());
  return 0;
}

int cmd_build_pairs(const fs::path& in, const std::string& strategy, double min_margin, const fs::path& out) {
  const auto groups = prefs::read_groups(in);
  const auto s = prefs::pair_strategy_from_string(strategy);
  std::vector<prefs::PreferencePair> pairs;
  for (const auto& g : groups)
    for (auto& p : prefs::build_pairs(g, s, min_margin)) pairs.push_back(std::move(p));
  config::RunConfig cfg;
  cfg.dpo.strategy = strategy;
  config::echo_resolved(output_dir_of(out), cfg);
  prefs::write_pairs(out, pairs);
  std::cout << prefs::to_json(prefs::dataset_stats(pairs)).dump() << '\n';
  return 0;
}

std::map<std::string, Mat> load_candidate_latents(const fs::path& dir, const std::vector<prefs::PreferencePair>& pairs) {
  std::map<std::string, Mat> out;
  for (const auto& p : pairs)
    for (const auto& id : {p.winner_id, p.loser_id})
      if (!out.count(id)) out.emplace(id, read_ten_mat(dir / (id + ".ten")));
  return out;
}

int cmd_train_dpo(const fs::path& ckpt_dir, const fs::path& pairs_path, const std::string& config_path, const fs::path& data,
                  const std::string& candidates_dir, const fs::path& out) {
  auto ckpt = checkpoint::load(ckpt_dir);
  const auto run = load_config(config_path);
  require_same_model(ckpt.config, run);
  const auto mc = config::model_config(ckpt.config);
  const auto pairs = prefs::read_pairs(pairs_path);
  const fs::path cand = candidates_dir.empty() ? pairs_path.parent_path() / "candidates" : fs::path(candidates_dir);
  const auto tasks = pipeline::load_tasks(data);
  const auto dpo_data = pipeline::make_dpo_data(pairs, tasks, load_candidate_latents(cand, pairs));

  // Pinned reference policy, stored next to the result.
  checkpoint::save(out / "reference", ckpt);
  const auto plan = config::phase_plan(run, pipeline::Phase::kDpo);
  const auto result = pipeline::train_dpo(plan, run.dpo.core, mc, ckpt.params, dpo_data,
                                          pipeline::task_conditionings(mc, tasks, ckpt.with_skeleton()),
                                          [&](int step, double loss) { log_progress("dpo", step, plan.steps, loss); });
  ckpt.params = result.params;
  ckpt.phases.push_back("dpo");
  ckpt.config.dpo = run.dpo;
  checkpoint::save(out, ckpt);
  pipeline::write_loss_csv(out / "loss.csv", result.losses);
  config::echo_resolved(out, run);
  return 0;
}

int cmd_sample(const fs::path& ckpt_dir, const fs::path& data, const std::string& task_id, std::optional<int> steps,
               std::optional<std::uint64_t> seed, const fs::path& out) {
  const auto ckpt = checkpoint::load(ckpt_dir);
  const auto mc = config::model_config(ckpt.config);
  const auto space = config::latent_space(ckpt.config);
  const auto tasks = pipeline::load_tasks(data);
  const auto& task = find_task(tasks, task_id);
  const Mat z = pipeline::sample_latent(mc, ckpt.params, pipeline::task_conditioning(mc, task, ckpt.with_skeleton()),
                                        mc.tokens(), steps.value_or(ckpt.config.sample.steps),
                                        seed.value_or(ckpt.config.sample.seed));
  output_dir_of(out);
  write_ten(out, space.decode(z).data);
  return 0;
}

int cmd_eval(const fs::path& ckpt_dir, const fs::path& data, std::optional<int> steps, std::optional<std::uint64_t> seed,
             const fs::path& out) {
  const auto ckpt = checkpoint::load(ckpt_dir);
  const auto mc = config::model_config(ckpt.config);
  const auto space = config::latent_space(ckpt.config);
  const auto tasks = pipeline::load_tasks(data);
  const pipeline::SampleConfig sample{steps.value_or(ckpt.config.sample.steps), seed.value_or(ckpt.config.sample.seed)};
  const auto report = pipeline::evaluate(mc, ckpt.params, space, tasks,
                                         pipeline::task_conditionings(mc, tasks, ckpt.with_skeleton()), sample,
                                         ckpt.config.annotator);
  const fs::path dir = output_dir_of(out);
  config::write_json(out, pipeline::to_json(report));
  config::echo_resolved(dir, ckpt.config);
  std::printf("sync_corr %.4f motion_var %.4f recon_mse %.6f psnr %.3f r_align %.4f\n", report.sync_corr, report.motion_var,
              report.recon_mse, report.psnr, report.r_align);
  return 0;
}

int cmd_ablate(const std::string& what, const std::string& config_path, const fs::path& out) {
  const auto cfg = load_config(config_path);
  const auto train = pipeline::generate_tasks(cfg, cfg.bench.seed, cfg.bench.n_tasks);
  const auto eval = pipeline::generate_tasks(cfg, cfg.bench.eval_seed, cfg.bench.eval_tasks);
  nlohmann::ordered_json report;
  if (what == "conditioning") {
    report = pipeline::to_json(pipeline::ablate_conditioning(
        cfg, train, eval, {motion::Strategy::kFull, motion::Strategy::kPartialK2, motion::Strategy::kSubsample}));
  } else if (what == "pairing") {
    const auto base = pipeline::train_base(cfg, train);
    const std::vector<prefs::PairStrategy> all(std::begin(prefs::kAllPairStrategies), std::end(prefs::kAllPairStrategies));
    report = pipeline::to_json(pipeline::preference_study(cfg, base, train, eval, all, true));
  } else {
    throw config::ConfigError("--what", "expected conditioning or pairing");
  }
  const fs::path dir = output_dir_of(out);
  config::write_json(out, report);
  config::echo_resolved(dir, cfg);
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& config_path) {
  const auto cfg = load_config(config_path);
  const auto results = gradcheck::run_standard_suites(cfg.model.seed);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-28s coords %6zu within %.4f max_rel %.3e (%s) %s\n", r.name.c_str(), r.coordinates, r.fraction_within(),
                r.max_rel_error, r.worst_coordinate.c_str(), r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  if (!ok) {
    std::cerr << nlohmann::json{{"error", "gradcheck"}, {"message", "analytic and finite-difference gradients disagree"}}.dump() << '\n';
    return kExitValidation;
  }
  return 0;
}

int report_error(const Error& e) {
  nlohmann::ordered_json j;
  j["error"] = to_string(e.kind());
  j["message"] = e.what();
  if (const auto* ce = dynamic_cast<const config::ConfigError*>(&e)) j["key_path"] = ce->key_path();
  std::cerr << j.dump() << '\n';
  return e.kind() == ErrorKind::kNonFinite ? kExitNumeric : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale preference-tuned motion-conditioned video diffusion"};
  app.require_subcommand(1);

  std::string config_path, data, out, phase, init, ckpt, in, strategy, task_id, pairs, what, candidates_dir;
  double min_margin = prefs::kDefaultMinMargin;
  int candidates = 0;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-data", "Generate synthetic tasks");
  gen->add_option("--config", config_path, "Run config (JSON)");
  gen->add_option("--out", out, "Output directory")->required();

  auto* tb = app.add_subcommand("train-base", "Audio or skeleton training phase");
  tb->add_option("--config", config_path, "Run config (JSON)");
  tb->add_option("--data", data, "Dataset directory")->required();
  tb->add_option("--phase", phase, "audio | skeleton")->required();
  tb->add_option("--init", init, "Starting checkpoint (required for the skeleton phase)");
  tb->add_option("--out", out, "Output checkpoint directory")->required();

  auto* sc = app.add_subcommand("score", "Sample and oracle-score candidates into preference groups");
  sc->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  sc->add_option("--data", data, "Dataset directory")->required();
  sc->add_option("--candidates-per-task", candidates, "Sampled candidates per task");
  sc->add_option("--out", out, "groups.jsonl output")->required();

  auto* bp = app.add_subcommand("build-pairs", "Build preference pairs from scored groups");
  bp->add_option("--in", in, "groups.jsonl")->required();
  bp->add_option("--strategy", strategy, "better_vs_worse | best_vs_worse | better_vs_worst | best_vs_worst")->required();
  bp->add_option("--min-margin", min_margin, "Minimum reward margin");
  bp->add_option("--out", out, "pairs.jsonl output")->required();

  auto* td = app.add_subcommand("train-dpo", "Preference phase against a pinned reference");
  td->add_option("--ckpt", ckpt, "Starting checkpoint")->required();
  td->add_option("--pairs", pairs, "pairs.jsonl")->required();
  td->add_option("--config", config_path, "Run config (JSON)");
  td->add_option("--data", data, "Dataset directory the pairs were scored on")->required();
  td->add_option("--candidates", candidates_dir, "Candidate latents (default: candidates/ next to the pairs file)");
  td->add_option("--out", out, "Output checkpoint directory")->required();

  auto* sa = app.add_subcommand("sample", "Sample one video");
  sa->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  sa->add_option("--data", data, "Dataset directory")->required();
  sa->add_option("--task-id", task_id, "Task id")->required();
  sa->add_option("--steps", steps, "ODE steps");
  sa->add_option("--seed", seed, "Noise seed");
  sa->add_option("--out", out, "video.ten output")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--steps", steps, "ODE steps");
  ev->add_option("--seed", seed, "Sampling seed");
  ev->add_option("--out", out, "report.json output")->required();

  auto* ab = app.add_subcommand("ablate", "Conditioning or pairing ablation");
  ab->add_option("--what", what, "conditioning | pairing")->required();
  ab->add_option("--config", config_path, "Run config (JSON)");
  ab->add_option("--out", out, "report.json output")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  gc->add_option("--config", config_path, "Run config (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_data(config_path, out);
    if (*tb) return cmd_train_base(config_path, data, phase, init, out);
    if (*sc) return cmd_score(ckpt, data, candidates, out);
    if (*bp) return cmd_build_pairs(in, strategy, min_margin, out);
    if (*td) return cmd_train_dpo(ckpt, pairs, config_path, data, candidates_dir, out);
    if (*sa) return cmd_sample(ckpt, data, task_id, steps, seed, out);
    if (*ev) return cmd_eval(ckpt, data, steps, seed, out);
    if (*ab) return cmd_ablate(what, config_path, out);
    if (*gc) return cmd_gradcheck(config_path);
  } catch (const Error& e) {
    return report_error(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << nlohmann::json{{"error", "malformed-input"}, {"message", e.what()}}.dump() << '\n';
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << nlohmann::json{{"error", "io"}, {"message", e.what()}}.dump() << '\n';
    return kExitValidation;
  }
  return 0;
}
