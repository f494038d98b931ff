#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "animpref/config.hpp"

using namespace animpref;
using nlohmann::json;

namespace {

std::string key_path_of(const json& j) {
  try {
    config::parse(j);
  } catch (const config::ConfigError& e) {
    return e.key_path();
  }
  return "";
}

}  // namespace

TEST_CASE("empty document gives the documented defaults") {
  const config::RunConfig c = config::parse(json::object());
  CHECK(c.codec.d == 16);
  CHECK(c.model.n_blocks == 2);
  CHECK(c.train.audio.learning_rate == 1e-5);
  CHECK(c.train.audio.batch_size == 8);
  CHECK(c.dpo.core.beta == 2500.0);
  CHECK(c.dpo.core.learning_rate == 1e-8);
  CHECK(c.dpo.strategy == "best_vs_worst");
  CHECK(c.bench.T == 16);
  CHECK(c.bench.H == 32);
  CHECK(c.motion.conditioning == "full");
  CHECK_FALSE(c.train.audio.trainable.empty());
  CHECK(c.train.skeleton.trainable == std::vector<std::string>{"motion.skeleton.*"});
}

TEST_CASE("unknown keys are reported with their path") {
  CHECK(key_path_of({{"model", {{"dropout", 0.1}}}}) == "model.dropout");
  CHECK(key_path_of({{"colour", 1}}) == "colour");
  CHECK(key_path_of({{"train", {{"audio", {{"stepz", 3}}}}}}) == "train.audio.stepz");
}

TEST_CASE("type errors are reported with their path") {
  CHECK(key_path_of({{"model", {{"d", "sixteen"}}}}) == "model.d");
  CHECK(key_path_of({{"model", {{"seed", -3}}}}) == "model.seed");
  CHECK(key_path_of({{"motion", {{"use_audio", 1}}}}) == "motion.use_audio");
  CHECK(key_path_of({{"train", {{"audio", {{"trainable", {1, 2}}}}}}}) == "train.audio.trainable");
  CHECK(key_path_of({{"codec", 3}}) == "codec");
}

TEST_CASE("cross-field validation") {
  CHECK(key_path_of({{"codec", {{"d", 8}}}}) == "model.d");
  CHECK(key_path_of({{"codec", {{"d", 769}}}, {"model", {{"d", 769}}}}) == "codec.d");
  CHECK(key_path_of({{"model", {{"n_heads", 3}}}}) == "model.n_heads");
  CHECK(key_path_of({{"bench", {{"H", 30}}}}) == "bench.H");
  CHECK(key_path_of({{"motion", {{"conditioning", "audio/3"}}}}) == "motion.conditioning");
  CHECK(key_path_of({{"dpo", {{"strategy", "random"}}}}) == "dpo.strategy");
  CHECK(key_path_of({{"train", {{"skeleton", {{"optimizer", "lion"}}}}}}) == "train.skeleton.optimizer");
}

TEST_CASE("resolved config round trips") {
  json j = {{"model", {{"seed", 7}}}, {"train", {{"audio", {{"steps", 123}}}}}, {"dpo", {{"beta", 3.5}}}};
  const config::RunConfig c = config::parse(j);
  const auto resolved = config::to_json(c);
  const config::RunConfig again = config::parse(json::parse(resolved.dump()));
  CHECK(config::to_json(again) == resolved);
  CHECK(again.model.seed == 7);
  CHECK(again.train.audio.steps == 123);
  CHECK(again.dpo.core.beta == 3.5);

  const auto dir = std::filesystem::temp_directory_path() / "animpref_config_test";
  std::filesystem::create_directories(dir);
  config::echo_resolved(dir, c);
  CHECK(config::to_json(config::load(dir / "config.resolved.json")) == resolved);
  std::filesystem::remove_all(dir);
}

TEST_CASE("derived objects follow the config") {
  config::RunConfig c = config::parse({{"motion", {{"conditioning", "partial_k2"}, {"use_skeleton", false}}}});
  const models::ModelConfig m = config::model_config(c);
  CHECK(m.conditioning == motion::Strategy::kPartialK2);
  CHECK_FALSE(m.use_skeleton);
  CHECK(m.steps == 4);
  CHECK(m.grid_h == 4);
  CHECK(m.rho == 4);
  const pipeline::PhasePlan dpo = config::phase_plan(c, pipeline::Phase::kDpo);
  CHECK(dpo.trainable == std::vector<std::string>{"*"});
  CHECK(dpo.learning_rate == c.dpo.core.learning_rate);
  CHECK(config::latent_space(c).scale == 4.0);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"desk.json", "smoke.json"}) {
    const auto path = std::filesystem::path(ANIMPREF_SOURCE_DIR) / "configs" / name;
    CHECK_NOTHROW(config::load(path));
  }
  CHECK_THROWS_AS(config::load("/nonexistent/config.json"), Error);
}
