#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("animpref_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunResult run(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(ANIMPREF_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string data(const std::string& name) { return (fs::path(ANIMPREF_TEST_DATA) / name).string(); }

std::size_t count_lines(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  for (std::string line; std::getline(is, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("build-pairs on the three-candidate group emits one pair") {
  const fs::path dir = scratch("pairs");
  const RunResult r =
      run("build-pairs --in " + data("example_group.jsonl") + " --strategy best_vs_worst --min-margin 0.5 --out " +
              (dir / "pairs.jsonl").string(),
          dir);
  REQUIRE(r.exit_code == 0);
  CHECK(count_lines(dir / "pairs.jsonl") == 1);
  const auto pair = nlohmann::json::parse(slurp(dir / "pairs.jsonl"));
  CHECK(pair["winner_id"] == "a");
  CHECK(pair["loser_id"] == "c");
  CHECK(pair["margin"].get<double>() == doctest::Approx(2.5));
  CHECK(fs::exists(dir / "config.resolved.json"));

  const RunResult all = run("build-pairs --in " + data("example_group.jsonl") +
                                " --strategy better_vs_worse --min-margin 0 --out " + (dir / "all.jsonl").string(),
                            dir);
  REQUIRE(all.exit_code == 0);
  CHECK(count_lines(dir / "all.jsonl") == 3);
}

TEST_CASE("unknown config key exits 1 naming the key") {
  const fs::path dir = scratch("unknown");
  const RunResult r = run("gen-data --config " + data("unknown_key.json") + " --out " + (dir / "data").string(), dir);
  CHECK(r.exit_code == 1);
  const auto err = nlohmann::json::parse(r.err);
  CHECK(err["key_path"] == "model.dropout");
  CHECK(err.contains("message"));
  CHECK_FALSE(fs::exists(dir / "data" / "tasks"));
}

TEST_CASE("wrong config type exits 1") {
  const fs::path dir = scratch("type");
  const RunResult r = run("gen-data --config " + data("wrong_type.json") + " --out " + (dir / "data").string(), dir);
  CHECK(r.exit_code == 1);
  CHECK(nlohmann::json::parse(r.err)["key_path"] == "train.audio.steps");
}

TEST_CASE("bad pairing strategy exits 1") {
  const fs::path dir = scratch("strategy");
  const RunResult r = run("build-pairs --in " + data("example_group.jsonl") + " --strategy best_vs_all --out " +
                              (dir / "p.jsonl").string(),
                          dir);
  CHECK(r.exit_code == 1);
}

TEST_CASE("gradcheck passes") {
  const fs::path dir = scratch("gradcheck");
  const RunResult r = run("gradcheck", dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("diverging training exits 2 with parameter provenance") {
  const fs::path dir = scratch("diverge");
  REQUIRE(run("gen-data --config " + data("diverging.json") + " --out " + (dir / "data").string(), dir).exit_code == 0);
  const RunResult r = run("train-base --config " + data("diverging.json") + " --data " + (dir / "data").string() +
                              " --phase audio --out " + (dir / "ckpt").string(),
                          dir);
  CHECK(r.exit_code == 2);
  const auto err = nlohmann::json::parse(r.err);
  CHECK(err["error"] == "non-finite");
  CHECK(err["message"].get<std::string>().find("parameter") != std::string::npos);
}

TEST_CASE("full workflow on a tiny config") {
  const fs::path dir = scratch("workflow");
  const std::string cfg = data("tiny.json"), d = (dir / "data").string();
  REQUIRE(run("gen-data --config " + cfg + " --out " + d, dir).exit_code == 0);
  const std::string before = slurp(dir / "data" / "tasks" / "task_000000" / "meta.json");
  REQUIRE(run("train-base --config " + cfg + " --data " + d + " --phase audio --out " + (dir / "a").string(), dir)
              .exit_code == 0);
  CHECK(count_lines(dir / "a" / "loss.csv") == 9);
  CHECK(run("train-base --config " + cfg + " --data " + d + " --phase skeleton --out " + (dir / "x").string(), dir)
            .exit_code == 1);
  REQUIRE(run("train-base --config " + cfg + " --data " + d + " --phase skeleton --init " + (dir / "a").string() +
                  " --out " + (dir / "b").string(),
              dir)
              .exit_code == 0);
  REQUIRE(run("score --ckpt " + (dir / "b").string() + " --data " + d + " --out " + (dir / "s" / "groups.jsonl").string(),
              dir)
              .exit_code == 0);
  CHECK(count_lines(dir / "s" / "groups.jsonl") == 3);
  REQUIRE(run("build-pairs --in " + (dir / "s" / "groups.jsonl").string() + " --strategy best_vs_worst --min-margin 0 --out " +
                  (dir / "s" / "pairs.jsonl").string(),
              dir)
              .exit_code == 0);
  REQUIRE(run("train-dpo --ckpt " + (dir / "b").string() + " --pairs " + (dir / "s" / "pairs.jsonl").string() +
                  " --config " + cfg + " --data " + d + " --out " + (dir / "c").string(),
              dir)
              .exit_code == 0);
  CHECK(fs::exists(dir / "c" / "reference" / "manifest.json"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "c" / "manifest.json"));
  CHECK(manifest["phases"] == nlohmann::json({"audio", "skeleton", "dpo"}));
  REQUIRE(run("sample --ckpt " + (dir / "c").string() + " --data " + d + " --task-id task_000001 --out " +
                  (dir / "v" / "video.ten").string(),
              dir)
              .exit_code == 0);
  CHECK(fs::file_size(dir / "v" / "video.ten") > 16 * 32 * 32 * 3 * 4);
  REQUIRE(run("eval --ckpt " + (dir / "c").string() + " --data " + d + " --out " + (dir / "e" / "report.json").string(), dir)
              .exit_code == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "e" / "report.json"));
  CHECK(report["n_tasks"] == 3);
  CHECK(fs::exists(dir / "e" / "config.resolved.json"));
  CHECK(run("sample --ckpt " + (dir / "c").string() + " --data " + d + " --task-id nope --out " +
                (dir / "v" / "x.ten").string(),
            dir)
            .exit_code == 1);
  // Inputs are never modified.
  CHECK(slurp(dir / "data" / "tasks" / "task_000000" / "meta.json") == before);
}
