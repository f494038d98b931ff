#include "animpref/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "animpref/tensor_io.hpp"

namespace animpref::checkpoint {

bool Checkpoint::with_skeleton() const {
  return config.motion.use_skeleton && std::find(phases.begin(), phases.end(), "skeleton") != phases.end();
}

void save(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir / "params");
  nlohmann::ordered_json manifest;
  manifest["format"] = "animpref-checkpoint/1";
  manifest["phases"] = ckpt.phases;
  manifest["init_seed"] = ckpt.params.seed;
  manifest["parameters"] = nlohmann::ordered_json::array();
  for (const auto& [name, m] : ckpt.params.tensors) {
    const std::string file = "params/" + name + ".ten";
    write_ten(dir / file, m);
    manifest["parameters"].push_back({{"name", name}, {"file", file}, {"shape", {m.rows(), m.cols()}}});
  }
  manifest["config"] = config::to_json(ckpt.config);
  config::write_json(dir / "manifest.json", manifest);
}

Checkpoint load(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw Error(ErrorKind::kIo, "no checkpoint manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(is);
  if (manifest.value("format", "") != "animpref-checkpoint/1") throw Error(ErrorKind::kIo, "unrecognized checkpoint format in " + dir.string());
  Checkpoint c;
  c.config = config::parse(manifest.at("config"));
  c.phases = manifest.at("phases").get<std::vector<std::string>>();
  c.params.seed = manifest.at("init_seed").get<std::uint64_t>();
  for (const auto& p : manifest.at("parameters")) {
    Mat m = read_ten_mat(dir / p.at("file").get<std::string>());
    const auto shape = p.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
      throw Error(ErrorKind::kShapeMismatch, "checkpoint parameter shape mismatch: " + p.at("name").get<std::string>());
    c.params.tensors.emplace(p.at("name").get<std::string>(), std::move(m));
  }
  // The stored parameter set must match the model the config describes.
  const models::DenoiserParams expected = models::init_params(config::model_config(c.config), 0);
  for (const auto& [name, m] : expected.tensors) {
    auto it = c.params.tensors.find(name);
    if (it == c.params.tensors.end()) throw Error(ErrorKind::kShapeMismatch, "checkpoint is missing parameter " + name);
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols())
      throw Error(ErrorKind::kShapeMismatch, "checkpoint parameter has wrong shape: " + name);
  }
  if (c.params.tensors.size() != expected.tensors.size()) throw Error(ErrorKind::kShapeMismatch, "checkpoint has extra parameters");
  return c;
}

models::DenoiserParams as_stored(const models::DenoiserParams& params) {
  models::DenoiserParams out = params;
  for (auto& [name, m] : out.tensors) m = m.cast<float>().cast<double>();
  return out;
}

}  // namespace animpref::checkpoint
