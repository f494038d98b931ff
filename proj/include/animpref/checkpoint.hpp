#pragma once

// Checkpoint directory:
//   manifest.json        phases completed, parameter index, model-defining config
//   params/<name>.ten    one tensor per parameter (float32)

#include <filesystem>
#include <string>
#include <vector>

#include "animpref/config.hpp"
#include "animpref/toy_models.hpp"

namespace animpref::checkpoint {

struct Checkpoint {
  config::RunConfig config;  // defines codec, model and benchmark geometry
  models::DenoiserParams params;
  std::vector<std::string> phases;  // e.g. {"audio", "skeleton", "dpo"}

  /// Skeleton conditioning is only meaningful once the skeleton phase ran.
  bool with_skeleton() const;
};

void save(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& dir);

/// Parameters rounded through float32, i.e. exactly what save() stores.
models::DenoiserParams as_stored(const models::DenoiserParams& params);

}  // namespace animpref::checkpoint
