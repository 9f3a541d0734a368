#pragma once

// Run configuration file: one JSON document drives training and
// evaluation so runs stay auditable; command-line flags only override
// paths. Unknown keys are rejected.

#include "t3dqa/encoders.hpp"
#include "t3dqa/model.hpp"
#include "t3dqa/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace t3dqa {

struct SplitSpec {
  int k = 5;
  int fold = 0;
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::string manifest_path;
  std::string run_dir;
  std::uint64_t seed = 0;
  std::string backend_name = "test";
  TestBackendConfig backend;
  ModelConfig model;
  TrainConfig train;
  std::optional<SplitSpec> split;
  bool fit_logistic = true;
  std::vector<std::string> eval_dims;
};

// Throws ParseError on malformed JSON or unknown keys, ValidationError on
// out-of-range values. Relative run_dir is rooted at $T3DQA_RUN_ROOT when
// that variable is set.
RunConfig load_run_config(const std::string& path);

void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace t3dqa
