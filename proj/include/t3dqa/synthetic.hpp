#pragma once

// Procedural desk-scale benchmark with planted, image-derived quality
// scores: texture clarity degrades with blur, geometry loss with a carved
// sector, geometry redundancy with floater dots; overall quality is their
// mean. The planted (noiseless) scores are returned for oracle checks.

#include "t3dqa/manifest.hpp"

#include <map>
#include <string>

namespace t3dqa {

struct SyntheticSpec {
  int n_prompts = 40;
  int n_generators = 5;
  int n_views = 6;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  int image_size = 64;
};

struct PlantedScores {
  std::map<std::string, MosVector> by_sample;  // sample_id -> noiseless MOS

  const MosVector& operator()(const std::string& sample_id) const {
    return by_sample.at(sample_id);
  }
};

struct SyntheticBenchmark {
  BenchmarkManifest manifest;
  PlantedScores planted;
  std::string manifest_path;
};

// Writes renders and the manifest under out_dir; byte-identical for a
// fixed spec.
SyntheticBenchmark generate_synthetic_benchmark(const SyntheticSpec& spec,
                                                const std::string& out_dir);

}  // namespace t3dqa
