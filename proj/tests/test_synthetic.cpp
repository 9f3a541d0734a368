#include "t3dqa/synthetic.hpp"

#include "t3dqa/common.hpp"
#include "t3dqa/image.hpp"
#include "t3dqa/manifest.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace t3dqa;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("synthetic: counts and grouping") {
  th::TempDir tmp("synth_counts");
  SyntheticSpec spec;
  spec.n_prompts = 40;
  spec.n_generators = 5;
  spec.n_views = 2;
  spec.seed = 1;
  spec.image_size = 16;
  SyntheticBenchmark b = generate_synthetic_benchmark(spec, tmp.path());
  CHECK(b.manifest.samples.size() == 200);
  CHECK(b.manifest.prompt_ids().size() == 40);
  for (const auto& [p, members] : b.manifest.prompt_groups())
    CHECK(members.size() == 5);
  validate_manifest(b.manifest);
  // loads back through the public path
  BenchmarkManifest loaded = load_manifest(b.manifest_path);
  CHECK(loaded.samples.size() == 200);
  CHECK(loaded.dimensions.size() == 4);
}

TEST_CASE("synthetic: noiseless MOS equals the planted function exactly") {
  th::TempDir tmp("synth_noiseless");
  SyntheticSpec spec;
  spec.n_prompts = 10;
  spec.n_generators = 4;
  spec.n_views = 1;
  spec.noise_sd = 0.0;
  spec.seed = 7;
  spec.image_size = 16;
  SyntheticBenchmark b = generate_synthetic_benchmark(spec, tmp.path());
  for (const auto& s : b.manifest.samples) {
    const MosVector& planted = b.planted(s.sample_id);
    for (const auto& d : b.manifest.dimensions)
      CHECK(s.mos.get(d.id) == planted.get(d.id));
    // overall quality is the rounded mean of the three planted dimensions
    const double oq =
        std::round((planted.get("TC") + planted.get("GL") + planted.get("GR")) / 3.0 *
                   100.0) /
        100.0;
    CHECK(planted.get("OQ") == oq);
  }
}

TEST_CASE("synthetic: noisy MOS stays in range and differs from planted") {
  th::TempDir tmp("synth_noise");
  SyntheticSpec spec;
  spec.n_prompts = 12;
  spec.n_generators = 3;
  spec.n_views = 1;
  spec.noise_sd = 0.3;
  spec.seed = 9;
  spec.image_size = 16;
  SyntheticBenchmark b = generate_synthetic_benchmark(spec, tmp.path());
  int differing = 0;
  for (const auto& s : b.manifest.samples)
    for (const auto& d : b.manifest.dimensions) {
      const double v = s.mos.get(d.id);
      CHECK(v >= 1.0);
      CHECK(v <= 5.0);
      if (v != b.planted(s.sample_id).get(d.id)) ++differing;
    }
  CHECK(differing > 50);  // noise actually applied
}

TEST_CASE("synthetic: byte-identical outputs under a fixed seed") {
  th::TempDir tmp1("synth_det1"), tmp2("synth_det2");
  SyntheticSpec spec;
  spec.n_prompts = 6;
  spec.n_generators = 2;
  spec.n_views = 2;
  spec.noise_sd = 0.1;
  spec.seed = 42;
  spec.image_size = 16;
  SyntheticBenchmark a = generate_synthetic_benchmark(spec, tmp1.path());
  SyntheticBenchmark b = generate_synthetic_benchmark(spec, tmp2.path());
  CHECK(slurp(a.manifest_path) == slurp(b.manifest_path));
  CHECK(slurp(a.manifest.samples[3].view_paths[1]) ==
        slurp(b.manifest.samples[3].view_paths[1]));

  // a different seed changes the renders
  spec.seed = 43;
  th::TempDir tmp3("synth_det3");
  SyntheticBenchmark c = generate_synthetic_benchmark(spec, tmp3.path());
  CHECK(slurp(a.manifest.samples[3].view_paths[1]) !=
        slurp(c.manifest.samples[3].view_paths[1]));
}

TEST_CASE("synthetic: planted distortions leave visible image traces") {
  th::TempDir tmp("synth_traces");
  SyntheticSpec spec;
  spec.n_prompts = 20;
  spec.n_generators = 5;
  spec.n_views = 1;
  spec.seed = 3;
  spec.image_size = 32;
  SyntheticBenchmark b = generate_synthetic_benchmark(spec, tmp.path());

  // blur (texture clarity) must reduce mean gradient energy: compare the
  // sharpest and blurriest samples by planted TC
  const Sample *best = nullptr, *worst = nullptr;
  for (const auto& s : b.manifest.samples) {
    if (!best || b.planted(s.sample_id).get("TC") > b.planted(best->sample_id).get("TC"))
      best = &s;
    if (!worst || b.planted(s.sample_id).get("TC") < b.planted(worst->sample_id).get("TC"))
      worst = &s;
  }
  REQUIRE(best);
  REQUIRE(worst);
  auto grad_energy = [](const Image& img) {
    double acc = 0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x + 1 < img.width; ++x)
        for (int c = 0; c < 3; ++c) acc += std::abs(img.at(y, x + 1, c) - img.at(y, x, c));
    return acc;
  };
  CHECK(grad_energy(load_image(best->view_paths[0])) >
        grad_energy(load_image(worst->view_paths[0])));
}

TEST_CASE("synthetic: precondition violations are rejected") {
  th::TempDir tmp("synth_bad");
  SyntheticSpec spec;
  spec.n_prompts = 0;
  CHECK_THROWS_AS(generate_synthetic_benchmark(spec, tmp.path()), ValidationError);
  spec.n_prompts = 2;
  spec.noise_sd = -0.1;
  CHECK_THROWS_AS(generate_synthetic_benchmark(spec, tmp.path()), ValidationError);
}
