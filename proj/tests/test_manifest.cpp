#include "t3dqa/manifest.hpp"

#include "t3dqa/common.hpp"
#include "t3dqa/image.hpp"
#include "t3dqa/synthetic.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;
using namespace t3dqa;

namespace {

// small on-disk benchmark: n_prompts x n_generators samples with real views
BenchmarkManifest tiny_benchmark(const std::string& dir, int n_prompts = 6,
                                 int n_generators = 2, int n_views = 2) {
  SyntheticSpec spec;
  spec.n_prompts = n_prompts;
  spec.n_generators = n_generators;
  spec.n_views = n_views;
  spec.seed = 123;
  spec.image_size = 16;
  return generate_synthetic_benchmark(spec, dir).manifest;
}

}  // namespace

TEST_CASE("manifest: canonical taxonomy has twelve unique dimensions") {
  const auto& dims = primary_dimensions();
  CHECK(dims.size() == 12);
  std::set<std::string> ids, names;
  for (const auto& d : dims) {
    ids.insert(d.id);
    names.insert(d.display_name);
    CHECK(!d.display_name.empty());
    CHECK(d.keywords.size() == 4);
  }
  CHECK(ids.size() == 12);
  CHECK(names.size() == 12);
  CHECK(ids.count("OA"));
  CHECK(ids.count("3DA"));
  CHECK(ids.count("OQ"));
}

TEST_CASE("manifest: load groups prompts and resolves view paths") {
  th::TempDir tmp("manifest_load");
  tiny_benchmark(tmp.path(), 8, 3, 2);
  BenchmarkManifest m = load_manifest(tmp.path() + "/manifest.json");
  CHECK(m.samples.size() == 24);
  CHECK(m.prompt_ids().size() == 8);
  auto groups = m.prompt_groups();
  for (const auto& [p, members] : groups) CHECK(members.size() == 3);
  for (const auto& s : m.samples)
    for (const auto& v : s.view_paths) CHECK(fs::exists(v));
}

TEST_CASE("manifest: empty benchmark is rejected") {
  th::TempDir tmp("manifest_empty");
  const std::string path = tmp.path() + "/m.json";
  std::ofstream(path) << R"({"name":"x","score_range":[1,5],"n_views":1,)"
                      << R"("dimensions":[{"id":"OQ","name":"overall quality"}],)"
                      << R"("samples":[]})";
  CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("empty benchmark"),
                       ValidationError);
}

TEST_CASE("manifest: out-of-range score names the sample") {
  th::TempDir tmp("manifest_range");
  tiny_benchmark(tmp.path(), 6, 2, 1);
  BenchmarkManifest m = load_manifest(tmp.path() + "/manifest.json");
  m.samples[3].mos.set("OQ", 5.5);
  CHECK_THROWS_WITH_AS(validate_manifest(m),
                       doctest::Contains(m.samples[3].sample_id.c_str()), ValidationError);
}

TEST_CASE("manifest: missing view file names the sample") {
  th::TempDir tmp("manifest_view");
  tiny_benchmark(tmp.path(), 6, 2, 1);
  BenchmarkManifest m = load_manifest(tmp.path() + "/manifest.json");
  fs::remove(m.samples[5].view_paths[0]);
  CHECK_THROWS_WITH_AS(validate_manifest(m),
                       doctest::Contains(m.samples[5].sample_id.c_str()), ValidationError);
}

TEST_CASE("manifest: malformed file raises a parse error") {
  th::TempDir tmp("manifest_parse");
  const std::string path = tmp.path() + "/broken.json";
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(load_manifest(path), ParseError);
  std::ofstream(tmp.path() + "/empty.json");
  CHECK_THROWS_AS(load_manifest(tmp.path() + "/empty.json"), ParseError);
}

TEST_CASE("manifest: save/load round-trip preserves every field") {
  th::TempDir tmp("manifest_rt");
  tiny_benchmark(tmp.path(), 5, 2, 2);
  BenchmarkManifest m = load_manifest(tmp.path() + "/manifest.json");
  // mark one dimension absent to cover the null path
  m.samples[0].mos.set_absent("GR");
  const std::string copy = tmp.path() + "/copy.json";
  save_manifest(m, copy);
  BenchmarkManifest m2 = load_manifest(copy);

  CHECK(m2.name == m.name);
  CHECK(m2.score_min == m.score_min);
  CHECK(m2.score_max == m.score_max);
  CHECK(m2.n_views == m.n_views);
  REQUIRE(m2.dimensions.size() == m.dimensions.size());
  for (std::size_t i = 0; i < m.dimensions.size(); ++i) {
    CHECK(m2.dimensions[i].id == m.dimensions[i].id);
    CHECK(m2.dimensions[i].display_name == m.dimensions[i].display_name);
    CHECK(m2.dimensions[i].keywords == m.dimensions[i].keywords);
  }
  REQUIRE(m2.samples.size() == m.samples.size());
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    const Sample &a = m.samples[i], &b = m2.samples[i];
    CHECK(a.sample_id == b.sample_id);
    CHECK(a.prompt_id == b.prompt_id);
    CHECK(a.prompt_text == b.prompt_text);
    CHECK(a.generator_id == b.generator_id);
    CHECK(a.components.has_value() == b.components.has_value());
    if (a.components)
      CHECK(components_to_string(*a.components) == components_to_string(*b.components));
    REQUIRE(a.view_paths.size() == b.view_paths.size());
    for (std::size_t v = 0; v < a.view_paths.size(); ++v)
      CHECK(fs::path(a.view_paths[v]).lexically_normal() ==
            fs::path(b.view_paths[v]).lexically_normal());
    for (const auto& [dim, val] : a.mos.raw()) {
      REQUIRE(b.mos.declared(dim));
      CHECK(a.mos.has(dim) == b.mos.has(dim));
      if (a.mos.has(dim)) CHECK(b.mos.get(dim) == val);
    }
  }
}

TEST_CASE("manifest: fold plans partition prompts near-evenly and disjointly") {
  th::TempDir tmp("manifest_folds");
  tiny_benchmark(tmp.path(), 13, 2, 1);
  BenchmarkManifest m = load_manifest(tmp.path() + "/manifest.json");

  FoldPlan plan = make_fold_plan(m, 5, 99);
  CHECK(plan.assignments.size() == 13);

  // partition: every prompt exactly once; sizes differ by at most one
  std::vector<int> sizes(5, 0);
  for (const auto& [p, f] : plan.assignments) {
    CHECK(f >= 0);
    CHECK(f < 5);
    ++sizes[f];
  }
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  CHECK(*hi - *lo <= 1);

  // disjointness at the sample level
  for (int f = 0; f < 5; ++f) {
    const auto test_vec = plan.test_prompts(f);
    const auto train_vec = plan.train_prompts(f);
    std::set<std::string> test(test_vec.begin(), test_vec.end());
    std::set<std::string> train(train_vec.begin(), train_vec.end());
    for (const auto& p : test) CHECK(!train.count(p));
    for (int idx : samples_for_prompts(m, test_vec))
      CHECK(test.count(m.samples[idx].prompt_id));
  }

  // determinism
  FoldPlan again = make_fold_plan(m, 5, 99);
  CHECK(again.assignments == plan.assignments);
  FoldPlan other = make_fold_plan(m, 5, 100);
  CHECK(other.assignments != plan.assignments);
}

TEST_CASE("manifest: exact partition when prompts equal folds") {
  th::TempDir tmp("manifest_exact");
  tiny_benchmark(tmp.path(), 5, 2, 1);
  BenchmarkManifest m = load_manifest(tmp.path() + "/manifest.json");
  FoldPlan plan = make_fold_plan(m, 5, 1);
  std::set<int> used;
  for (const auto& [p, f] : plan.assignments) used.insert(f);
  CHECK(used.size() == 5);
  CHECK_THROWS_AS(make_fold_plan(m, 6, 1), ValidationError);
}

TEST_CASE("manifest: single-object samples must carry an attribute") {
  th::TempDir tmp("manifest_comp");
  tiny_benchmark(tmp.path(), 3, 2, 1);
  const std::string path = tmp.path() + "/manifest.json";
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  auto pos = text.find("\"attribute\"");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 11, "\"relationship\"");
  auto vpos = text.find("\"geometry-only\"", pos);
  if (vpos != std::string::npos) text.replace(vpos, 15, "\"spatial\"");
  std::ofstream(path) << text;
  CHECK_THROWS_AS(load_manifest(path), ValidationError);
}
