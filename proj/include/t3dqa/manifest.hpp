#pragma once

// Benchmark ingestion: manifest schema, validation, prompt-disjoint fold
// plans. A loaded manifest is immutable in practice and safe to share
// across threads; loading itself is pure given the filesystem snapshot.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace t3dqa {

struct QualityDimension {
  std::string id;            // short code, e.g. "TC"; external sets may differ
  std::string display_name;  // e.g. "texture clarity"
  std::vector<std::string> keywords;
};

// The twelve canonical sub-dimensions of the primary benchmark.
const std::vector<QualityDimension>& primary_dimensions();

// Per-dimension mean opinion scores. A dimension may be explicitly marked
// absent (rated "-"): it then stays out of every loss and statistic for
// that sample, but the key must still be declared.
class MosVector {
 public:
  void set(const std::string& dim, double value) { scores_[dim] = value; }
  void set_absent(const std::string& dim) { scores_[dim] = kAbsent; }
  bool has(const std::string& dim) const {
    auto it = scores_.find(dim);
    return it != scores_.end() && !std::isnan(it->second);
  }
  bool declared(const std::string& dim) const { return scores_.count(dim) > 0; }
  double get(const std::string& dim) const { return scores_.at(dim); }
  const std::map<std::string, double>& raw() const { return scores_; }

 private:
  static constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, double> scores_;
};

struct PromptComponents {
  enum class Object { Single, Multiple };
  enum class Relationship { Spatial, NonSpatial };
  enum class Style { Realistic, Imaginative };
  enum class Attribute { GeometryOnly, AppearanceOnly, Mixed };
  enum class Length { Basic, Refined, Complex };

  Object object = Object::Single;
  std::optional<Relationship> relationship;
  std::optional<Attribute> attribute;
  Style style = Style::Realistic;
  Length length = Length::Basic;

  // Names of the sub-components this prompt carries, e.g. {"single",
  // "mixed", "realistic", "basic"}; used by the component report.
  std::vector<std::string> subcomponents() const;
};

struct Sample {
  std::string sample_id;
  std::string prompt_id;
  std::string prompt_text;
  std::optional<PromptComponents> components;
  std::string generator_id;
  std::vector<std::string> view_paths;  // resolved against the manifest dir
  MosVector mos;
};

struct BenchmarkManifest {
  std::string name;
  std::vector<QualityDimension> dimensions;
  double score_min = 1.0;
  double score_max = 5.0;
  int n_views = 6;
  std::vector<Sample> samples;

  std::vector<std::string> prompt_ids() const;  // distinct, insertion order
  std::map<std::string, std::vector<int>> prompt_groups() const;
  const QualityDimension* find_dimension(const std::string& id) const;
};

struct FoldPlan {
  int k = 0;
  std::map<std::string, int> assignments;  // prompt_id -> fold in [0,k)

  std::vector<std::string> test_prompts(int fold) const;
  std::vector<std::string> train_prompts(int fold) const;
};

BenchmarkManifest load_manifest(const std::string& path);
void save_manifest(const BenchmarkManifest& m, const std::string& path);
// Re-runs every structural check load_manifest performs (including view
// file existence). Throws ValidationError naming the offending sample.
void validate_manifest(const BenchmarkManifest& m);

FoldPlan make_fold_plan(const BenchmarkManifest& m, int k, std::uint64_t seed);

// Samples belonging to / excluded from the given prompt set.
std::vector<int> samples_for_prompts(const BenchmarkManifest& m,
                                     const std::vector<std::string>& prompts);

std::string components_to_string(const PromptComponents& c);

}  // namespace t3dqa
