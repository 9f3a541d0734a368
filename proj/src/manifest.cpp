#include "t3dqa/manifest.hpp"

#include "t3dqa/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace t3dqa {

const std::vector<QualityDimension>& primary_dimensions() {
  static const std::vector<QualityDimension> dims = {
      {"OA", "object alignment", {"category", "quantity", "count", "type"}},
      {"AA", "attribute alignment", {"material", "geometry", "appearance", "shape"}},
      {"IA", "interaction alignment", {"action", "position", "location", "orientation"}},
      {"OVA", "overall alignment", {"object", "number", "attribute", "interaction"}},
      {"TC", "texture clarity", {"detail", "resolution", "visibility", "contrast"}},
      {"TA", "texture aesthetics", {"lighting", "color", "style", "artistry"}},
      {"GL", "geometry loss", {"incompleteness", "integrity", "fragmentation", "infidelity"}},
      {"GR", "geometry redundancy", {"overlap", "floater", "excess", "duplication"}},
      {"GRS", "geometry roughness", {"smoothness", "irregularity", "edge", "crudeness"}},
      {"OV", "overall visual quality", {"clarity", "aesthetics", "integrity", "roughness"}},
      {"3DA", "3d authenticity", {"unrealism", "inconsistency", "overgeneration", "implausibility"}},
      {"OQ", "overall quality", {"alignment", "geometry", "texture", "authenticity"}},
  };
  return dims;
}

std::vector<std::string> PromptComponents::subcomponents() const {
  std::vector<std::string> out;
  out.push_back(object == Object::Single ? "single" : "multiple");
  if (relationship)
    out.push_back(*relationship == Relationship::Spatial ? "spatial" : "non-spatial");
  if (attribute) {
    switch (*attribute) {
      case Attribute::GeometryOnly: out.push_back("geometry-only"); break;
      case Attribute::AppearanceOnly: out.push_back("appearance-only"); break;
      case Attribute::Mixed: out.push_back("mixed"); break;
    }
  }
  out.push_back(style == Style::Realistic ? "realistic" : "imaginative");
  switch (length) {
    case Length::Basic: out.push_back("basic"); break;
    case Length::Refined: out.push_back("refined"); break;
    case Length::Complex: out.push_back("complex"); break;
  }
  return out;
}

std::string components_to_string(const PromptComponents& c) {
  std::string s;
  for (const auto& part : c.subcomponents()) {
    if (!s.empty()) s += "/";
    s += part;
  }
  return s;
}

std::vector<std::string> BenchmarkManifest::prompt_ids() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : samples)
    if (seen.insert(s.prompt_id).second) out.push_back(s.prompt_id);
  return out;
}

std::map<std::string, std::vector<int>> BenchmarkManifest::prompt_groups() const {
  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i)
    groups[samples[i].prompt_id].push_back(i);
  return groups;
}

const QualityDimension* BenchmarkManifest::find_dimension(const std::string& id) const {
  for (const auto& d : dimensions)
    if (d.id == id) return &d;
  return nullptr;
}

std::vector<std::string> FoldPlan::test_prompts(int fold) const {
  std::vector<std::string> out;
  for (const auto& [p, f] : assignments)
    if (f == fold) out.push_back(p);
  return out;
}

std::vector<std::string> FoldPlan::train_prompts(int fold) const {
  std::vector<std::string> out;
  for (const auto& [p, f] : assignments)
    if (f != fold) out.push_back(p);
  return out;
}

namespace {

PromptComponents parse_components(const json& j, const std::string& sid) {
  PromptComponents c;
  auto bad = [&](const std::string& what) {
    return ValidationError("sample " + sid + ": bad components." + what);
  };
  const std::string obj = j.at("object").get<std::string>();
  if (obj == "single") c.object = PromptComponents::Object::Single;
  else if (obj == "multiple") c.object = PromptComponents::Object::Multiple;
  else throw bad("object");

  if (j.contains("relationship")) {
    const std::string r = j.at("relationship").get<std::string>();
    if (r == "spatial") c.relationship = PromptComponents::Relationship::Spatial;
    else if (r == "non-spatial") c.relationship = PromptComponents::Relationship::NonSpatial;
    else throw bad("relationship");
  }
  if (j.contains("attribute")) {
    const std::string a = j.at("attribute").get<std::string>();
    if (a == "geometry-only") c.attribute = PromptComponents::Attribute::GeometryOnly;
    else if (a == "appearance-only") c.attribute = PromptComponents::Attribute::AppearanceOnly;
    else if (a == "mixed") c.attribute = PromptComponents::Attribute::Mixed;
    else throw bad("attribute");
  }
  const std::string st = j.at("style").get<std::string>();
  if (st == "realistic") c.style = PromptComponents::Style::Realistic;
  else if (st == "imaginative") c.style = PromptComponents::Style::Imaginative;
  else throw bad("style");

  const std::string len = j.at("length").get<std::string>();
  if (len == "basic") c.length = PromptComponents::Length::Basic;
  else if (len == "refined") c.length = PromptComponents::Length::Refined;
  else if (len == "complex") c.length = PromptComponents::Length::Complex;
  else throw bad("length");

  // single-object prompts carry an attribute, multi-object ones a relationship
  const bool single = c.object == PromptComponents::Object::Single;
  if (c.relationship.has_value() == c.attribute.has_value() ||
      (single && !c.attribute) || (!single && !c.relationship))
    throw bad("object/relationship/attribute combination");
  return c;
}

json components_to_json(const PromptComponents& c) {
  json j;
  j["object"] = c.object == PromptComponents::Object::Single ? "single" : "multiple";
  if (c.relationship)
    j["relationship"] =
        *c.relationship == PromptComponents::Relationship::Spatial ? "spatial" : "non-spatial";
  if (c.attribute) {
    switch (*c.attribute) {
      case PromptComponents::Attribute::GeometryOnly: j["attribute"] = "geometry-only"; break;
      case PromptComponents::Attribute::AppearanceOnly: j["attribute"] = "appearance-only"; break;
      case PromptComponents::Attribute::Mixed: j["attribute"] = "mixed"; break;
    }
  }
  j["style"] = c.style == PromptComponents::Style::Realistic ? "realistic" : "imaginative";
  switch (c.length) {
    case PromptComponents::Length::Basic: j["length"] = "basic"; break;
    case PromptComponents::Length::Refined: j["length"] = "refined"; break;
    case PromptComponents::Length::Complex: j["length"] = "complex"; break;
  }
  return j;
}

}  // namespace

void validate_manifest(const BenchmarkManifest& m) {
  if (m.dimensions.empty()) throw ValidationError("manifest declares no dimensions");
  if (m.samples.empty()) throw ValidationError("empty benchmark");
  if (!(m.score_min < m.score_max)) throw ValidationError("bad score_range");
  if (m.n_views < 1) throw ValidationError("n_views must be >= 1");

  std::set<std::string> dim_ids, dim_names;
  for (const auto& d : m.dimensions) {
    if (d.id.empty()) throw ValidationError("dimension with empty id");
    if (d.display_name.empty())
      throw ValidationError("dimension " + d.id + " has empty display name");
    if (!dim_ids.insert(d.id).second)
      throw ValidationError("duplicate dimension id " + d.id);
    if (!dim_names.insert(d.display_name).second)
      throw ValidationError("duplicate dimension name " + d.display_name);
  }

  std::set<std::string> ids;
  for (const auto& s : m.samples) {
    if (s.sample_id.empty()) throw ValidationError("sample with empty sample_id");
    if (!ids.insert(s.sample_id).second)
      throw ValidationError("duplicate sample_id " + s.sample_id);
    if (s.prompt_id.empty())
      throw ValidationError("sample " + s.sample_id + ": empty prompt_id");
    if (static_cast<int>(s.view_paths.size()) != m.n_views)
      throw ValidationError("sample " + s.sample_id + ": expected " +
                            std::to_string(m.n_views) + " views, got " +
                            std::to_string(s.view_paths.size()));
    for (const auto& v : s.view_paths)
      if (!fs::exists(v))
        throw ValidationError("sample " + s.sample_id + ": missing view file " + v);
    for (const auto& d : m.dimensions) {
      if (!s.mos.declared(d.id))
        throw ValidationError("sample " + s.sample_id + ": missing score for dimension " + d.id);
      if (s.mos.has(d.id)) {
        const double v = s.mos.get(d.id);
        if (v < m.score_min || v > m.score_max)
          throw ValidationError("sample " + s.sample_id + ": score " +
                                std::to_string(v) + " for " + d.id +
                                " outside [" + std::to_string(m.score_min) + ", " +
                                std::to_string(m.score_max) + "]");
      }
    }
    for (const auto& [dim, _] : s.mos.raw())
      if (!dim_ids.count(dim))
        throw ValidationError("sample " + s.sample_id + ": score for undeclared dimension " + dim);
  }
}

BenchmarkManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("malformed manifest " + path + ": " + e.what());
  }

  BenchmarkManifest m;
  const fs::path base = fs::path(path).parent_path();
  try {
    m.name = j.at("name").get<std::string>();
    const auto& range = j.at("score_range");
    m.score_min = range.at(0).get<double>();
    m.score_max = range.at(1).get<double>();
    m.n_views = j.at("n_views").get<int>();
    for (const auto& dj : j.at("dimensions")) {
      QualityDimension d;
      d.id = dj.at("id").get<std::string>();
      d.display_name = dj.at("name").get<std::string>();
      if (dj.contains("keywords"))
        d.keywords = dj.at("keywords").get<std::vector<std::string>>();
      m.dimensions.push_back(std::move(d));
    }
    for (const auto& sj : j.at("samples")) {
      Sample s;
      s.sample_id = sj.at("sample_id").get<std::string>();
      s.prompt_id = sj.at("prompt_id").get<std::string>();
      s.prompt_text = sj.at("prompt_text").get<std::string>();
      s.generator_id = sj.at("generator_id").get<std::string>();
      if (sj.contains("components") && !sj.at("components").is_null())
        s.components = parse_components(sj.at("components"), s.sample_id);
      for (const auto& vj : sj.at("views")) {
        fs::path vp = vj.get<std::string>();
        if (vp.is_relative()) vp = base / vp;
        s.view_paths.push_back(vp.lexically_normal().string());
      }
      for (const auto& [dim, val] : sj.at("mos").items()) {
        if (val.is_null())
          s.mos.set_absent(dim);
        else
          s.mos.set(dim, val.get<double>());
      }
      m.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ParseError("malformed manifest " + path + ": " + e.what());
  }
  validate_manifest(m);
  return m;
}

void save_manifest(const BenchmarkManifest& m, const std::string& path) {
  const fs::path base = fs::path(path).parent_path();
  ordered_json j;
  j["name"] = m.name;
  j["score_range"] = {m.score_min, m.score_max};
  j["n_views"] = m.n_views;
  j["dimensions"] = json::array();
  for (const auto& d : m.dimensions) {
    ordered_json dj;
    dj["id"] = d.id;
    dj["name"] = d.display_name;
    dj["keywords"] = d.keywords;
    j["dimensions"].push_back(dj);
  }
  j["samples"] = json::array();
  for (const auto& s : m.samples) {
    ordered_json sj;
    sj["sample_id"] = s.sample_id;
    sj["prompt_id"] = s.prompt_id;
    sj["prompt_text"] = s.prompt_text;
    if (s.components) sj["components"] = components_to_json(*s.components);
    sj["generator_id"] = s.generator_id;
    sj["views"] = json::array();
    for (const auto& v : s.view_paths) {
      // store relative to the manifest directory when possible
      fs::path vp(v);
      auto rel = vp.lexically_relative(base.empty() ? fs::path(".") : base);
      sj["views"].push_back(
          (!rel.empty() && rel.native()[0] != '.') ? rel.string() : vp.string());
    }
    json mos = json::object();
    for (const auto& [dim, val] : s.mos.raw()) {
      if (std::isnan(val))
        mos[dim] = nullptr;
      else
        mos[dim] = val;
    }
    sj["mos"] = mos;
    j["samples"].push_back(sj);
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

FoldPlan make_fold_plan(const BenchmarkManifest& m, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("fold count must be >= 2");
  std::vector<std::string> prompts = m.prompt_ids();
  if (static_cast<int>(prompts.size()) < k)
    throw ValidationError("fewer prompts (" + std::to_string(prompts.size()) +
                          ") than folds (" + std::to_string(k) + ")");
  std::sort(prompts.begin(), prompts.end());
  auto rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
  std::shuffle(prompts.begin(), prompts.end(), rng);
  FoldPlan plan;
  plan.k = k;
  for (std::size_t i = 0; i < prompts.size(); ++i)
    plan.assignments[prompts[i]] = static_cast<int>(i % k);
  return plan;
}

std::vector<int> samples_for_prompts(const BenchmarkManifest& m,
                                     const std::vector<std::string>& prompts) {
  std::set<std::string> keep(prompts.begin(), prompts.end());
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(m.samples.size()); ++i)
    if (keep.count(m.samples[i].prompt_id)) out.push_back(i);
  return out;
}

}  // namespace t3dqa
