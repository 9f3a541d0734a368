#include "t3dqa/eval.hpp"

#include "t3dqa/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace t3dqa {

namespace {

struct Column {
  Eigen::VectorXd pred;
  Eigen::VectorXd mos;
};

Column gather_defined(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& mos,
                      Eigen::Index d) {
  std::vector<double> xs, ys;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (std::isnan(pred(i, d)) || std::isnan(mos(i, d))) continue;
    xs.push_back(pred(i, d));
    ys.push_back(mos(i, d));
  }
  Column c;
  c.pred = Eigen::Map<Eigen::VectorXd>(xs.data(), xs.size());
  c.mos = Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size());
  return c;
}

double mean_of(const std::vector<DimStats>& dims, double DimStats::* field) {
  if (dims.empty()) return 0;
  double acc = 0;
  for (const auto& d : dims) acc += d.*field;
  return acc / double(dims.size());
}

}  // namespace

FoldReport evaluate_split(ScoringModel& model, const BenchmarkManifest& manifest,
                          const std::vector<int>& sample_indices,
                          const std::vector<std::string>& dims_filter,
                          bool fit_logistic) {
  if (sample_indices.size() < 3)
    throw ValidationError("evaluate_split: need >= 3 samples");

  std::set<std::string> filter(dims_filter.begin(), dims_filter.end());
  for (const auto& want : dims_filter)
    if (!model.find_dim(want))
      throw ValidationError("evaluate_split: model has no dimension " + want);

  Eigen::MatrixXd pred = model.predict_batch(manifest, sample_indices);
  const auto& dims = model.dimensions();
  Eigen::MatrixXd mos(static_cast<Eigen::Index>(sample_indices.size()),
                      static_cast<Eigen::Index>(dims.size()));
  for (std::size_t i = 0; i < sample_indices.size(); ++i) {
    const Sample& s = manifest.samples[sample_indices[i]];
    for (std::size_t d = 0; d < dims.size(); ++d)
      mos(i, d) = s.mos.has(dims[d].id) ? s.mos.get(dims[d].id)
                                        : std::numeric_limits<double>::quiet_NaN();
  }

  FoldReport rep;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    if (!filter.empty() && !filter.count(dims[d].id)) continue;
    DimStats ds;
    ds.dim_id = dims[d].id;
    Column col = gather_defined(pred, mos, static_cast<Eigen::Index>(d));
    ds.n = static_cast<int>(col.pred.size());
    if (ds.n >= 3) {
      auto s = srcc(col.pred, col.mos);
      auto k = krcc(col.pred, col.mos);
      if (s)
        ds.srcc = *s;
      else
        ds.degenerate = true;
      if (k) ds.krcc = *k;
      if (fit_logistic && ds.n >= 5) {
        Logistic5Fit fit = fit_logistic5(col.pred, col.mos);
        ds.fit_converged = fit.converged;
        ds.fit_monotone = fit.monotone;
        auto p = pearson(fit.map(col.pred), col.mos);
        if (p) ds.plcc_fit = *p;
      }
    } else {
      ds.degenerate = true;
    }
    rep.dims.push_back(std::move(ds));
  }
  if (rep.dims.empty()) throw ValidationError("evaluate_split: no dimensions to report");
  rep.ap_srcc = mean_of(rep.dims, &DimStats::srcc);
  rep.ap_krcc = mean_of(rep.dims, &DimStats::krcc);
  return rep;
}

EvalReport cross_validate(const BenchmarkManifest& manifest, const TrainConfig& cfg,
                          const CrossValSpec& spec) {
  EvalReport report;
  report.benchmark = manifest.name;
  FoldPlan plan = make_fold_plan(manifest, spec.k, spec.fold_seed);

  for (int fold = 0; fold < spec.k; ++fold) {
    const auto train_prompts = plan.train_prompts(fold);
    const auto test_prompts = plan.test_prompts(fold);
    // prompt-disjointness is a hard protocol requirement; re-check at run time
    std::set<std::string> train_set(train_prompts.begin(), train_prompts.end());
    for (const auto& p : test_prompts)
      if (train_set.count(p))
        throw ValidationError("fold " + std::to_string(fold) + ": prompt " + p +
                              " appears in both splits");

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(fold) + 1);
    ModelConfig mc = spec.model_cfg;
    mc.init_seed = mix_seed(fold_cfg.seed, 0x90DE1);
    auto backend = make_backend(spec.backend_name, spec.backend_cfg);
    ScoringModel model(backend, manifest.dimensions, manifest.score_min,
                       manifest.score_max, mc);

    std::string fold_dir;
    if (!spec.run_dir.empty()) {
      fold_dir = (fs::path(spec.run_dir) / ("fold_" + std::to_string(fold))).string();
      fs::create_directories(fold_dir);
    }
    try {
      train_stage1(manifest, train_prompts, fold_cfg, model, fold_dir);
      train_stage2(manifest, train_prompts, fold_cfg, model, fold_dir);
      if (!fold_dir.empty()) {
        Checkpoint best = select_checkpoint((fs::path(fold_dir) / "stage2").string());
        restore_model(model, best);
      }
    } catch (const std::exception& e) {
      throw TrainingError("fold " + std::to_string(fold) + ": " + e.what());
    }

    FoldReport fr =
        evaluate_split(model, manifest, samples_for_prompts(manifest, test_prompts));
    fr.fold = fold;
    report.folds.push_back(std::move(fr));
  }

  // per-dimension averages over folds
  if (!report.folds.empty()) {
    const auto& dims0 = report.folds[0].dims;
    for (std::size_t d = 0; d < dims0.size(); ++d) {
      DimStats avg;
      avg.dim_id = dims0[d].dim_id;
      double plcc_acc = 0;
      int plcc_n = 0;
      for (const auto& f : report.folds) {
        avg.srcc += f.dims[d].srcc;
        avg.krcc += f.dims[d].krcc;
        avg.n += f.dims[d].n;
        if (f.dims[d].plcc_fit) {
          plcc_acc += *f.dims[d].plcc_fit;
          ++plcc_n;
        }
      }
      avg.srcc /= double(report.folds.size());
      avg.krcc /= double(report.folds.size());
      if (plcc_n > 0) avg.plcc_fit = plcc_acc / plcc_n;
      report.averaged.push_back(std::move(avg));
    }
    report.ap_srcc = mean_of(report.averaged, &DimStats::srcc);
    report.ap_krcc = mean_of(report.averaged, &DimStats::krcc);
  }
  return report;
}

EvalReport cross_benchmark(ScoringModel& model,
                           const std::vector<std::pair<std::string, std::string>>& mapping,
                           const BenchmarkManifest& target) {
  // keep only pairs whose source dim the model knows and whose target dim
  // the benchmark declares
  std::vector<std::pair<std::string, std::string>> usable;
  for (const auto& [src, dst] : mapping)
    if (model.find_dim(src) && target.find_dimension(dst)) usable.emplace_back(src, dst);
  if (usable.empty())
    throw ValidationError("cross-benchmark: no overlapping dimensions under the mapping");

  std::vector<int> indices(target.samples.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
  Eigen::MatrixXd pred = model.predict_batch(target, indices);

  EvalReport report;
  report.benchmark = target.name;
  FoldReport fr;
  for (const auto& [src, dst] : usable) {
    const int sd = model.dim_index(src);
    DimStats ds;
    ds.dim_id = src + "->" + dst;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < target.samples.size(); ++i) {
      const Sample& s = target.samples[i];
      if (!s.mos.has(dst) || std::isnan(pred(static_cast<Eigen::Index>(i), sd))) continue;
      xs.push_back(pred(static_cast<Eigen::Index>(i), sd));
      ys.push_back(s.mos.get(dst));
    }
    ds.n = static_cast<int>(xs.size());
    if (ds.n >= 3) {
      Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(xs.data(), xs.size());
      Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size());
      auto s = srcc(x, y);
      auto k = krcc(x, y);
      if (s)
        ds.srcc = *s;
      else
        ds.degenerate = true;
      if (k) ds.krcc = *k;
    } else {
      ds.degenerate = true;
    }
    fr.dims.push_back(std::move(ds));
  }
  fr.ap_srcc = mean_of(fr.dims, &DimStats::srcc);
  fr.ap_krcc = mean_of(fr.dims, &DimStats::krcc);
  report.folds.push_back(fr);
  report.averaged = report.folds[0].dims;
  report.ap_srcc = fr.ap_srcc;
  report.ap_krcc = fr.ap_krcc;
  return report;
}

ComponentReport component_report(const BenchmarkManifest& manifest,
                                 const std::vector<double>& overall_scores) {
  if (!overall_scores.empty() && overall_scores.size() != manifest.samples.size())
    throw ValidationError("component_report: scores misaligned with samples");

  ComponentReport rep;
  rep.subcomponents = {"single",        "multiple",  "spatial", "non-spatial",
                       "realistic",     "imaginative", "geometry-only",
                       "appearance-only", "mixed",   "basic",   "refined",
                       "complex"};
  std::vector<std::string> dim_ids;
  for (const auto& d : manifest.dimensions) {
    dim_ids.push_back(d.id);
    rep.dims.push_back(d.id);
  }
  std::set<std::string> gens;
  for (const auto& s : manifest.samples) gens.insert(s.generator_id);
  rep.generators.assign(gens.begin(), gens.end());

  const auto gi = [&](const std::string& g) {
    return static_cast<Eigen::Index>(
        std::find(rep.generators.begin(), rep.generators.end(), g) - rep.generators.begin());
  };

  rep.means = Eigen::MatrixXd::Zero(rep.generators.size(), rep.subcomponents.size());
  rep.counts = Eigen::MatrixXd::Zero(rep.generators.size(), rep.subcomponents.size());
  rep.radar = Eigen::MatrixXd::Zero(rep.generators.size(), dim_ids.size());
  Eigen::MatrixXd radar_counts =
      Eigen::MatrixXd::Zero(rep.generators.size(), dim_ids.size());

  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const Sample& s = manifest.samples[i];
    const Eigen::Index g = gi(s.generator_id);
    const double overall = overall_scores.empty()
                               ? overall_mos(s.mos, dim_ids)
                               : overall_scores[i];
    if (s.components) {
      for (const auto& sub : s.components->subcomponents()) {
        auto it = std::find(rep.subcomponents.begin(), rep.subcomponents.end(), sub);
        if (it == rep.subcomponents.end()) continue;
        const Eigen::Index c = it - rep.subcomponents.begin();
        rep.means(g, c) += overall;
        rep.counts(g, c) += 1;
      }
    } else {
      ++rep.skipped_no_components;
    }
    for (std::size_t d = 0; d < dim_ids.size(); ++d)
      if (s.mos.has(dim_ids[d])) {
        rep.radar(g, static_cast<Eigen::Index>(d)) += s.mos.get(dim_ids[d]);
        radar_counts(g, static_cast<Eigen::Index>(d)) += 1;
      }
  }
  for (Eigen::Index g = 0; g < rep.means.rows(); ++g) {
    for (Eigen::Index c = 0; c < rep.means.cols(); ++c)
      rep.means(g, c) = rep.counts(g, c) > 0
                            ? rep.means(g, c) / rep.counts(g, c)
                            : std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index d = 0; d < rep.radar.cols(); ++d)
      rep.radar(g, d) = radar_counts(g, d) > 0
                            ? rep.radar(g, d) / radar_counts(g, d)
                            : std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

namespace {

std::string fmt(double v, int prec = 4) {
  if (std::isnan(v)) return "-";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

}  // namespace

std::string report_to_text(const EvalReport& r) {
  std::ostringstream os;
  os << "benchmark: " << r.benchmark << "\n";
  if (!r.checkpoint_id.empty()) os << "checkpoint: " << r.checkpoint_id << "\n";
  auto table = [&](const std::vector<DimStats>& dims, const std::string& title) {
    os << title << "\n";
    os << "  dim          srcc     krcc     plcc(fit)  n\n";
    for (const auto& d : dims) {
      os << "  " << d.dim_id;
      for (std::size_t p = d.dim_id.size(); p < 11; ++p) os << ' ';
      os << "  " << fmt(d.srcc) << "   " << fmt(d.krcc) << "   "
         << (d.plcc_fit ? fmt(*d.plcc_fit) : "-");
      if (d.plcc_fit && !d.fit_converged) os << "!";
      os << "      " << d.n;
      if (d.degenerate) os << "  (degenerate)";
      os << "\n";
    }
  };
  for (const auto& f : r.folds) {
    table(f.dims, "fold " + std::to_string(f.fold) + ":");
    os << "  AP(srcc) = " << fmt(f.ap_srcc) << "  AP(krcc) = " << fmt(f.ap_krcc) << "\n";
  }
  if (!r.averaged.empty() && r.folds.size() > 1) {
    table(r.averaged, "average over folds:");
  }
  os << "AP(srcc) = " << fmt(r.ap_srcc) << "\n";
  os << "AP(krcc) = " << fmt(r.ap_krcc) << "\n";
  return os.str();
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["benchmark"] = r.benchmark;
  j["checkpoint_id"] = r.checkpoint_id;
  auto dims_json = [](const std::vector<DimStats>& dims) {
    json a = json::array();
    for (const auto& d : dims) {
      json dj = {{"dim", d.dim_id},           {"srcc", d.srcc},
                 {"krcc", d.krcc},            {"n", d.n},
                 {"degenerate", d.degenerate}};
      if (d.plcc_fit) {
        dj["plcc_fit"] = *d.plcc_fit;
        dj["fit_converged"] = d.fit_converged;
        dj["fit_monotone"] = d.fit_monotone;
      }
      a.push_back(dj);
    }
    return a;
  };
  j["folds"] = json::array();
  for (const auto& f : r.folds)
    j["folds"].push_back({{"fold", f.fold},
                          {"dims", dims_json(f.dims)},
                          {"ap_srcc", f.ap_srcc},
                          {"ap_krcc", f.ap_krcc}});
  j["averaged"] = dims_json(r.averaged);
  j["ap_srcc"] = r.ap_srcc;
  j["ap_krcc"] = r.ap_krcc;
  return j.dump(2);
}

std::string component_report_to_text(const ComponentReport& r) {
  std::ostringstream os;
  os << "generator";
  for (const auto& s : r.subcomponents) os << "," << s;
  os << "\n";
  for (std::size_t g = 0; g < r.generators.size(); ++g) {
    os << r.generators[g];
    for (Eigen::Index c = 0; c < r.means.cols(); ++c)
      os << "," << fmt(r.means(static_cast<Eigen::Index>(g), c), 3);
    os << "\n";
  }
  if (r.skipped_no_components > 0)
    os << "# skipped (no components): " << r.skipped_no_components << "\n";
  return os.str();
}

std::string radar_csv(const ComponentReport& r) {
  std::ostringstream os;
  os << "generator,dim,value\n";
  for (std::size_t g = 0; g < r.generators.size(); ++g)
    for (std::size_t d = 0; d < r.dims.size(); ++d)
      os << r.generators[g] << "," << r.dims[d] << ","
         << fmt(r.radar(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(d)), 4)
         << "\n";
  return os.str();
}

std::vector<std::pair<std::string, std::string>> load_dimension_mapping(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mapping file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("malformed mapping " + path + ": " + e.what());
  }
  std::vector<std::pair<std::string, std::string>> out;
  try {
    for (const auto& e : j.at("map"))
      out.emplace_back(e.at("source").get<std::string>(), e.at("target").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError("malformed mapping " + path + ": " + e.what());
  }
  return out;
}

}  // namespace t3dqa
