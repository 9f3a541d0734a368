#pragma once

// Evaluation protocol: per-dimension correlation statistics, logistic-5
// calibrated PLCC, prompt-disjoint cross-validation, cross-benchmark
// transfer on mapped dimensions, and component/radar reporting.

#include "t3dqa/model.hpp"
#include "t3dqa/stats.hpp"
#include "t3dqa/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace t3dqa {

// Full-scale published reference for the average per-dimension SRCC of
// this architecture; not reproducible at desk scale, recorded as a target.
inline constexpr double kReferenceFullScaleAP = 0.908;

struct DimStats {
  std::string dim_id;
  double srcc = 0;
  double krcc = 0;
  std::optional<double> plcc_fit;  // post-logistic-fit Pearson
  bool fit_converged = false;
  bool fit_monotone = true;
  bool degenerate = false;  // constant inputs; statistics counted as 0
  int n = 0;
};

struct FoldReport {
  int fold = 0;
  std::vector<DimStats> dims;
  double ap_srcc = 0;
  double ap_krcc = 0;
};

struct EvalReport {
  std::string benchmark;
  std::string checkpoint_id;
  std::vector<FoldReport> folds;
  std::vector<DimStats> averaged;  // per-dimension mean over folds
  double ap_srcc = 0;
  double ap_krcc = 0;
};

// Evaluates a model on the given samples as one fold. `dims_filter`, when
// nonempty, restricts the report to those dimension ids.
FoldReport evaluate_split(ScoringModel& model, const BenchmarkManifest& manifest,
                          const std::vector<int>& sample_indices,
                          const std::vector<std::string>& dims_filter = {},
                          bool fit_logistic = true);

struct CrossValSpec {
  int k = 5;
  std::uint64_t fold_seed = 0;
  ModelConfig model_cfg;
  TestBackendConfig backend_cfg;
  std::string backend_name = "test";
  std::string run_dir;  // per-fold artifacts under <run_dir>/fold_<i>; optional
};

// Full two-stage training per fold on the train split, evaluation of the
// minimal-loss stage-2 checkpoint on the held-out prompts.
EvalReport cross_validate(const BenchmarkManifest& manifest, const TrainConfig& cfg,
                          const CrossValSpec& spec);

// Scores the target benchmark with a model trained elsewhere and reports
// SRCC only on the mapped (source dim -> target dim) pairs.
EvalReport cross_benchmark(ScoringModel& model,
                           const std::vector<std::pair<std::string, std::string>>& mapping,
                           const BenchmarkManifest& target);

struct ComponentReport {
  std::vector<std::string> generators;
  std::vector<std::string> subcomponents;
  Eigen::MatrixXd means;   // generators x subcomponents, NaN when empty
  Eigen::MatrixXd counts;
  int skipped_no_components = 0;
  std::vector<std::string> dims;
  Eigen::MatrixXd radar;   // generators x dims, mean scores (radar-chart data)
};

// Means of the overall score per generator and prompt sub-component. When
// `overall_scores` is empty the stored MOS is used.
ComponentReport component_report(const BenchmarkManifest& manifest,
                                 const std::vector<double>& overall_scores = {});

std::string report_to_text(const EvalReport& r);
std::string report_to_json(const EvalReport& r);
std::string component_report_to_text(const ComponentReport& r);
// Plain numeric series usable by any plotting tool: generator,dim,value
std::string radar_csv(const ComponentReport& r);

std::vector<std::pair<std::string, std::string>> load_dimension_mapping(
    const std::string& path);

}  // namespace t3dqa
