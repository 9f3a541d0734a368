// Command-line front end: validate / synth / train / eval / score /
// crossval / report. Exit codes: 0 success, 1 domain or validation
// failure, 2 usage or parse failure.

#include "t3dqa/common.hpp"
#include "t3dqa/eval.hpp"
#include "t3dqa/manifest.hpp"
#include "t3dqa/model.hpp"
#include "t3dqa/run_config.hpp"
#include "t3dqa/synthetic.hpp"
#include "t3dqa/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace t3dqa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << content;
}

int cmd_validate(const std::string& manifest_path) {
  BenchmarkManifest m = load_manifest(manifest_path);
  std::cout << m.samples.size() << " samples OK (" << m.prompt_ids().size()
            << " prompt groups, " << m.dimensions.size() << " dimensions, "
            << m.n_views << " views each)\n";
  return kExitOk;
}

int cmd_synth(const SyntheticSpec& spec, const std::string& out_dir) {
  SyntheticBenchmark bench = generate_synthetic_benchmark(spec, out_dir);
  std::cout << "wrote " << bench.manifest.samples.size() << " samples to "
            << bench.manifest_path << "\n";
  return kExitOk;
}

std::vector<std::string> train_prompts_for(const RunConfig& cfg,
                                           const BenchmarkManifest& manifest) {
  if (!cfg.split) return manifest.prompt_ids();
  FoldPlan plan = make_fold_plan(manifest, cfg.split->k, cfg.split->seed);
  return plan.train_prompts(cfg.split->fold);
}

int cmd_train(const std::string& config_path, bool resume, bool stage2_only,
              const std::string& start_ckpt) {
  RunConfig cfg = load_run_config(config_path);
  if (cfg.run_dir.empty()) throw ValidationError("train: config must set run_dir");
  BenchmarkManifest manifest = load_manifest(cfg.manifest_path);
  fs::create_directories(cfg.run_dir);
  const std::string cfg_snapshot = (fs::path(cfg.run_dir) / "config.json").string();
  if (!fs::exists(cfg_snapshot)) save_run_config(cfg, cfg_snapshot);

  std::unique_ptr<ScoringModel> model;
  if (!start_ckpt.empty()) {
    model = model_from_checkpoint(load_checkpoint(start_ckpt));
  } else {
    auto backend = make_backend(cfg.backend_name, cfg.backend);
    model = std::make_unique<ScoringModel>(backend, manifest.dimensions,
                                           manifest.score_min, manifest.score_max,
                                           cfg.model);
  }

  const auto prompts = train_prompts_for(cfg, manifest);
  if (!stage2_only) {
    StageResult s1 = train_stage1(manifest, prompts, cfg.train, *model, cfg.run_dir, resume);
    std::cout << "stage1 done: final loss " << s1.final_loss << ", best epoch "
              << s1.best_epoch << "\n";
  }
  StageResult s2 = train_stage2(manifest, prompts, cfg.train, *model, cfg.run_dir, resume);
  std::cout << "stage2 done: final loss " << s2.final_loss << ", best epoch "
            << s2.best_epoch << "\n";

  Checkpoint best = select_checkpoint((fs::path(cfg.run_dir) / "stage2").string());
  const std::string final_path = (fs::path(cfg.run_dir) / "final.ckpt.json").string();
  save_checkpoint(best, final_path);
  write_file((fs::path(cfg.run_dir) / "SELECTED").string(),
             "stage2 epoch " + std::to_string(best.epoch) + " train_loss " +
                 std::to_string(best.train_loss) + "\n");
  std::cout << "selected checkpoint: epoch " << best.epoch << " (loss "
            << best.train_loss << ") -> " << final_path << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path,
             const std::string& dims_csv, const std::string& mapping_path,
             bool fit_logistic, const std::string& out_dir) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto model = model_from_checkpoint(ckpt);
  BenchmarkManifest manifest = load_manifest(manifest_path);

  EvalReport report;
  if (!mapping_path.empty()) {
    report = cross_benchmark(*model, load_dimension_mapping(mapping_path), manifest);
  } else {
    std::vector<int> all(manifest.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    FoldReport fr =
        evaluate_split(*model, manifest, all, split_csv(dims_csv), fit_logistic);
    report.benchmark = manifest.name;
    report.folds.push_back(fr);
    report.averaged = fr.dims;
    report.ap_srcc = fr.ap_srcc;
    report.ap_krcc = fr.ap_krcc;
  }
  report.checkpoint_id = ckpt_path + " (" + ckpt.stage + " epoch " +
                         std::to_string(ckpt.epoch) + ")";
  std::cout << report_to_text(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "report.txt").string(), report_to_text(report));
    write_file((fs::path(out_dir) / "report.json").string(), report_to_json(report));
    std::cout << "report written to " << out_dir << "\n";
  }
  return kExitOk;
}

int cmd_score(const std::string& ckpt_path, const std::string& prompt,
              const std::string& view_dir, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto model = model_from_checkpoint(ckpt);

  std::vector<std::string> views;
  if (!fs::is_directory(view_dir))
    throw ValidationError("score: view directory not found: " + view_dir);
  for (const auto& e : fs::directory_iterator(view_dir)) {
    const auto ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") views.push_back(e.path().string());
  }
  std::sort(views.begin(), views.end());
  if (static_cast<int>(views.size()) != ckpt.n_views)
    throw ValidationError("score: expected " + std::to_string(ckpt.n_views) +
                          " views, found " + std::to_string(views.size()) + " in " +
                          view_dir);

  auto [scores, probs] = model->predict_views(views, prompt);
  json record;
  record["prompt"] = prompt;
  record["scores"] = json::object();
  for (int d = 0; d < model->n_dims(); ++d) {
    const auto& id = model->dimensions()[d].id;
    std::cout << id << ": " << scores(d) << "\n";
    record["scores"][id] = scores(d);
  }
  std::cout << record.dump() << "\n";  // one machine-readable record
  if (!out_path.empty()) write_file(out_path, record.dump(2) + "\n");
  return kExitOk;
}

int cmd_crossval(const std::string& config_path, int k_override,
                 const std::string& out_dir) {
  RunConfig cfg = load_run_config(config_path);
  BenchmarkManifest manifest = load_manifest(cfg.manifest_path);
  CrossValSpec spec;
  spec.k = k_override > 0 ? k_override : (cfg.split ? cfg.split->k : 5);
  spec.fold_seed = cfg.split ? cfg.split->seed : cfg.seed;
  spec.model_cfg = cfg.model;
  spec.backend_cfg = cfg.backend;
  spec.backend_name = cfg.backend_name;
  spec.run_dir = out_dir.empty() ? cfg.run_dir : out_dir;
  EvalReport report = cross_validate(manifest, cfg.train, spec);
  std::cout << report_to_text(report);
  if (!spec.run_dir.empty()) {
    fs::create_directories(spec.run_dir);
    write_file((fs::path(spec.run_dir) / "crossval_report.txt").string(),
               report_to_text(report));
    write_file((fs::path(spec.run_dir) / "crossval_report.json").string(),
               report_to_json(report));
  }
  return kExitOk;
}

int cmd_report(const std::string& manifest_path, const std::string& scores_path,
               const std::string& out_dir) {
  BenchmarkManifest manifest = load_manifest(manifest_path);
  std::vector<double> overall;
  if (!scores_path.empty()) {
    std::ifstream in(scores_path);
    if (!in) throw ParseError("cannot open scores file: " + scores_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed scores file: ") + e.what());
    }
    overall.reserve(manifest.samples.size());
    for (const auto& s : manifest.samples) {
      if (!j.contains(s.sample_id))
        throw ValidationError("scores file missing sample " + s.sample_id);
      overall.push_back(j.at(s.sample_id).get<double>());
    }
  }
  ComponentReport rep = component_report(manifest, overall);
  std::cout << component_report_to_text(rep);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "components.csv").string(),
               component_report_to_text(rep));
    write_file((fs::path(out_dir) / "radar.csv").string(), radar_csv(rep));
    std::cout << "report written to " << out_dir << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trainable fine-grained quality assessment for text-to-3D assets"};
  app.require_subcommand(1);

  // validate
  std::string v_manifest;
  auto* validate = app.add_subcommand("validate", "load and validate a benchmark manifest");
  validate->add_option("manifest", v_manifest, "manifest file")->required();

  // synth
  SyntheticSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--prompts", spec.n_prompts, "prompt count");
  synth->add_option("--generators", spec.n_generators, "generator count");
  synth->add_option("--views", spec.n_views, "views per sample");
  synth->add_option("--noise-sd", spec.noise_sd, "MOS noise std-dev");
  synth->add_option("--seed", spec.seed, "seed");
  synth->add_option("--image-size", spec.image_size, "render size in pixels");

  // train
  std::string t_config, t_start;
  bool t_resume = false, t_stage2_only = false;
  auto* train = app.add_subcommand("train", "run the two-stage training procedure");
  train->add_option("--config", t_config, "run config file")->required();
  train->add_flag("--resume", t_resume, "continue from the last checkpoint in run_dir");
  train->add_flag("--stage2-only", t_stage2_only, "run only the regression stage");
  train->add_option("--start", t_start, "checkpoint to start from");

  // eval
  std::string e_ckpt, e_manifest, e_dims, e_mapping, e_out;
  bool e_nofit = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a benchmark");
  eval->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
  eval->add_option("--manifest", e_manifest, "manifest file")->required();
  eval->add_option("--dims", e_dims, "comma-separated dimension filter");
  eval->add_option("--cross-benchmark", e_mapping, "dimension mapping file");
  eval->add_flag("--no-fit", e_nofit, "skip logistic-5 calibration");
  eval->add_option("--out", e_out, "directory for report files");

  // score
  std::string s_ckpt, s_prompt, s_views, s_out;
  auto* score = app.add_subcommand("score", "score one asset from its rendered views");
  score->add_option("--checkpoint", s_ckpt, "checkpoint file")->required();
  score->add_option("--prompt", s_prompt, "generation prompt")->required();
  score->add_option("--views", s_views, "directory with rendered views")->required();
  score->add_option("--out", s_out, "write the JSON record here");

  // crossval
  std::string c_config, c_out;
  int c_k = 0;
  auto* crossval = app.add_subcommand("crossval", "prompt-disjoint k-fold cross-validation");
  crossval->add_option("--config", c_config, "run config file")->required();
  crossval->add_option("--k", c_k, "fold count override");
  crossval->add_option("--out", c_out, "directory for reports and fold runs");

  // report
  std::string r_manifest, r_scores, r_out;
  auto* report = app.add_subcommand("report", "component table and radar-chart data");
  report->add_option("--manifest", r_manifest, "manifest file")->required();
  report->add_option("--scores", r_scores, "JSON map sample_id -> overall score");
  report->add_option("--out", r_out, "directory for CSV outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(v_manifest);
    if (synth->parsed()) return cmd_synth(spec, synth_out);
    if (train->parsed()) return cmd_train(t_config, t_resume, t_stage2_only, t_start);
    if (eval->parsed())
      return cmd_eval(e_ckpt, e_manifest, e_dims, e_mapping, !e_nofit, e_out);
    if (score->parsed()) return cmd_score(s_ckpt, s_prompt, s_views, s_out);
    if (crossval->parsed()) return cmd_crossval(c_config, c_k, c_out);
    if (report->parsed()) return cmd_report(r_manifest, r_scores, r_out);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}
