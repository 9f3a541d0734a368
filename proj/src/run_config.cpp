#include "t3dqa/run_config.hpp"

#include "t3dqa/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace t3dqa {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ParseError("config: unknown key '" + key + "' in " + where);
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("malformed config " + path + ": " + e.what());
  }

  RunConfig cfg;
  try {
    reject_unknown(j, {"manifest", "run_dir", "seed", "backend", "model", "train",
                       "split", "eval"},
                   "top level");
    cfg.manifest_path = j.at("manifest").get<std::string>();
    if (j.contains("run_dir")) cfg.run_dir = j.at("run_dir").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      reject_unknown(b, {"name", "n_f", "patch_grid", "input_resolution",
                         "token_limit", "seed"},
                     "backend");
      if (b.contains("name")) cfg.backend_name = b.at("name").get<std::string>();
      if (b.contains("n_f")) cfg.backend.n_f = b.at("n_f").get<int>();
      if (b.contains("patch_grid")) {
        cfg.backend.patch_rows = b.at("patch_grid").at(0).get<int>();
        cfg.backend.patch_cols = b.at("patch_grid").at(1).get<int>();
      }
      if (b.contains("input_resolution"))
        cfg.backend.input_resolution = b.at("input_resolution").get<int>();
      if (b.contains("token_limit")) cfg.backend.token_limit = b.at("token_limit").get<int>();
      if (b.contains("seed")) cfg.backend.seed = b.at("seed").get<std::uint64_t>();
    }

    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, {"fusion_mode", "fusion_hidden_mult", "attention_scale",
                         "context_len", "insertion", "inv_temp_enabled",
                         "inv_temp_init"},
                     "model");
      if (m.contains("fusion_mode"))
        cfg.model.fusion_mode = fusion_mode_from_string(m.at("fusion_mode").get<std::string>());
      if (m.contains("fusion_hidden_mult"))
        cfg.model.fusion_hidden_mult = m.at("fusion_hidden_mult").get<int>();
      if (m.contains("attention_scale"))
        cfg.model.attention_scale = m.at("attention_scale").get<bool>();
      if (m.contains("context_len")) cfg.model.context_len = m.at("context_len").get<int>();
      if (m.contains("insertion"))
        cfg.model.insertion = insertion_from_string(m.at("insertion").get<std::string>());
      if (m.contains("inv_temp_enabled"))
        cfg.model.inv_temp_enabled = m.at("inv_temp_enabled").get<bool>();
      if (m.contains("inv_temp_init"))
        cfg.model.inv_temp_init = m.at("inv_temp_init").get<double>();
    }

    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t, {"stage1_epochs", "stage2_epochs", "batch_size", "theta", "tau",
                         "lambda", "epsilon", "lr_visual", "lr_other", "lr_decay",
                         "lr_decay_every", "weight_decay", "monitor_subset",
                         "strict_contrastive", "strategies", "rho_mode"},
                     "train");
      auto& c = cfg.train;
      if (t.contains("stage1_epochs")) c.stage1_epochs = t.at("stage1_epochs").get<int>();
      if (t.contains("stage2_epochs")) c.stage2_epochs = t.at("stage2_epochs").get<int>();
      if (t.contains("batch_size")) c.batch_size = t.at("batch_size").get<int>();
      if (t.contains("theta")) c.theta = t.at("theta").get<double>();
      if (t.contains("tau")) c.tau = t.at("tau").get<double>();
      if (t.contains("lambda")) c.lambda = t.at("lambda").get<double>();
      if (t.contains("epsilon")) c.epsilon = t.at("epsilon").get<double>();
      if (t.contains("lr_visual")) c.lr_visual = t.at("lr_visual").get<double>();
      if (t.contains("lr_other")) c.lr_other = t.at("lr_other").get<double>();
      if (t.contains("lr_decay")) c.lr_decay = t.at("lr_decay").get<double>();
      if (t.contains("lr_decay_every")) c.lr_decay_every = t.at("lr_decay_every").get<int>();
      if (t.contains("weight_decay")) c.weight_decay = t.at("weight_decay").get<double>();
      if (t.contains("monitor_subset")) c.monitor_subset = t.at("monitor_subset").get<int>();
      if (t.contains("strict_contrastive"))
        c.strict_contrastive = t.at("strict_contrastive").get<bool>();
      if (t.contains("strategies")) {
        const auto& s = t.at("strategies");
        reject_unknown(s, {"prompt_count", "score_difference", "dimension_consistency"},
                       "train.strategies");
        if (s.contains("prompt_count"))
          c.strategies.prompt_count = s.at("prompt_count").get<bool>();
        if (s.contains("score_difference"))
          c.strategies.score_difference = s.at("score_difference").get<bool>();
        if (s.contains("dimension_consistency"))
          c.strategies.dimension_consistency = s.at("dimension_consistency").get<bool>();
      }
      if (t.contains("rho_mode"))
        c.rho_mode = rho_mode_from_string(t.at("rho_mode").get<std::string>());
      c.seed = cfg.seed;
    }

    if (j.contains("split") && !j.at("split").is_null()) {
      const auto& s = j.at("split");
      reject_unknown(s, {"k", "fold", "seed"}, "split");
      SplitSpec sp;
      if (s.contains("k")) sp.k = s.at("k").get<int>();
      if (s.contains("fold")) sp.fold = s.at("fold").get<int>();
      if (s.contains("seed")) sp.seed = s.at("seed").get<std::uint64_t>();
      if (sp.fold < 0 || sp.fold >= sp.k)
        throw ValidationError("config: split.fold outside [0, k)");
      cfg.split = sp;
    }

    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      reject_unknown(e, {"fit_logistic", "dims"}, "eval");
      if (e.contains("fit_logistic")) cfg.fit_logistic = e.at("fit_logistic").get<bool>();
      if (e.contains("dims")) cfg.eval_dims = e.at("dims").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw ParseError("malformed config " + path + ": " + e.what());
  }

  cfg.model.init_seed = mix_seed(cfg.seed, 0x90DE1);
  cfg.train.seed = cfg.seed;

  if (const char* root = std::getenv("T3DQA_RUN_ROOT");
      root && !cfg.run_dir.empty() && fs::path(cfg.run_dir).is_relative())
    cfg.run_dir = (fs::path(root) / cfg.run_dir).string();

  // manifest path relative to the config file's directory
  if (!cfg.manifest_path.empty() && fs::path(cfg.manifest_path).is_relative()) {
    const fs::path base = fs::path(path).parent_path();
    if (!base.empty()) cfg.manifest_path = (base / cfg.manifest_path).string();
  }

  cfg.train.validate();
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  json j;
  j["manifest"] = cfg.manifest_path;
  j["run_dir"] = cfg.run_dir;
  j["seed"] = cfg.seed;
  j["backend"] = {{"name", cfg.backend_name},
                  {"n_f", cfg.backend.n_f},
                  {"patch_grid", {cfg.backend.patch_rows, cfg.backend.patch_cols}},
                  {"input_resolution", cfg.backend.input_resolution},
                  {"token_limit", cfg.backend.token_limit},
                  {"seed", cfg.backend.seed}};
  j["model"] = {{"fusion_mode", to_string(cfg.model.fusion_mode)},
                {"fusion_hidden_mult", cfg.model.fusion_hidden_mult},
                {"attention_scale", cfg.model.attention_scale},
                {"context_len", cfg.model.context_len},
                {"insertion", to_string(cfg.model.insertion)},
                {"inv_temp_enabled", cfg.model.inv_temp_enabled},
                {"inv_temp_init", cfg.model.inv_temp_init}};
  j["train"] = {{"stage1_epochs", cfg.train.stage1_epochs},
                {"stage2_epochs", cfg.train.stage2_epochs},
                {"batch_size", cfg.train.batch_size},
                {"theta", cfg.train.theta},
                {"tau", cfg.train.tau},
                {"lambda", cfg.train.lambda},
                {"epsilon", cfg.train.epsilon},
                {"lr_visual", cfg.train.lr_visual},
                {"lr_other", cfg.train.lr_other},
                {"lr_decay", cfg.train.lr_decay},
                {"lr_decay_every", cfg.train.lr_decay_every},
                {"weight_decay", cfg.train.weight_decay},
                {"monitor_subset", cfg.train.monitor_subset},
                {"strict_contrastive", cfg.train.strict_contrastive},
                {"strategies",
                 {{"prompt_count", cfg.train.strategies.prompt_count},
                  {"score_difference", cfg.train.strategies.score_difference},
                  {"dimension_consistency", cfg.train.strategies.dimension_consistency}}},
                {"rho_mode", to_string(cfg.train.rho_mode)}};
  if (cfg.split)
    j["split"] = {{"k", cfg.split->k}, {"fold", cfg.split->fold}, {"seed", cfg.split->seed}};
  j["eval"] = {{"fit_logistic", cfg.fit_logistic}, {"dims", cfg.eval_dims}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write config: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace t3dqa
