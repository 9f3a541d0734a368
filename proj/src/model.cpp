#include "t3dqa/model.hpp"

#include "t3dqa/common.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

using nlohmann::json;

namespace t3dqa {

ScoringModel::ScoringModel(std::shared_ptr<EncoderBackend> backend,
                           std::vector<QualityDimension> dimensions,
                           double score_min, double score_max,
                           const ModelConfig& cfg)
    : backend_(std::move(backend)),
      dims_(std::move(dimensions)),
      score_min_(score_min),
      score_max_(score_max),
      cfg_(cfg) {
  if (dims_.empty()) throw ValidationError("model requires at least one dimension");
  const int nf = backend_->info().n_f;
  const int ew = backend_->info().embed_width;
  projector_ = ProjectorParams(ew, ew, mix_seed(cfg.init_seed, 11));
  const int in_w = cfg.fusion_mode == FusionMode::concat ? 2 * nf : nf;
  fusion_ = FusionParams(in_w, cfg.fusion_hidden_mult * nf, nf, mix_seed(cfg.init_seed, 12));
  bank_ = LevelBank(ew, mix_seed(cfg.init_seed, 13), cfg.context_len, cfg.insertion,
                    cfg.inv_temp_enabled, cfg.inv_temp_init);
  bank_.remap_range(score_min_, score_max_);
}

std::vector<ad::Parameter*> ScoringModel::parameters() {
  std::vector<ad::Parameter*> out = backend_->parameters();
  for (auto* p : projector_.parameters()) out.push_back(p);
  for (auto* p : fusion_.parameters()) out.push_back(p);
  out.push_back(&bank_.context);
  out.push_back(&bank_.inv_temp);
  return out;
}

ScoringModel::Context ScoringModel::prepare(ad::Tape& tape) {
  Context ctx;
  for (const auto& d : dims_) {
    ctx.dim_rows.push_back(
        project_dimension_feature(tape, *backend_, projector_, d.display_name));
    ctx.level_rows.push_back(level_features_t(tape, *backend_, bank_, d.display_name));
  }
  ctx.inv_temp = bank_.inv_temp_enabled ? tape.param(bank_.inv_temp)
                                        : tape.constant_scalar(1.0);
  return ctx;
}

ScoringModel::SampleForward ScoringModel::forward(
    ad::Tape& tape, const Context& ctx, const Eigen::MatrixXd& view_descriptors,
    const Eigen::MatrixXd& prompt_embeddings) {
  SampleForward out;
  ad::Var f_visual = backend_->project_descriptors(tape, view_descriptors);
  ad::Var f_prompt = backend_->encode_tokens(tape, tape.constant(prompt_embeddings));
  for (int d = 0; d < n_dims(); ++d) {
    AttentionVars attn = attention_weights_t(tape, f_visual, f_prompt,
                                             ctx.dim_rows[d], cfg_.attention_scale);
    ad::Var fused = fuse_t(tape, f_visual, f_prompt, attn, fusion_, cfg_.fusion_mode);
    ScoreVars sv = score_t(tape, fused, ctx.level_rows[d], bank_.q, ctx.inv_temp);
    out.fused.push_back(fused);
    out.scores.push_back(sv.score);
    out.probs.push_back(sv.probs);
  }
  return out;
}

Eigen::MatrixXd ScoringModel::sample_descriptors(const Sample& s) {
  const int nt = backend_->info().patch_tokens();
  const int nf = backend_->info().n_f;
  Eigen::MatrixXd all(static_cast<Eigen::Index>(s.view_paths.size()) * nt, nf);
  Eigen::Index r = 0;
  for (const auto& path : s.view_paths) {
    auto it = descriptor_cache_.find(path);
    if (it == descriptor_cache_.end()) {
      Eigen::MatrixXd raw = backend_->image_descriptors(load_image(path));
      it = descriptor_cache_.emplace(path, std::move(raw)).first;
    }
    all.middleRows(r, nt) = it->second;
    r += nt;
  }
  return all;
}

Eigen::MatrixXd ScoringModel::prompt_embeddings(const std::string& prompt) {
  auto it = prompt_cache_.find(prompt);
  if (it == prompt_cache_.end()) {
    it = prompt_cache_.emplace(prompt, backend_->embed_text(prompt, nullptr)).first;
  }
  return it->second;
}

void ScoringModel::clear_input_cache() {
  descriptor_cache_.clear();
  prompt_cache_.clear();
}

Eigen::VectorXd ScoringModel::predict(const Sample& s) {
  ad::Tape tape(false);
  Context ctx = prepare(tape);
  SampleForward f = forward(tape, ctx, sample_descriptors(s), prompt_embeddings(s.prompt_text));
  Eigen::VectorXd scores(n_dims());
  for (int d = 0; d < n_dims(); ++d) {
    if (s.mos.declared(dims_[d].id) && !s.mos.has(dims_[d].id)) {
      scores(d) = std::numeric_limits<double>::quiet_NaN();
    } else {
      scores(d) = std::clamp(f.scores[d].scalar(), bank_.q.minCoeff(), bank_.q.maxCoeff());
    }
  }
  return scores;
}

Eigen::MatrixXd ScoringModel::predict_batch(const BenchmarkManifest& m,
                                            const std::vector<int>& sample_indices) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(sample_indices.size()), n_dims());
  ad::Tape tape(false);
  Context ctx = prepare(tape);
  for (std::size_t i = 0; i < sample_indices.size(); ++i) {
    const Sample& s = m.samples[sample_indices[i]];
    SampleForward f =
        forward(tape, ctx, sample_descriptors(s), prompt_embeddings(s.prompt_text));
    for (int d = 0; d < n_dims(); ++d) {
      if (s.mos.declared(dims_[d].id) && !s.mos.has(dims_[d].id))
        out(static_cast<Eigen::Index>(i), d) = std::numeric_limits<double>::quiet_NaN();
      else
        out(static_cast<Eigen::Index>(i), d) =
            std::clamp(f.scores[d].scalar(), bank_.q.minCoeff(), bank_.q.maxCoeff());
    }
  }
  return out;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> ScoringModel::predict_views(
    const std::vector<std::string>& view_paths, const std::string& prompt) {
  Sample s;
  s.sample_id = "(adhoc)";
  s.prompt_text = prompt;
  s.view_paths = view_paths;
  ad::Tape tape(false);
  Context ctx = prepare(tape);
  SampleForward f = forward(tape, ctx, sample_descriptors(s), prompt_embeddings(prompt));
  Eigen::VectorXd scores(n_dims());
  Eigen::MatrixXd probs(n_dims(), bank_.n_levels());
  for (int d = 0; d < n_dims(); ++d) {
    scores(d) = std::clamp(f.scores[d].scalar(), bank_.q.minCoeff(), bank_.q.maxCoeff());
    probs.row(d) = f.probs[d].value().col(0).transpose();
  }
  return {scores, probs};
}

FusedFeature ScoringModel::fused_features(const Sample& s) {
  ad::Tape tape(false);
  Context ctx = prepare(tape);
  SampleForward f = forward(tape, ctx, sample_descriptors(s), prompt_embeddings(s.prompt_text));
  FusedFeature out;
  out.sample_id = s.sample_id;
  out.rows.resize(n_dims(), backend_->info().n_f);
  for (int d = 0; d < n_dims(); ++d) out.rows.row(d) = f.fused[d].value().row(0);
  return out;
}

std::uint64_t ScoringModel::digest_of(const std::vector<std::string>& names) const {
  auto* self = const_cast<ScoringModel*>(this);
  std::uint64_t h = 0;
  for (auto* p : self->parameters())
    for (const auto& n : names)
      if (p->name == n) h ^= p->digest();
  return h;
}

std::uint64_t ScoringModel::level_head_digest() const {
  return digest_of({"level.context", "level.inv_temp"});
}

// ---- checkpoint serialization -------------------------------------------

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(m.data(), m.data() + m.size());
  j["data"] = data;
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != m.size())
    throw ParseError("checkpoint matrix size mismatch");
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

}  // namespace

Checkpoint snapshot_model(ScoringModel& model) {
  Checkpoint c;
  c.model_cfg = model.config();
  c.dimensions = model.dimensions();
  c.score_min = model.score_min();
  c.score_max = model.score_max();
  const BackendInfo& bi = model.backend().info();
  c.backend_name = bi.name;
  c.backend_cfg.n_f = bi.n_f;
  c.backend_cfg.patch_rows = bi.patch_rows;
  c.backend_cfg.patch_cols = bi.patch_cols;
  c.backend_cfg.input_resolution = bi.input_resolution;
  c.backend_cfg.token_limit = bi.token_limit;
  c.backend_cfg.seed = bi.seed;
  for (auto* p : model.parameters()) c.params[p->name] = p->value;
  return c;
}

void restore_model(ScoringModel& model, const Checkpoint& ckpt) {
  for (auto* p : model.parameters()) {
    auto it = ckpt.params.find(p->name);
    if (it == ckpt.params.end())
      throw ParseError("checkpoint missing parameter " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw ParseError("checkpoint parameter shape mismatch for " + p->name);
    p->value = it->second;
    p->zero_grad();
  }
}

std::unique_ptr<ScoringModel> model_from_checkpoint(const Checkpoint& ckpt) {
  auto backend = make_backend(ckpt.backend_name, ckpt.backend_cfg);
  auto model = std::make_unique<ScoringModel>(backend, ckpt.dimensions, ckpt.score_min,
                                              ckpt.score_max, ckpt.model_cfg);
  restore_model(*model, ckpt);
  return model;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  json j;
  j["format_version"] = c.format_version;
  j["epoch"] = c.epoch;
  j["stage"] = c.stage;
  j["train_loss"] = c.train_loss;
  j["n_views"] = c.n_views;
  j["backend"] = {{"name", c.backend_name},
                  {"n_f", c.backend_cfg.n_f},
                  {"patch_grid", {c.backend_cfg.patch_rows, c.backend_cfg.patch_cols}},
                  {"input_resolution", c.backend_cfg.input_resolution},
                  {"token_limit", c.backend_cfg.token_limit},
                  {"seed", c.backend_cfg.seed}};
  j["model"] = {{"fusion_mode", to_string(c.model_cfg.fusion_mode)},
                {"fusion_hidden_mult", c.model_cfg.fusion_hidden_mult},
                {"attention_scale", c.model_cfg.attention_scale},
                {"context_len", c.model_cfg.context_len},
                {"insertion", to_string(c.model_cfg.insertion)},
                {"inv_temp_enabled", c.model_cfg.inv_temp_enabled},
                {"inv_temp_init", c.model_cfg.inv_temp_init},
                {"init_seed", c.model_cfg.init_seed}};
  j["score_range"] = {c.score_min, c.score_max};
  j["dimensions"] = json::array();
  for (const auto& d : c.dimensions)
    j["dimensions"].push_back({{"id", d.id}, {"name", d.display_name}, {"keywords", d.keywords}});
  json params = json::object();
  for (const auto& [name, m] : c.params) params[name] = matrix_to_json(m);
  j["params"] = params;
  json om = json::object(), ov = json::object();
  for (const auto& [name, m] : c.opt_m) om[name] = matrix_to_json(m);
  for (const auto& [name, m] : c.opt_v) ov[name] = matrix_to_json(m);
  j["opt"] = {{"m", om}, {"v", ov}, {"step", c.opt_step}};
  j["trace"] = c.trace_json;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("malformed checkpoint " + path + ": " + e.what());
  }
  Checkpoint c;
  try {
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kCheckpointFormatVersion)
      throw ParseError("unsupported checkpoint format-version " +
                       std::to_string(c.format_version) + " (expected " +
                       std::to_string(kCheckpointFormatVersion) + ")");
    c.epoch = j.at("epoch").get<int>();
    c.stage = j.at("stage").get<std::string>();
    c.train_loss = j.at("train_loss").get<double>();
    if (j.contains("n_views")) c.n_views = j.at("n_views").get<int>();
    const auto& b = j.at("backend");
    c.backend_name = b.at("name").get<std::string>();
    c.backend_cfg.n_f = b.at("n_f").get<int>();
    c.backend_cfg.patch_rows = b.at("patch_grid").at(0).get<int>();
    c.backend_cfg.patch_cols = b.at("patch_grid").at(1).get<int>();
    c.backend_cfg.input_resolution = b.at("input_resolution").get<int>();
    c.backend_cfg.token_limit = b.at("token_limit").get<int>();
    c.backend_cfg.seed = b.at("seed").get<std::uint64_t>();
    const auto& m = j.at("model");
    c.model_cfg.fusion_mode = fusion_mode_from_string(m.at("fusion_mode").get<std::string>());
    c.model_cfg.fusion_hidden_mult = m.at("fusion_hidden_mult").get<int>();
    c.model_cfg.attention_scale = m.at("attention_scale").get<bool>();
    c.model_cfg.context_len = m.at("context_len").get<int>();
    c.model_cfg.insertion = insertion_from_string(m.at("insertion").get<std::string>());
    c.model_cfg.inv_temp_enabled = m.at("inv_temp_enabled").get<bool>();
    c.model_cfg.inv_temp_init = m.at("inv_temp_init").get<double>();
    c.model_cfg.init_seed = m.at("init_seed").get<std::uint64_t>();
    c.score_min = j.at("score_range").at(0).get<double>();
    c.score_max = j.at("score_range").at(1).get<double>();
    for (const auto& dj : j.at("dimensions")) {
      QualityDimension d;
      d.id = dj.at("id").get<std::string>();
      d.display_name = dj.at("name").get<std::string>();
      d.keywords = dj.at("keywords").get<std::vector<std::string>>();
      c.dimensions.push_back(std::move(d));
    }
    for (const auto& [name, mj] : j.at("params").items())
      c.params[name] = matrix_from_json(mj);
    if (j.contains("opt")) {
      for (const auto& [name, mj] : j.at("opt").at("m").items())
        c.opt_m[name] = matrix_from_json(mj);
      for (const auto& [name, mj] : j.at("opt").at("v").items())
        c.opt_v[name] = matrix_from_json(mj);
      c.opt_step = j.at("opt").at("step").get<std::int64_t>();
    }
    if (j.contains("trace")) c.trace_json = j.at("trace").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError("malformed checkpoint " + path + ": " + e.what());
  }
  return c;
}

}  // namespace t3dqa
