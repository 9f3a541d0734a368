#include "t3dqa/trainer.hpp"

#include "t3dqa/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace t3dqa {

void TrainConfig::validate() const {
  if (stage1_epochs < 1 || stage2_epochs < 1)
    throw ValidationError("train config: epochs must be >= 1");
  if (batch_size < 2) throw ValidationError("train config: batch_size must be >= 2");
  if (theta < 0) throw ValidationError("train config: theta must be >= 0");
  if (tau <= 0) throw ValidationError("train config: tau must be > 0");
  if (lambda < 0) throw ValidationError("train config: lambda must be >= 0");
  if (epsilon <= 0) throw ValidationError("train config: epsilon must be > 0");
  if (lr_visual <= 0 || lr_other <= 0 || lr_decay <= 0 || lr_decay_every < 1)
    throw ValidationError("train config: learning rates must be positive");
  if (weight_decay < 0) throw ValidationError("train config: weight_decay must be >= 0");
  if (monitor_subset < 3) throw ValidationError("train config: monitor_subset must be >= 3");
}

double learning_rate_factor(const TrainConfig& cfg, int epoch_index) {
  return std::pow(cfg.lr_decay, epoch_index / cfg.lr_decay_every);
}

// ---- Adam ---------------------------------------------------------------

Adam::Adam(std::vector<ad::Parameter*> params, double weight_decay)
    : params_(std::move(params)), weight_decay_(weight_decay) {
  for (auto* p : params_) {
    m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step(double lr_factor) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++step_;
  last_factor_ = lr_factor;
  const double bc1 = 1.0 - std::pow(beta1, double(step_));
  const double bc2 = 1.0 - std::pow(beta2, double(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter* p = params_[i];
    if (!p->trainable) continue;
    Eigen::MatrixXd g = p->grad + weight_decay_ * p->value;
    m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
    v_[i] = beta2 * v_[i] + (1.0 - beta2) * g.cwiseProduct(g);
    const double lr = p->base_lr * lr_factor;
    p->value.array() -= lr * (m_[i].array() / bc1) /
                        ((v_[i].array() / bc2).sqrt() + eps);
  }
}

void Adam::save_state(std::map<std::string, Eigen::MatrixXd>& m,
                      std::map<std::string, Eigen::MatrixXd>& v,
                      std::int64_t& step) const {
  m.clear();
  v.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m[params_[i]->name] = m_[i];
    v[params_[i]->name] = v_[i];
  }
  step = step_;
}

void Adam::load_state(const std::map<std::string, Eigen::MatrixXd>& m,
                      const std::map<std::string, Eigen::MatrixXd>& v,
                      std::int64_t step) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto im = m.find(params_[i]->name);
    auto iv = v.find(params_[i]->name);
    if (im != m.end()) m_[i] = im->second;
    if (iv != v.end()) v_[i] = iv->second;
  }
  step_ = step;
}

// ---- trace serialization --------------------------------------------------

std::string trace_to_json(const CurriculumState& state,
                          const std::vector<TraceRecord>& records) {
  json j;
  j["state"] = {{"epoch", state.epoch},
                {"horizon", state.horizon},
                {"n_p", state.n_p},
                {"eta", state.eta},
                {"rho", state.rho},
                {"epsilon", state.epsilon},
                {"srcc_history", state.srcc_history},
                {"krcc_history", state.krcc_history},
                {"enabled",
                 {{"prompt_count", state.enabled.prompt_count},
                  {"score_difference", state.enabled.score_difference},
                  {"dimension_consistency", state.enabled.dimension_consistency}}}};
  json recs = json::array();
  for (const auto& r : records) {
    json rj = {{"t", r.t},      {"n_p", r.n_p},   {"eta", r.eta},
               {"rho", r.rho},  {"s_t", r.s_t},   {"loss", r.loss},
               {"lr_factor", r.lr_factor}};
    if (r.k_t)
      rj["k_t"] = *r.k_t;
    else
      rj["k_t"] = nullptr;
    recs.push_back(rj);
  }
  j["records"] = recs;
  return j.dump();
}

void trace_from_json(const std::string& text, CurriculumState& state,
                     std::vector<TraceRecord>& records) {
  json j = json::parse(text);
  const auto& s = j.at("state");
  state.epoch = s.at("epoch").get<int>();
  state.horizon = s.at("horizon").get<int>();
  state.n_p = s.at("n_p").get<int>();
  state.eta = s.at("eta").get<double>();
  state.rho = s.at("rho").get<double>();
  state.epsilon = s.at("epsilon").get<double>();
  state.srcc_history = s.at("srcc_history").get<std::vector<double>>();
  state.krcc_history = s.at("krcc_history").get<std::vector<double>>();
  state.enabled.prompt_count = s.at("enabled").at("prompt_count").get<bool>();
  state.enabled.score_difference = s.at("enabled").at("score_difference").get<bool>();
  state.enabled.dimension_consistency =
      s.at("enabled").at("dimension_consistency").get<bool>();
  records.clear();
  for (const auto& rj : j.at("records")) {
    TraceRecord r;
    r.t = rj.at("t").get<int>();
    r.n_p = rj.at("n_p").get<int>();
    r.eta = rj.at("eta").get<double>();
    r.rho = rj.at("rho").get<double>();
    r.s_t = rj.at("s_t").get<double>();
    if (!rj.at("k_t").is_null()) r.k_t = rj.at("k_t").get<double>();
    r.loss = rj.at("loss").get<double>();
    r.lr_factor = rj.at("lr_factor").get<double>();
    records.push_back(r);
  }
}

// ---- shared helpers -------------------------------------------------------

namespace {

std::vector<std::string> dim_ids_of(const BenchmarkManifest& m) {
  std::vector<std::string> out;
  for (const auto& d : m.dimensions) out.push_back(d.id);
  return out;
}

std::string epoch_path(const std::string& stage_dir, int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.json", epoch);
  return (fs::path(stage_dir) / buf).string();
}

void append_trace_line(const std::string& stage_dir, const TraceRecord& r) {
  std::ofstream out(fs::path(stage_dir) / "trace.jsonl", std::ios::app);
  json rj = {{"t", r.t},     {"n_p", r.n_p}, {"eta", r.eta},     {"rho", r.rho},
             {"s_t", r.s_t}, {"loss", r.loss}, {"lr_factor", r.lr_factor}};
  if (r.k_t)
    rj["k_t"] = *r.k_t;
  else
    rj["k_t"] = nullptr;
  out << rj.dump() << "\n";
}

struct RunArtifacts {
  std::string stage_dir;
  bool write = false;
};

RunArtifacts prepare_stage_dir(const std::string& run_dir, const std::string& stage,
                               bool resume) {
  RunArtifacts a;
  if (run_dir.empty()) return a;
  a.write = true;
  a.stage_dir = (fs::path(run_dir) / stage).string();
  fs::create_directories(a.stage_dir);
  if (!resume) {
    for (const auto& e : fs::directory_iterator(a.stage_dir)) fs::remove_all(e.path());
  }
  return a;
}

int last_epoch_on_disk(const std::string& stage_dir) {
  int last = 0;
  if (stage_dir.empty() || !fs::exists(stage_dir)) return 0;
  for (const auto& e : fs::directory_iterator(stage_dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && name.size() >= 10)
      last = std::max(last, std::atoi(name.substr(6, 3).c_str()));
  }
  return last;
}

// rebuilds the trace log so a resumed run's file is a byte-identical
// continuation of the original
void rewrite_trace(const std::string& stage_dir, const std::vector<TraceRecord>& records) {
  fs::remove(fs::path(stage_dir) / "trace.jsonl");
  for (const auto& r : records) append_trace_line(stage_dir, r);
}

Checkpoint make_checkpoint(ScoringModel& model, int n_views, const std::string& stage,
                           int epoch, double loss, const Adam& adam,
                           const CurriculumState& state,
                           const std::vector<TraceRecord>& records) {
  Checkpoint c = snapshot_model(model);
  c.n_views = n_views;
  c.stage = stage;
  c.epoch = epoch;
  c.train_loss = loss;
  adam.save_state(c.opt_m, c.opt_v, c.opt_step);
  c.trace_json = trace_to_json(state, records);
  return c;
}

void assign_learning_rates(ScoringModel& model, const TrainConfig& cfg) {
  for (auto* p : model.parameters())
    p->base_lr = p->name.rfind("visual.", 0) == 0 ? cfg.lr_visual : cfg.lr_other;
}

std::string batch_diagnostic(const BenchmarkManifest& manifest,
                             const BatchSkeleton& skel, double rank_v, double cons_v) {
  std::string ids;
  for (int idx : skel.sample_indices) {
    if (!ids.empty()) ids += ",";
    ids += manifest.samples[idx].sample_id;
  }
  return "batch [" + ids + "] rank=" + std::to_string(rank_v) +
         " cons=" + std::to_string(cons_v);
}

}  // namespace

std::vector<int> monitoring_subset(const BenchmarkManifest& manifest,
                                   const std::vector<std::string>& train_prompts,
                                   const TrainConfig& cfg) {
  std::vector<int> train_samples = samples_for_prompts(manifest, train_prompts);
  auto rng = make_rng(mix_seed(cfg.seed, 0x3053));
  std::shuffle(train_samples.begin(), train_samples.end(), rng);
  const std::size_t n = std::min<std::size_t>(cfg.monitor_subset, train_samples.size());
  train_samples.resize(n);
  std::sort(train_samples.begin(), train_samples.end());
  return train_samples;
}

namespace {

Eigen::MatrixXd mos_matrix(const BenchmarkManifest& manifest,
                           const std::vector<int>& indices,
                           const std::vector<std::string>& dim_ids) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()),
                      static_cast<Eigen::Index>(dim_ids.size()));
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (std::size_t d = 0; d < dim_ids.size(); ++d)
      out(i, d) = manifest.samples[indices[i]].mos.has(dim_ids[d])
                      ? manifest.samples[indices[i]].mos.get(dim_ids[d])
                      : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace

StageResult train_stage1(const BenchmarkManifest& manifest,
                         const std::vector<std::string>& train_prompts,
                         const TrainConfig& cfg, ScoringModel& model,
                         const std::string& run_dir, bool resume) {
  cfg.validate();
  if (train_prompts.empty()) throw ValidationError("train_stage1: empty prompt set");
  const std::vector<std::string> dim_ids = dim_ids_of(manifest);

  // stage-1 freeze policy: text encoder frozen (it owns no parameters in
  // the test backend); everything else trains
  model.level_bank().context.trainable = true;
  model.level_bank().inv_temp.trainable = model.level_bank().inv_temp_enabled;
  assign_learning_rates(model, cfg);

  Adam adam(model.parameters(), cfg.weight_decay);
  CurriculumState state = CurriculumState::init(
      std::max(cfg.stage1_epochs - 1, 0), model.score_max(), cfg.epsilon,
      cfg.strategies, cfg.rho_mode);
  std::vector<TraceRecord> records;

  RunArtifacts art = prepare_stage_dir(run_dir, "stage1", resume);
  int start_epoch = 1;
  if (resume && art.write) {
    const int last = last_epoch_on_disk(art.stage_dir);
    if (last >= 1) {
      Checkpoint c = load_checkpoint(epoch_path(art.stage_dir, last));
      restore_model(model, c);
      adam.load_state(c.opt_m, c.opt_v, c.opt_step);
      trace_from_json(c.trace_json, state, records);
      rewrite_trace(art.stage_dir, records);
      start_epoch = last + 1;
    }
  }

  const std::vector<int> monitor = monitoring_subset(manifest, train_prompts, cfg);
  Eigen::MatrixXd monitor_mos = mos_matrix(manifest, monitor, dim_ids);

  StageResult result;
  result.trace = records;
  result.best_loss = std::numeric_limits<double>::infinity();
  for (const auto& r : records)
    if (r.loss < result.best_loss) {
      result.best_loss = r.loss;
      result.best_epoch = r.t;
    }

  for (int epoch = start_epoch; epoch <= cfg.stage1_epochs; ++epoch) {
    state.rho = consistency_threshold(epoch - 1, state.horizon, cfg.rho_mode);
    const double lr_factor = learning_rate_factor(cfg, epoch - 1);
    const int n_p_used = state.n_p;
    const double eta_used = state.eta;
    const int batches =
        (static_cast<int>(train_prompts.size()) + state.n_p - 1) / state.n_p;

    double loss_acc = 0;
    for (int b = 0; b < batches; ++b) {
      BatchSkeleton skel =
          sample_batch(manifest, train_prompts, state, cfg.batch_size,
                       mix_seed(cfg.seed, 0x57A6E1, mix_seed(epoch, b)));
      ad::Tape tape(true);
      ScoringModel::Context ctx = model.prepare(tape);
      BatchVars vars;
      vars.dim_ids = dim_ids;
      vars.eligible_pairs = skel.eligible_pairs;
      for (int idx : skel.sample_indices) {
        const Sample& s = manifest.samples[idx];
        auto f = model.forward(tape, ctx, model.sample_descriptors(s),
                               model.prompt_embeddings(s.prompt_text));
        vars.mos.push_back(&s.mos);
        vars.scores.push_back(std::move(f.scores));
        vars.fused.push_back(std::move(f.fused));
      }
      ad::Var rank = rank_loss_t(tape, vars, cfg.theta);
      ad::Var loss = rank;
      double cons_v = 0;
      if (cfg.lambda > 0) {
        ad::Var cons = cons_loss_t(tape, vars, cfg.tau, cfg.strict_contrastive);
        cons_v = cons.scalar();
        loss = ad::add(rank, ad::affine(cons, cfg.lambda, 0.0));
      }
      const double loss_v = loss.scalar();
      if (!std::isfinite(loss_v))
        throw TrainingError("stage-1 loss is not finite: " +
                            batch_diagnostic(manifest, skel, rank.scalar(), cons_v));
      adam.zero_grad();
      tape.backward(loss);
      adam.step(lr_factor);
      loss_acc += loss_v;
    }
    const double epoch_loss = loss_acc / batches;

    // monitoring pass (inference mode) and schedule updates
    Eigen::MatrixXd pred = model.predict_batch(manifest, monitor);
    const double s_t = mean_srcc(pred, monitor_mos);
    Eigen::VectorXd overall(monitor.size());
    for (std::size_t i = 0; i < monitor.size(); ++i)
      overall(i) = overall_mos(manifest.samples[monitor[i]].mos, dim_ids);
    std::optional<double> k_t = mean_krcc_restricted(pred, monitor_mos, overall, state.eta);

    TraceRecord rec;
    rec.t = epoch;
    rec.n_p = n_p_used;
    rec.eta = eta_used;
    rec.rho = state.rho;
    rec.s_t = s_t;
    rec.k_t = k_t;
    rec.loss = epoch_loss;
    rec.lr_factor = lr_factor;
    records.push_back(rec);

    update_prompt_count(state, s_t, cfg.batch_size);
    if (k_t)
      update_score_threshold(state, *k_t);
    else
      relax_score_threshold(state);  // no eligible pair: admit more
    state.epoch = epoch;

    if (epoch_loss < result.best_loss) {
      result.best_loss = epoch_loss;
      result.best_epoch = epoch;
    }
    if (art.write) {
      append_trace_line(art.stage_dir, rec);
      save_checkpoint(
          make_checkpoint(model, manifest.n_views, "stage1", epoch, epoch_loss, adam,
                          state, records),
          epoch_path(art.stage_dir, epoch));
    }
    result.final_loss = epoch_loss;
  }
  result.trace = records;
  return result;
}

StageResult train_stage2(const BenchmarkManifest& manifest,
                         const std::vector<std::string>& train_prompts,
                         const TrainConfig& cfg, ScoringModel& model,
                         const std::string& run_dir, bool resume) {
  cfg.validate();
  if (train_prompts.empty()) throw ValidationError("train_stage2: empty prompt set");
  const std::vector<std::string> dim_ids = dim_ids_of(manifest);

  // stage-2 freeze policy: text encoder and the whole quality-level
  // learner (context tokens and the cosine scale) stay fixed
  model.level_bank().context.trainable = false;
  model.level_bank().inv_temp.trainable = false;
  assign_learning_rates(model, cfg);

  Adam adam(model.parameters(), cfg.weight_decay);
  std::vector<TraceRecord> records;
  CurriculumState state =
      CurriculumState::init(0, model.score_max(), cfg.epsilon, cfg.strategies, cfg.rho_mode);

  RunArtifacts art = prepare_stage_dir(run_dir, "stage2", resume);
  int start_epoch = 1;
  if (resume && art.write) {
    const int last = last_epoch_on_disk(art.stage_dir);
    if (last >= 1) {
      Checkpoint c = load_checkpoint(epoch_path(art.stage_dir, last));
      restore_model(model, c);
      model.level_bank().context.trainable = false;
      model.level_bank().inv_temp.trainable = false;
      adam.load_state(c.opt_m, c.opt_v, c.opt_step);
      trace_from_json(c.trace_json, state, records);
      rewrite_trace(art.stage_dir, records);
      start_epoch = last + 1;
    }
  }

  std::vector<int> train_samples = samples_for_prompts(manifest, train_prompts);
  if (train_samples.empty()) throw ValidationError("train_stage2: no training samples");

  StageResult result;
  result.trace = records;
  result.best_loss = std::numeric_limits<double>::infinity();
  for (const auto& r : records)
    if (r.loss < result.best_loss) {
      result.best_loss = r.loss;
      result.best_epoch = r.t;
    }

  for (int epoch = start_epoch; epoch <= cfg.stage2_epochs; ++epoch) {
    const double lr_factor = learning_rate_factor(cfg, epoch - 1);
    std::vector<int> order = train_samples;
    auto rng = make_rng(mix_seed(cfg.seed, 0x57A6E2, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_acc = 0;
    int batches = 0;
    for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), off + cfg.batch_size);
      ad::Tape tape(true);
      ScoringModel::Context ctx = model.prepare(tape);
      BatchVars vars;
      vars.dim_ids = dim_ids;
      std::string ids;
      for (std::size_t i = off; i < end; ++i) {
        const Sample& s = manifest.samples[order[i]];
        auto f = model.forward(tape, ctx, model.sample_descriptors(s),
                               model.prompt_embeddings(s.prompt_text));
        vars.mos.push_back(&s.mos);
        vars.scores.push_back(std::move(f.scores));
        vars.fused.push_back(std::move(f.fused));
        ids += (ids.empty() ? "" : ",") + s.sample_id;
      }
      ad::Var loss = mse_loss_t(tape, vars);
      const double loss_v = loss.scalar();
      if (!std::isfinite(loss_v))
        throw TrainingError("stage-2 loss is not finite: batch [" + ids + "]");
      adam.zero_grad();
      tape.backward(loss);
      adam.step(lr_factor);
      loss_acc += loss_v;
      ++batches;
    }
    const double epoch_loss = loss_acc / batches;

    TraceRecord rec;
    rec.t = epoch;
    rec.n_p = 0;
    rec.eta = 0;
    rec.rho = 0;
    rec.s_t = 0;
    rec.loss = epoch_loss;
    rec.lr_factor = lr_factor;
    records.push_back(rec);

    if (epoch_loss < result.best_loss) {
      result.best_loss = epoch_loss;
      result.best_epoch = epoch;
    }
    if (art.write) {
      append_trace_line(art.stage_dir, rec);
      save_checkpoint(
          make_checkpoint(model, manifest.n_views, "stage2", epoch, epoch_loss, adam,
                          state, records),
          epoch_path(art.stage_dir, epoch));
    }
    result.final_loss = epoch_loss;
  }
  result.trace = records;
  return result;
}

Checkpoint select_checkpoint(const std::string& stage_dir) {
  if (!fs::exists(stage_dir)) throw ValidationError("no such run directory: " + stage_dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(stage_dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && name.find(".json") != std::string::npos)
      files.push_back(e.path().string());
  }
  if (files.empty()) throw ValidationError("no checkpoints in " + stage_dir);
  std::sort(files.begin(), files.end());  // ascending epoch
  Checkpoint best;
  bool have = false;
  for (const auto& f : files) {
    Checkpoint c = load_checkpoint(f);
    if (!have || c.train_loss < best.train_loss) {  // strict: ties keep the earliest
      best = std::move(c);
      have = true;
    }
  }
  return best;
}

}  // namespace t3dqa
