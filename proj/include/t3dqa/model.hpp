#pragma once

// The full scoring model: backend + dimension projector + fusion head +
// level bank, with per-sample forward passes on a tape, value-level
// prediction for inference, and JSON checkpointing.

#include "t3dqa/encoders.hpp"
#include "t3dqa/fusion.hpp"
#include "t3dqa/level_head.hpp"
#include "t3dqa/manifest.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace t3dqa {

struct ModelConfig {
  FusionMode fusion_mode = FusionMode::concat;
  int fusion_hidden_mult = 2;
  bool attention_scale = false;  // divide attention logits by sqrt(N_f)
  int context_len = 12;
  LevelInsertion insertion = LevelInsertion::middle;
  bool inv_temp_enabled = true;
  double inv_temp_init = 10.0;
  std::uint64_t init_seed = 0;
};

class ScoringModel {
 public:
  ScoringModel(std::shared_ptr<EncoderBackend> backend,
               std::vector<QualityDimension> dimensions, double score_min,
               double score_max, const ModelConfig& cfg);

  const std::vector<QualityDimension>& dimensions() const { return dims_; }
  int n_dims() const { return static_cast<int>(dims_.size()); }
  const QualityDimension* find_dim(const std::string& id) const {
    for (const auto& d : dims_)
      if (d.id == id) return &d;
    return nullptr;
  }
  int dim_index(const std::string& id) const {
    for (int i = 0; i < n_dims(); ++i)
      if (dims_[i].id == id) return i;
    return -1;
  }
  EncoderBackend& backend() { return *backend_; }
  const EncoderBackend& backend() const { return *backend_; }
  LevelBank& level_bank() { return bank_; }
  ProjectorParams& projector() { return projector_; }
  FusionParams& fusion() { return fusion_; }
  const ModelConfig& config() const { return cfg_; }
  double score_min() const { return score_min_; }
  double score_max() const { return score_max_; }

  // All parameters, backend's first. Frozen ones excluded from training by
  // their `trainable` flag, not by omission here.
  std::vector<ad::Parameter*> parameters();

  // Batch-invariant tape state (dimension + level features).
  struct Context {
    std::vector<ad::Var> dim_rows;     // per dim, (1 x N_f)
    std::vector<ad::Var> level_rows;   // per dim, (N_l x N_f)
    ad::Var inv_temp;                  // 1x1
  };
  Context prepare(ad::Tape& tape);

  struct SampleForward {
    std::vector<ad::Var> fused;   // per dim, (1 x N_f)
    std::vector<ad::Var> scores;  // per dim, 1x1
    std::vector<ad::Var> probs;   // per dim, (N_l x 1)
  };
  SampleForward forward(ad::Tape& tape, const Context& ctx,
                        const Eigen::MatrixXd& view_descriptors,
                        const Eigen::MatrixXd& prompt_embeddings);

  // Raw, parameter-independent inputs for a sample (descriptor stage is
  // cached per view path; prompt embeddings per prompt text).
  Eigen::MatrixXd sample_descriptors(const Sample& s);
  Eigen::MatrixXd prompt_embeddings(const std::string& prompt);
  void clear_input_cache();

  // Value-level prediction; NaN marks dimensions the sample declares absent.
  Eigen::VectorXd predict(const Sample& s);
  Eigen::MatrixXd predict_batch(const BenchmarkManifest& m,
                                const std::vector<int>& sample_indices);
  // Scores for ad-hoc inputs (the `score` CLI command).
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> predict_views(
      const std::vector<std::string>& view_paths, const std::string& prompt);

  FusedFeature fused_features(const Sample& s);

  std::uint64_t digest_of(const std::vector<std::string>& param_names) const;
  std::uint64_t level_head_digest() const;  // context tokens + inv_temp
  std::uint64_t text_encoder_digest() const { return backend_->text_encoder_digest(); }

 private:
  std::shared_ptr<EncoderBackend> backend_;
  std::vector<QualityDimension> dims_;
  double score_min_, score_max_;
  ModelConfig cfg_;
  ProjectorParams projector_;
  FusionParams fusion_;
  LevelBank bank_;
  std::map<std::string, Eigen::MatrixXd> descriptor_cache_;  // view path -> raw
  std::map<std::string, Eigen::MatrixXd> prompt_cache_;
};

// ---- checkpointing ------------------------------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  int epoch = 0;
  std::string stage;  // "stage1" | "stage2"
  double train_loss = 0.0;
  int n_views = 6;  // expected view count for scoring
  // backend + model config needed to rebuild the model
  TestBackendConfig backend_cfg;
  std::string backend_name = "test";
  ModelConfig model_cfg;
  std::vector<QualityDimension> dimensions;
  double score_min = 1.0, score_max = 5.0;
  std::map<std::string, Eigen::MatrixXd> params;
  // optimizer state, kept so an interrupted run resumes exactly
  std::map<std::string, Eigen::MatrixXd> opt_m, opt_v;
  std::int64_t opt_step = 0;
  std::string trace_json;  // curriculum trace records up to this epoch
};

Checkpoint snapshot_model(ScoringModel& model);
void restore_model(ScoringModel& model, const Checkpoint& ckpt);
std::unique_ptr<ScoringModel> model_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace t3dqa
