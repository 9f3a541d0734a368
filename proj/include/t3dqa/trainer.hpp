#pragma once

// Two-stage training: curriculum-scheduled ranking + contrastive learning,
// then MSE fine-tuning with the level head frozen. One logical training
// thread owns all mutable parameters; monitoring runs synchronously at
// epoch boundaries with gradients disabled.

#include "t3dqa/curriculum.hpp"
#include "t3dqa/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace t3dqa {

struct TrainConfig {
  int stage1_epochs = 40;
  int stage2_epochs = 10;
  int batch_size = 8;
  double theta = 0.5;
  double tau = 2.0;
  double lambda = 1.0;
  double epsilon = 1e-2;
  double lr_visual = 2e-6;
  double lr_other = 3e-4;
  double lr_decay = 0.9;
  int lr_decay_every = 5;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  StrategyFlags strategies;
  RhoMode rho_mode = RhoMode::mirrored;
  int monitor_subset = 500;
  bool strict_contrastive = false;

  void validate() const;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TraceRecord {
  int t = 0;  // 1-based epoch
  int n_p = 1;
  double eta = 0;
  double rho = 0;
  double s_t = 0;
  std::optional<double> k_t;
  double loss = 0;
  double lr_factor = 1.0;
};

std::string trace_to_json(const CurriculumState& state,
                          const std::vector<TraceRecord>& records);
void trace_from_json(const std::string& text, CurriculumState& state,
                     std::vector<TraceRecord>& records);

class Adam {
 public:
  Adam(std::vector<ad::Parameter*> params, double weight_decay);

  void zero_grad();
  void step(double lr_factor);
  std::int64_t step_count() const { return step_; }
  double last_lr_factor() const { return last_factor_; }

  void save_state(std::map<std::string, Eigen::MatrixXd>& m,
                  std::map<std::string, Eigen::MatrixXd>& v, std::int64_t& step) const;
  void load_state(const std::map<std::string, Eigen::MatrixXd>& m,
                  const std::map<std::string, Eigen::MatrixXd>& v, std::int64_t step);

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<Eigen::MatrixXd> m_, v_;
  double weight_decay_;
  std::int64_t step_ = 0;
  double last_factor_ = 1.0;
};

struct StageResult {
  std::vector<TraceRecord> trace;
  double final_loss = 0;
  int best_epoch = 1;
  double best_loss = 0;
};

// Trains on the samples of `train_prompts` only. When run_dir is nonempty,
// writes per-epoch checkpoints and a trace log under <run_dir>/<stage>/ and
// resumes from the last checkpoint present if `resume` is set.
StageResult train_stage1(const BenchmarkManifest& manifest,
                         const std::vector<std::string>& train_prompts,
                         const TrainConfig& cfg, ScoringModel& model,
                         const std::string& run_dir = "", bool resume = false);

StageResult train_stage2(const BenchmarkManifest& manifest,
                         const std::vector<std::string>& train_prompts,
                         const TrainConfig& cfg, ScoringModel& model,
                         const std::string& run_dir = "", bool resume = false);

// The checkpoint with minimal recorded training loss in a stage directory;
// ties break toward the earliest epoch.
Checkpoint select_checkpoint(const std::string& stage_dir);

// Fixed seeded monitoring subset: min(cfg.monitor_subset, |train samples|).
std::vector<int> monitoring_subset(const BenchmarkManifest& manifest,
                                   const std::vector<std::string>& train_prompts,
                                   const TrainConfig& cfg);

double learning_rate_factor(const TrainConfig& cfg, int epoch_index);

}  // namespace t3dqa
