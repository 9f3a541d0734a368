#pragma once

// Easy-to-hard batch construction: prompt-count growth, score-difference
// gating, and dimension-consistency gating. The state is owned by the
// training loop (single writer); batch sampling is pure given a state
// snapshot and a seed.

#include "t3dqa/losses.hpp"
#include "t3dqa/manifest.hpp"

#include <optional>
#include <string>
#include <vector>

namespace t3dqa {

enum class RhoMode { verbatim, mirrored };

RhoMode rho_mode_from_string(const std::string& s);
std::string to_string(RhoMode m);

struct StrategyFlags {
  bool prompt_count = true;
  bool score_difference = true;
  bool dimension_consistency = true;
};

struct CurriculumState {
  int epoch = 0;    // t
  int horizon = 1;  // T
  int n_p = 1;
  double eta = 2.5;
  double rho = 1.0;
  double epsilon = 1e-2;
  std::vector<double> srcc_history;
  std::vector<double> krcc_history;
  StrategyFlags enabled;

  static CurriculumState init(int horizon, double score_max, double epsilon,
                              const StrategyFlags& flags, RhoMode mode);
};

// Scalar "overall" MOS used by the score-difference gate: the OQ dimension
// when declared and present, otherwise the mean of present dimensions.
double overall_mos(const MosVector& mos, const std::vector<std::string>& dim_ids);

// Eq. levels: |sum_d phi| / sum_d |phi| with phi = sign(S_i^d - S_j^d);
// identical vectors (0/0) count as fully consistent.
double consistency(const MosVector& a, const MosVector& b,
                   const std::vector<std::string>& dim_ids);

// verbatim: 0.5 + 0.5*t/T (pool shrinks); mirrored: 1.0 - 0.5*t/T (pool
// grows, the default). T == 0 pins the endpoint value.
double consistency_threshold(int t, int T, RhoMode mode);

// Mean over dimensions of SRCC(predicted, MOS) on the monitoring subset.
// Dimensions with constant inputs are undefined, counted as 0, and
// reported through `log` when given. Rows with absent entries are dropped
// per dimension. pred/mos are (n_samples x n_dims).
double mean_srcc(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& mos,
                 std::vector<std::string>* log = nullptr);

// Mean over dimensions of the restricted Kendall statistic over pairs
// whose overall-MOS gap exceeds eta. nullopt when no pair qualifies.
std::optional<double> mean_krcc_restricted(const Eigen::MatrixXd& pred,
                                           const Eigen::MatrixXd& mos,
                                           const Eigen::VectorXd& overall,
                                           double eta);

// Appends s_t; on a stall (|s_t - s_{t-1}| < epsilon) grows n_p toward N_b.
void update_prompt_count(CurriculumState& state, double s_t, int batch_size);

// First (N_b mod n_p) prompts get floor(N_b/n_p)+1 samples, the rest floor.
std::vector<int> prompt_quota(int batch_size, int n_p);

// Appends k_t; on a stall lowers eta by 1 toward 0.
void update_score_threshold(CurriculumState& state, double k_t);
// No eligible pair at the current eta: lower it without recording history.
void relax_score_threshold(CurriculumState& state);

struct BatchSkeleton {
  std::vector<int> sample_indices;                // into manifest.samples
  std::vector<std::pair<int, int>> eligible_pairs;  // indices into sample_indices
  std::vector<PairMeta> pair_meta;
  bool used_fallback_pair = false;
};

// Draws n_p prompts from `prompt_pool` with per-prompt quotas, then gates
// pairs by the enabled thresholds. Falls back to the single
// (gap, consistency)-lexicographically best pair when nothing qualifies.
BatchSkeleton sample_batch(const BenchmarkManifest& manifest,
                           const std::vector<std::string>& prompt_pool,
                           const CurriculumState& state, int batch_size,
                           std::uint64_t seed);

}  // namespace t3dqa
