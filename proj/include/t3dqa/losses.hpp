#pragma once

// Training losses: pairwise ranking hinge, supervised contrastive
// regression, their stage-1 combination, and the stage-2 MSE. One
// differentiable implementation serves both training and the value-level
// API (which runs the same graph on constants), so the oracle-equivalence
// tests exercise the real path. All losses are pure.

#include "t3dqa/autodiff.hpp"
#include "t3dqa/manifest.hpp"

#include <string>
#include <utility>
#include <vector>

namespace t3dqa {

struct PairMeta {
  double score_gap = 0;     // |overall MOS_i - overall MOS_j|
  double consistency = 0;   // c(i,j) in [0,1]
  bool same_prompt = false;
};

// Value-level batch: predictions and fused features as plain matrices.
struct PairBatch {
  struct Entry {
    std::string sample_id;
    MosVector mos;
    Eigen::VectorXd pred_scores;  // per declared dimension
    Eigen::MatrixXd fused;        // N_d x N_f
  };
  std::vector<std::string> dim_ids;
  std::vector<Entry> samples;
  std::vector<std::pair<int, int>> eligible_pairs;  // unordered, i < j
  std::vector<PairMeta> pair_meta;                  // aligned with eligible_pairs
};

// Tape-level batch; filled by the trainer from live forward passes.
struct BatchVars {
  std::vector<std::string> dim_ids;
  std::vector<const MosVector*> mos;
  std::vector<std::vector<ad::Var>> scores;  // [sample][dim], 1x1
  std::vector<std::vector<ad::Var>> fused;   // [sample][dim], 1 x N_f
  std::vector<std::pair<int, int>> eligible_pairs;
};

// Mean over eligible unordered pairs of the per-pair mean over non-tied
// dimensions of max(0, -sign(S_i-S_j)(Shat_i-Shat_j) + theta). Pairs whose
// MOS ties on every dimension carry no ranking signal and are excluded
// from the pair average. Returns 0 for an empty pair set.
ad::Var rank_loss_t(ad::Tape& tape, const BatchVars& batch, double theta);

// Supervised contrastive regression over the whole batch: every other
// sample acts once as the positive for each anchor; the denominator for a
// positive sums over samples at least as far from the anchor in MOS
// (including the positive itself, so each term is >= 0). `strict` switches
// the comparison to strictly-farther negatives only; terms whose negative
// set is empty are skipped under strict mode.
ad::Var cons_loss_t(ad::Tape& tape, const BatchVars& batch, double tau,
                    bool strict = false);

ad::Var stage1_loss_t(ad::Tape& tape, const BatchVars& batch, double theta,
                      double lambda, double tau, bool strict = false);

ad::Var mse_loss_t(ad::Tape& tape, const BatchVars& batch);

// ---- value-level wrappers ------------------------------------------------

double rank_loss(const PairBatch& batch, double theta);
double cons_loss(const PairBatch& batch, double tau, bool strict = false);
double stage1_loss(const PairBatch& batch, double theta, double lambda, double tau,
                   bool strict = false);
double mse_loss(const std::vector<Eigen::VectorXd>& predictions,
                const std::vector<MosVector>& targets,
                const std::vector<std::string>& dim_ids);

BatchVars batch_constants(ad::Tape& tape, const PairBatch& batch);

}  // namespace t3dqa
