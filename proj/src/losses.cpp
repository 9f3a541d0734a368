#include "t3dqa/losses.hpp"

#include "t3dqa/common.hpp"

#include <cmath>
#include <map>

namespace t3dqa {

namespace {

int sign_of(double x) { return x > 0 ? 1 : (x < 0 ? -1 : 0); }

bool has_dim(const BatchVars& b, int i, const std::string& dim) {
  return b.mos[i]->has(dim);
}

}  // namespace

ad::Var rank_loss_t(ad::Tape& tape, const BatchVars& batch, double theta) {
  if (theta < 0) throw ValidationError("rank loss margin must be >= 0");
  ad::Var total = tape.constant_scalar(0.0);
  int effective_pairs = 0;
  for (const auto& [i, j] : batch.eligible_pairs) {
    ad::Var pair_sum = tape.constant_scalar(0.0);
    int used_dims = 0;
    for (std::size_t d = 0; d < batch.dim_ids.size(); ++d) {
      const std::string& dim = batch.dim_ids[d];
      if (!has_dim(batch, i, dim) || !has_dim(batch, j, dim)) continue;
      const int sign = sign_of(batch.mos[i]->get(dim) - batch.mos[j]->get(dim));
      if (sign == 0) continue;  // tied MOS: constant-theta hinge, no gradient
      ad::Var diff = ad::sub(batch.scores[i][d], batch.scores[j][d]);
      ad::Var hinge = ad::relu(ad::affine(diff, -double(sign), theta));
      pair_sum = ad::add(pair_sum, hinge);
      ++used_dims;
    }
    if (used_dims == 0) continue;
    total = ad::add(total, ad::affine(pair_sum, 1.0 / used_dims, 0.0));
    ++effective_pairs;
  }
  if (effective_pairs == 0) return tape.constant_scalar(0.0);
  return ad::affine(total, 1.0 / effective_pairs, 0.0);
}

ad::Var cons_loss_t(ad::Tape& tape, const BatchVars& batch, double tau, bool strict) {
  if (tau <= 0) throw ValidationError("contrastive temperature must be positive");
  const int n = static_cast<int>(batch.scores.size());
  if (n < 2) throw ValidationError("contrastive loss needs >= 2 samples");

  // pairwise feature similarities per dimension, computed once
  std::map<std::tuple<int, int, int>, ad::Var> sim;
  auto sim_of = [&](int a, int b, int d) {
    if (a > b) std::swap(a, b);
    auto key = std::make_tuple(a, b, d);
    auto it = sim.find(key);
    if (it != sim.end()) return it->second;
    ad::Var diff = ad::sub(batch.fused[a][d], batch.fused[b][d]);
    ad::Var s = ad::neg(ad::l2_norm(diff));  // sim = -||f_a - f_b||
    sim.emplace(key, s);
    return s;
  };

  ad::Var total = tape.constant_scalar(0.0);
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < n; ++p) {
      if (p == i) continue;
      ad::Var anchor_sum = tape.constant_scalar(0.0);
      int used_dims = 0;
      for (std::size_t d = 0; d < batch.dim_ids.size(); ++d) {
        const std::string& dim = batch.dim_ids[d];
        if (!has_dim(batch, i, dim) || !has_dim(batch, p, dim)) continue;
        const double pos_gap = std::abs(batch.mos[i]->get(dim) - batch.mos[p]->get(dim));
        std::vector<ad::Var> neg_terms;
        for (int m = 0; m < n; ++m) {
          if (m == i || !has_dim(batch, m, dim)) continue;
          const double gap = std::abs(batch.mos[i]->get(dim) - batch.mos[m]->get(dim));
          const bool in_set = strict ? (gap > pos_gap) : (gap >= pos_gap);
          if (!in_set) continue;
          neg_terms.push_back(ad::affine(sim_of(i, m, static_cast<int>(d)), 1.0 / tau, 0.0));
        }
        if (neg_terms.empty()) continue;  // only possible under strict mode
        ad::Var pos = ad::affine(sim_of(i, p, static_cast<int>(d)), 1.0 / tau, 0.0);
        ad::Var term = ad::sub(ad::logsumexp(neg_terms), pos);
        anchor_sum = ad::add(anchor_sum, term);
        ++used_dims;
      }
      if (used_dims == 0) continue;
      total = ad::add(total, ad::affine(anchor_sum, 1.0 / used_dims, 0.0));
    }
  }
  return ad::affine(total, 1.0 / (double(n) * (n - 1)), 0.0);
}

ad::Var stage1_loss_t(ad::Tape& tape, const BatchVars& batch, double theta,
                      double lambda, double tau, bool strict) {
  if (lambda < 0) throw ValidationError("stage-1 lambda must be >= 0");
  ad::Var rank = rank_loss_t(tape, batch, theta);
  if (lambda == 0.0) return rank;
  ad::Var cons = cons_loss_t(tape, batch, tau, strict);
  return ad::add(rank, ad::affine(cons, lambda, 0.0));
}

ad::Var mse_loss_t(ad::Tape& tape, const BatchVars& batch) {
  if (batch.scores.empty()) throw ValidationError("mse loss on empty batch");
  ad::Var total = tape.constant_scalar(0.0);
  int terms = 0;
  for (std::size_t i = 0; i < batch.scores.size(); ++i) {
    if (batch.scores[i].size() != batch.dim_ids.size())
      throw ValidationError("mse loss: prediction/dimension mismatch");
    for (std::size_t d = 0; d < batch.dim_ids.size(); ++d) {
      const std::string& dim = batch.dim_ids[d];
      if (!batch.mos[i]->has(dim)) continue;
      ad::Var resid =
          ad::affine(batch.scores[i][d], 1.0, -batch.mos[i]->get(dim));
      total = ad::add(total, ad::square(resid));
      ++terms;
    }
  }
  if (terms == 0) throw ValidationError("mse loss: no scored dimensions");
  return ad::affine(total, 1.0 / terms, 0.0);
}

BatchVars batch_constants(ad::Tape& tape, const PairBatch& batch) {
  BatchVars vars;
  vars.dim_ids = batch.dim_ids;
  vars.eligible_pairs = batch.eligible_pairs;
  for (const auto& e : batch.samples) {
    vars.mos.push_back(&e.mos);
    std::vector<ad::Var> srow, frow;
    for (Eigen::Index d = 0; d < e.pred_scores.size(); ++d) {
      Eigen::MatrixXd s(1, 1);
      s(0, 0) = e.pred_scores(d);
      srow.push_back(tape.constant(s));
      frow.push_back(tape.constant(e.fused.row(d)));
    }
    vars.scores.push_back(std::move(srow));
    vars.fused.push_back(std::move(frow));
  }
  return vars;
}

double rank_loss(const PairBatch& batch, double theta) {
  ad::Tape tape(false);
  return rank_loss_t(tape, batch_constants(tape, batch), theta).scalar();
}

double cons_loss(const PairBatch& batch, double tau, bool strict) {
  ad::Tape tape(false);
  return cons_loss_t(tape, batch_constants(tape, batch), tau, strict).scalar();
}

double stage1_loss(const PairBatch& batch, double theta, double lambda, double tau,
                   bool strict) {
  ad::Tape tape(false);
  return stage1_loss_t(tape, batch_constants(tape, batch), theta, lambda, tau, strict)
      .scalar();
}

double mse_loss(const std::vector<Eigen::VectorXd>& predictions,
                const std::vector<MosVector>& targets,
                const std::vector<std::string>& dim_ids) {
  if (predictions.empty() || predictions.size() != targets.size())
    throw ValidationError("mse loss: predictions/targets misaligned");
  PairBatch b;
  b.dim_ids = dim_ids;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (static_cast<std::size_t>(predictions[i].size()) != dim_ids.size())
      throw ValidationError("mse loss: prediction width mismatch");
    PairBatch::Entry e;
    e.mos = targets[i];
    e.pred_scores = predictions[i];
    e.fused = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim_ids.size()), 1);
    b.samples.push_back(std::move(e));
  }
  ad::Tape tape(false);
  return mse_loss_t(tape, batch_constants(tape, b)).scalar();
}

}  // namespace t3dqa
