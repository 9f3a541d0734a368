#include "t3dqa/curriculum.hpp"

#include "t3dqa/common.hpp"
#include "t3dqa/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace t3dqa {

RhoMode rho_mode_from_string(const std::string& s) {
  if (s == "verbatim") return RhoMode::verbatim;
  if (s == "mirrored") return RhoMode::mirrored;
  throw ValidationError("unknown rho mode '" + s + "'");
}

std::string to_string(RhoMode m) {
  return m == RhoMode::verbatim ? "verbatim" : "mirrored";
}

CurriculumState CurriculumState::init(int horizon, double score_max, double epsilon,
                                      const StrategyFlags& flags, RhoMode mode) {
  CurriculumState s;
  s.epoch = 0;
  s.horizon = std::max(horizon, 0);
  s.n_p = 1;
  s.eta = score_max / 2.0;  // half of the maximum MOS value
  s.rho = consistency_threshold(0, s.horizon, mode);
  s.epsilon = epsilon;
  s.enabled = flags;
  return s;
}

double overall_mos(const MosVector& mos, const std::vector<std::string>& dim_ids) {
  if (mos.has("OQ")) return mos.get("OQ");
  double acc = 0;
  int n = 0;
  for (const auto& d : dim_ids)
    if (mos.has(d)) {
      acc += mos.get(d);
      ++n;
    }
  if (n == 0) throw ValidationError("sample has no scored dimensions");
  return acc / n;
}

double consistency(const MosVector& a, const MosVector& b,
                   const std::vector<std::string>& dim_ids) {
  int net = 0, total = 0;
  for (const auto& d : dim_ids) {
    if (!a.has(d) || !b.has(d)) continue;
    const double diff = a.get(d) - b.get(d);
    if (diff > 0) {
      ++net;
      ++total;
    } else if (diff < 0) {
      --net;
      ++total;
    }
  }
  if (total == 0) return 1.0;  // identical vectors: no ranking signal, easy
  return std::abs(double(net)) / double(total);
}

double consistency_threshold(int t, int T, RhoMode mode) {
  if (t < 0 || (T > 0 && t > T)) throw ValidationError("consistency_threshold: t outside [0, T]");
  // T == 0 collapses the schedule to its terminal value
  const double frac = T == 0 ? 1.0 : double(t) / double(T);
  return mode == RhoMode::verbatim ? 0.5 + 0.5 * frac : 1.0 - 0.5 * frac;
}

double mean_srcc(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& mos,
                 std::vector<std::string>* log) {
  if (pred.rows() != mos.rows() || pred.cols() != mos.cols())
    throw ValidationError("mean_srcc: shape mismatch");
  if (pred.rows() < 3) throw ValidationError("mean_srcc: need >= 3 samples");
  double acc = 0;
  for (Eigen::Index d = 0; d < pred.cols(); ++d) {
    std::vector<double> xs, ys;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      if (std::isnan(pred(i, d)) || std::isnan(mos(i, d))) continue;
      xs.push_back(pred(i, d));
      ys.push_back(mos(i, d));
    }
    if (xs.size() < 3) {
      if (log) log->push_back("dimension " + std::to_string(d) + ": too few samples, counted 0");
      continue;
    }
    Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(xs.data(), xs.size());
    Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size());
    auto r = srcc(x, y);
    if (!r) {
      if (log) log->push_back("dimension " + std::to_string(d) + ": constant input, counted 0");
      continue;
    }
    acc += *r;
  }
  return acc / double(pred.cols());
}

std::optional<double> mean_krcc_restricted(const Eigen::MatrixXd& pred,
                                           const Eigen::MatrixXd& mos,
                                           const Eigen::VectorXd& overall,
                                           double eta) {
  if (pred.rows() != mos.rows() || pred.cols() != mos.cols() ||
      overall.size() != pred.rows())
    throw ValidationError("mean_krcc_restricted: shape mismatch");
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < pred.rows(); ++i)
    for (int j = i + 1; j < pred.rows(); ++j)
      if (std::abs(overall(i) - overall(j)) > eta) pairs.emplace_back(i, j);
  if (pairs.empty()) return std::nullopt;

  double acc = 0;
  int dims_used = 0;
  for (Eigen::Index d = 0; d < pred.cols(); ++d) {
    std::vector<std::pair<int, int>> usable;
    for (const auto& [i, j] : pairs) {
      if (std::isnan(pred(i, d)) || std::isnan(pred(j, d)) || std::isnan(mos(i, d)) ||
          std::isnan(mos(j, d)))
        continue;
      usable.emplace_back(i, j);
    }
    if (usable.empty()) continue;
    acc += krcc_on_pairs(pred.col(d), mos.col(d), usable);
    ++dims_used;
  }
  if (dims_used == 0) return std::nullopt;
  return acc / double(dims_used);
}

void update_prompt_count(CurriculumState& state, double s_t, int batch_size) {
  if (!state.enabled.prompt_count) {
    state.srcc_history.push_back(s_t);
    return;
  }
  if (!state.srcc_history.empty() &&
      std::abs(s_t - state.srcc_history.back()) < state.epsilon) {
    state.n_p = std::min(state.n_p + 1, batch_size);
  }
  state.srcc_history.push_back(s_t);
}

std::vector<int> prompt_quota(int batch_size, int n_p) {
  if (n_p < 1 || n_p > batch_size) throw ValidationError("prompt_quota: need 1 <= n_p <= N_b");
  const int base = batch_size / n_p;
  const int extra = batch_size % n_p;
  std::vector<int> quotas(n_p, base);
  for (int i = 0; i < extra; ++i) quotas[i] = base + 1;
  return quotas;
}

void update_score_threshold(CurriculumState& state, double k_t) {
  if (!state.enabled.score_difference) {
    state.krcc_history.push_back(k_t);
    return;
  }
  if (!state.krcc_history.empty() &&
      std::abs(k_t - state.krcc_history.back()) < state.epsilon) {
    state.eta = std::max(state.eta - 1.0, 0.0);
  }
  state.krcc_history.push_back(k_t);
}

void relax_score_threshold(CurriculumState& state) {
  if (state.enabled.score_difference) state.eta = std::max(state.eta - 1.0, 0.0);
}

BatchSkeleton sample_batch(const BenchmarkManifest& manifest,
                           const std::vector<std::string>& prompt_pool,
                           const CurriculumState& state, int batch_size,
                           std::uint64_t seed) {
  if (batch_size < 2) throw ValidationError("sample_batch: batch size must be >= 2");
  const int n_p = state.enabled.prompt_count ? std::min(state.n_p, batch_size) : 1;
  if (static_cast<int>(prompt_pool.size()) < n_p)
    throw ValidationError("sample_batch: pool has " + std::to_string(prompt_pool.size()) +
                          " prompts, need " + std::to_string(n_p));

  auto groups = manifest.prompt_groups();
  std::vector<int> quotas = prompt_quota(batch_size, n_p);

  std::vector<std::string> pool = prompt_pool;
  std::sort(pool.begin(), pool.end());
  auto rng = make_rng(mix_seed(seed, 0xBA7C4));
  std::shuffle(pool.begin(), pool.end(), rng);

  // match quotas (largest first) against the shuffled pool
  BatchSkeleton out;
  std::vector<std::string> chosen;
  std::vector<bool> taken(pool.size(), false);
  for (int quota : quotas) {
    bool found = false;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      auto it = groups.find(pool[i]);
      if (it == groups.end()) continue;
      if (static_cast<int>(it->second.size()) < quota) continue;
      taken[i] = true;
      chosen.push_back(pool[i]);
      std::vector<int> members = it->second;
      std::shuffle(members.begin(), members.end(), rng);
      for (int k = 0; k < quota; ++k) out.sample_indices.push_back(members[k]);
      found = true;
      break;
    }
    if (!found)
      throw ValidationError("sample_batch: no prompt group with >= " +
                            std::to_string(quota) + " samples left for quota");
  }

  std::vector<std::string> dim_ids;
  for (const auto& d : manifest.dimensions) dim_ids.push_back(d.id);

  const int n = static_cast<int>(out.sample_indices.size());
  std::vector<std::tuple<double, double, int, int, bool>> all_pairs;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const Sample& sa = manifest.samples[out.sample_indices[a]];
      const Sample& sb = manifest.samples[out.sample_indices[b]];
      const double gap = std::abs(overall_mos(sa.mos, dim_ids) - overall_mos(sb.mos, dim_ids));
      const double cons = consistency(sa.mos, sb.mos, dim_ids);
      all_pairs.emplace_back(gap, cons, a, b, sa.prompt_id == sb.prompt_id);
    }

  for (const auto& [gap, cons, a, b, same] : all_pairs) {
    if (state.enabled.score_difference && !(gap > state.eta)) continue;
    if (state.enabled.dimension_consistency && !(cons >= state.rho)) continue;
    out.eligible_pairs.emplace_back(a, b);
    out.pair_meta.push_back({gap, cons, same});
  }

  if (out.eligible_pairs.empty() && !all_pairs.empty()) {
    auto best = std::max_element(
        all_pairs.begin(), all_pairs.end(), [](const auto& x, const auto& y) {
          if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) < std::get<0>(y);
          if (std::get<1>(x) != std::get<1>(y)) return std::get<1>(x) < std::get<1>(y);
          // prefer the lexicographically smallest index pair, deterministically
          return std::pair(std::get<2>(x), std::get<3>(x)) >
                 std::pair(std::get<2>(y), std::get<3>(y));
        });
    out.eligible_pairs.emplace_back(std::get<2>(*best), std::get<3>(*best));
    out.pair_meta.push_back({std::get<0>(*best), std::get<1>(*best), std::get<4>(*best)});
    out.used_fallback_pair = true;
  }
  return out;
}

}  // namespace t3dqa
