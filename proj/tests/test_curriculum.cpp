#include "t3dqa/curriculum.hpp"

#include "t3dqa/common.hpp"
#include "t3dqa/synthetic.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace t3dqa;

namespace {

CurriculumState default_state(int horizon = 10) {
  return CurriculumState::init(horizon, 5.0, 1e-2, StrategyFlags{}, RhoMode::mirrored);
}

MosVector mos_of(const std::vector<std::pair<std::string, double>>& kv) {
  MosVector m;
  for (const auto& [k, v] : kv) m.set(k, v);
  return m;
}

}  // namespace

TEST_CASE("curriculum: mean srcc over dimensions") {
  Eigen::MatrixXd mos(4, 2);
  mos << 1, 1, 2, 2, 3, 3, 4, 4;

  Eigen::MatrixXd pred = mos;
  CHECK(mean_srcc(pred, mos) == doctest::Approx(1.0));

  pred = -mos;
  CHECK(mean_srcc(pred, mos) == doctest::Approx(-1.0));

  // one perfectly ranked dimension, one constant (counted as 0) -> 0.5
  pred = mos;
  pred.col(1).setConstant(2.5);
  std::vector<std::string> log;
  CHECK(mean_srcc(pred, mos, &log) == doctest::Approx(0.5));
  CHECK(log.size() == 1);
}

TEST_CASE("curriculum: prompt count grows only on stalls, capped at batch size") {
  CurriculumState s = default_state();
  update_prompt_count(s, 0.50, 8);  // first epoch: no history, no update
  CHECK(s.n_p == 1);
  update_prompt_count(s, 0.505, 8);  // |0.005| < 0.01: stall
  CHECK(s.n_p == 2);
  update_prompt_count(s, 0.60, 8);  // real improvement
  CHECK(s.n_p == 2);
  for (int i = 0; i < 20; ++i) update_prompt_count(s, 0.60, 8);
  CHECK(s.n_p == 8);  // capped at N_b
  CHECK(s.srcc_history.size() == 23);
}

TEST_CASE("curriculum: quota arithmetic") {
  CHECK(prompt_quota(8, 3) == std::vector<int>{3, 3, 2});
  CHECK(prompt_quota(8, 1) == std::vector<int>{8});
  CHECK(prompt_quota(8, 8) == std::vector<int>(8, 1));
  CHECK(prompt_quota(7, 2) == std::vector<int>{4, 3});
  CHECK_THROWS_AS(prompt_quota(4, 5), ValidationError);
  for (int nb = 2; nb <= 9; ++nb)
    for (int np = 1; np <= nb; ++np) {
      auto q = prompt_quota(nb, np);
      int sum = 0, lo = q[0], hi = q[0];
      for (int v : q) {
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(sum == nb);
      CHECK(hi - lo <= 1);
    }
}

TEST_CASE("curriculum: restricted kendall monitor") {
  Eigen::MatrixXd mos(5, 1), pred(5, 1);
  mos << 1, 2, 3, 4, 5;
  Eigen::VectorXd overall = mos.col(0);

  pred << 1, 2, 3, 4, 5;
  auto k = mean_krcc_restricted(pred, mos, overall, 2.0);
  REQUIRE(k.has_value());
  CHECK(*k == doctest::Approx(1.0));  // all eligible pairs concordant

  pred << 5, 4, 3, 2, 1;
  CHECK(*mean_krcc_restricted(pred, mos, overall, 2.0) == doctest::Approx(-1.0));

  // hand-built: eligible pairs under eta=2.0 are those with |gap| > 2:
  // (1,4),(1,5),(2,5) -> gaps 3,4,3
  pred << 1, 2, 3, 2.5, 0.5;  // (1,4): up .. pred 1 -> 2.5 concordant;
  // (1,5): mos up, pred 1 -> 0.5 discordant; (2,5): mos up, pred 2 -> 0.5 discordant
  CHECK(*mean_krcc_restricted(pred, mos, overall, 2.0) ==
        doctest::Approx((1.0 - 2.0) / 3.0));

  // eta too high: no pairs
  CHECK(!mean_krcc_restricted(pred, mos, overall, 10.0).has_value());
}

TEST_CASE("curriculum: score threshold decays on stalls and floors at zero") {
  CurriculumState s = default_state();
  CHECK(s.eta == doctest::Approx(2.5));  // half of the maximum MOS
  update_score_threshold(s, 0.80);       // first observation
  CHECK(s.eta == doctest::Approx(2.5));
  update_score_threshold(s, 0.802);  // stall
  CHECK(s.eta == doctest::Approx(1.5));
  update_score_threshold(s, 0.9);  // improvement
  CHECK(s.eta == doctest::Approx(1.5));
  update_score_threshold(s, 0.901);
  CHECK(s.eta == doctest::Approx(0.5));
  update_score_threshold(s, 0.902);
  CHECK(s.eta == doctest::Approx(0.0));  // max(0.5 - 1, 0)
  update_score_threshold(s, 0.903);
  CHECK(s.eta == doctest::Approx(0.0));

  relax_score_threshold(s);
  CHECK(s.eta == doctest::Approx(0.0));
}

TEST_CASE("curriculum: consistency matches the sign-counting definition") {
  std::vector<std::string> dims = {"A", "B", "C", "D"};

  // full dominance
  MosVector hi = mos_of({{"A", 5}, {"B", 4}, {"C", 4.5}, {"D", 3}});
  MosVector lo = mos_of({{"A", 1}, {"B", 2}, {"C", 2.5}, {"D", 1}});
  CHECK(consistency(hi, lo, dims) == doctest::Approx(1.0));

  // phi = [+1, -1, 0, +1] -> |1| / 3
  MosVector a = mos_of({{"A", 3}, {"B", 2}, {"C", 3}, {"D", 4}});
  MosVector b = mos_of({{"A", 2}, {"B", 3}, {"C", 3}, {"D", 3}});
  CHECK(consistency(a, b, dims) == doctest::Approx(1.0 / 3.0));

  // perfect split
  std::vector<std::string> two = {"A", "B"};
  MosVector c = mos_of({{"A", 3}, {"B", 2}});
  MosVector d = mos_of({{"A", 2}, {"B", 3}});
  CHECK(consistency(c, d, two) == doctest::Approx(0.0));

  // identical vectors count as fully consistent by convention
  CHECK(consistency(c, c, two) == doctest::Approx(1.0));

  // 1000 random MOS pairs against a fresh sign-counting oracle, exact
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> grid(3, 15);
  for (int rep = 0; rep < 1000; ++rep) {
    MosVector x, y;
    int net = 0, total = 0;
    for (const auto& dim : dims) {
      const double xv = grid(rng) / 3.0, yv = grid(rng) / 3.0;
      x.set(dim, xv);
      y.set(dim, yv);
      if (xv > yv) {
        ++net;
        ++total;
      } else if (xv < yv) {
        --net;
        ++total;
      }
    }
    const double expect = total == 0 ? 1.0 : std::abs(double(net)) / total;
    CHECK(consistency(x, y, dims) == expect);
  }
}

TEST_CASE("curriculum: consistency threshold schedules") {
  CHECK(consistency_threshold(0, 10, RhoMode::verbatim) == doctest::Approx(0.5));
  CHECK(consistency_threshold(10, 10, RhoMode::verbatim) == doctest::Approx(1.0));
  CHECK(consistency_threshold(0, 10, RhoMode::mirrored) == doctest::Approx(1.0));
  CHECK(consistency_threshold(10, 10, RhoMode::mirrored) == doctest::Approx(0.5));
  CHECK(consistency_threshold(5, 10, RhoMode::verbatim) == doctest::Approx(0.75));
  CHECK(consistency_threshold(5, 10, RhoMode::mirrored) == doctest::Approx(0.75));
  // T = 0 pins the terminal value of each mode
  CHECK(consistency_threshold(0, 0, RhoMode::verbatim) == doctest::Approx(1.0));
  CHECK(consistency_threshold(0, 0, RhoMode::mirrored) == doctest::Approx(0.5));
  CHECK_THROWS_AS(consistency_threshold(11, 10, RhoMode::verbatim), ValidationError);
}

TEST_CASE("curriculum: batch sampling honors quotas, filters, and determinism") {
  th::TempDir tmp("curriculum_batch");
  SyntheticSpec spec;
  spec.n_prompts = 12;
  spec.n_generators = 5;
  spec.n_views = 1;
  spec.seed = 31;
  spec.image_size = 16;
  BenchmarkManifest m = generate_synthetic_benchmark(spec, tmp.path()).manifest;
  const auto pool = m.prompt_ids();
  std::vector<std::string> dim_ids;
  for (const auto& d : m.dimensions) dim_ids.push_back(d.id);

  SUBCASE("n_p = 1 keeps the whole batch in one prompt group") {
    CurriculumState s = default_state();
    s.n_p = 1;
    s.eta = 0.0;
    s.rho = 0.5;
    BatchSkeleton batch = sample_batch(m, pool, s, 5, 42);
    REQUIRE(batch.sample_indices.size() == 5);
    std::set<std::string> prompts;
    for (int idx : batch.sample_indices) prompts.insert(m.samples[idx].prompt_id);
    CHECK(prompts.size() == 1);
    for (const auto& meta : batch.pair_meta) CHECK(meta.same_prompt);
  }

  SUBCASE("filters are sound and the eligible set matches enumeration") {
    CurriculumState s = default_state();
    s.n_p = 3;
    s.eta = 0.8;
    s.rho = 0.6;
    BatchSkeleton batch = sample_batch(m, pool, s, 5, 7);
    // re-verify post hoc: every emitted pair satisfies both thresholds
    int expected = 0;
    const int n = static_cast<int>(batch.sample_indices.size());
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        const Sample& sa = m.samples[batch.sample_indices[a]];
        const Sample& sb = m.samples[batch.sample_indices[b]];
        const double gap = std::abs(overall_mos(sa.mos, dim_ids) - overall_mos(sb.mos, dim_ids));
        const double cons = consistency(sa.mos, sb.mos, dim_ids);
        if (gap > s.eta && cons >= s.rho) ++expected;
      }
    if (!batch.used_fallback_pair)
      CHECK(static_cast<int>(batch.eligible_pairs.size()) == expected);
    for (std::size_t p = 0; p < batch.eligible_pairs.size(); ++p) {
      if (batch.used_fallback_pair) break;
      CHECK(batch.pair_meta[p].score_gap > s.eta);
      CHECK(batch.pair_meta[p].consistency >= s.rho);
    }
  }

  SUBCASE("impossible thresholds fall back to the single best pair") {
    CurriculumState s = default_state();
    s.n_p = 2;
    s.eta = 100.0;  // nothing passes
    s.rho = 1.0;
    BatchSkeleton batch = sample_batch(m, pool, s, 4, 3);
    CHECK(batch.used_fallback_pair);
    REQUIRE(batch.eligible_pairs.size() == 1);
    // the fallback is the lexicographic (gap, consistency) maximum
    double best_gap = -1;
    const int n = static_cast<int>(batch.sample_indices.size());
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        const Sample& sa = m.samples[batch.sample_indices[a]];
        const Sample& sb = m.samples[batch.sample_indices[b]];
        best_gap = std::max(best_gap, std::abs(overall_mos(sa.mos, dim_ids) -
                                               overall_mos(sb.mos, dim_ids)));
      }
    CHECK(batch.pair_meta[0].score_gap == doctest::Approx(best_gap));
  }

  SUBCASE("deterministic under a fixed seed") {
    CurriculumState s = default_state();
    s.n_p = 3;
    s.eta = 0.0;
    s.rho = 0.5;
    BatchSkeleton b1 = sample_batch(m, pool, s, 5, 99);
    BatchSkeleton b2 = sample_batch(m, pool, s, 5, 99);
    CHECK(b1.sample_indices == b2.sample_indices);
    CHECK(b1.eligible_pairs == b2.eligible_pairs);
    BatchSkeleton b3 = sample_batch(m, pool, s, 5, 100);
    CHECK(b1.sample_indices != b3.sample_indices);
  }

  SUBCASE("quota shortfall is reported") {
    CurriculumState s = default_state();
    s.n_p = 1;
    // each prompt group has 5 samples; a batch of 6 from one prompt cannot exist
    CHECK_THROWS_AS(sample_batch(m, pool, s, 6, 1), ValidationError);
    // fewer prompts than n_p
    s.n_p = 3;
    std::vector<std::string> small_pool = {pool[0], pool[1]};
    CHECK_THROWS_AS(sample_batch(m, small_pool, s, 6, 1), ValidationError);
  }

  SUBCASE("mirrored schedule only grows the eligible pool on a fixed batch") {
    CurriculumState s = default_state(8);
    s.n_p = 4;
    s.eta = 0.0;
    BatchSkeleton fixed = sample_batch(m, pool, s, 5, 5);
    std::size_t prev = 0;
    for (int t = 0; t <= 8; ++t) {
      const double rho = consistency_threshold(t, 8, RhoMode::mirrored);
      std::size_t count = 0;
      const int n = static_cast<int>(fixed.sample_indices.size());
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
          const Sample& sa = m.samples[fixed.sample_indices[a]];
          const Sample& sb = m.samples[fixed.sample_indices[b]];
          if (consistency(sa.mos, sb.mos, dim_ids) >= rho) ++count;
        }
      CHECK(count >= prev);
      prev = count;
    }
  }
}

TEST_CASE("curriculum: disabled strategies leave the schedule untouched") {
  StrategyFlags off{false, false, false};
  CurriculumState s = CurriculumState::init(10, 5.0, 1e-2, off, RhoMode::mirrored);
  update_prompt_count(s, 0.5, 8);
  update_prompt_count(s, 0.5, 8);  // would stall
  CHECK(s.n_p == 1);
  update_score_threshold(s, 0.5);
  update_score_threshold(s, 0.5);
  CHECK(s.eta == doctest::Approx(2.5));
  relax_score_threshold(s);
  CHECK(s.eta == doctest::Approx(2.5));
}
