#include "t3dqa/level_head.hpp"

#include "t3dqa/common.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace t3dqa {

LevelInsertion insertion_from_string(const std::string& s) {
  if (s == "begin") return LevelInsertion::begin;
  if (s == "middle") return LevelInsertion::middle;
  if (s == "end") return LevelInsertion::end;
  throw ValidationError("unknown level insertion position '" + s + "'");
}

std::string to_string(LevelInsertion ins) {
  switch (ins) {
    case LevelInsertion::begin: return "begin";
    case LevelInsertion::middle: return "middle";
    case LevelInsertion::end: return "end";
  }
  return "?";
}

LevelBank::LevelBank(int embed_width, std::uint64_t seed, int context_len_,
                     LevelInsertion ins, bool inv_temp_on, double inv_temp_init)
    : context_len(context_len_), insertion(ins), inv_temp_enabled(inv_temp_on) {
  q.resize(5);
  q << 5, 4, 3, 2, 1;
  auto rng = make_rng(mix_seed(seed, 0xCAFE));
  std::normal_distribution<double> g(0.0, 0.02);
  Eigen::MatrixXd ctx(context_len, embed_width);
  for (int i = 0; i < context_len; ++i)
    for (int j = 0; j < embed_width; ++j) ctx(i, j) = g(rng);
  context = ad::Parameter("level.context", std::move(ctx), true);
  Eigen::MatrixXd it(1, 1);
  it(0, 0) = inv_temp_init;
  inv_temp = ad::Parameter("level.inv_temp", std::move(it), inv_temp_on);
  validate();
}

void LevelBank::validate() const {
  if (adjectives.empty() || static_cast<int>(adjectives.size()) != q.size())
    throw ValidationError("level bank: adjectives and q must align");
  for (int i = 1; i < q.size(); ++i)
    if (!(q(i) < q(i - 1)) && !(q(i) > q(i - 1)))
      throw ValidationError("level bank: q must be strictly monotone");
  for (int i = 2; i < q.size(); ++i)
    if ((q(1) > q(0)) != (q(i) > q(i - 1)))
      throw ValidationError("level bank: q must be strictly monotone");
  if (context_len < 1) throw ValidationError("level bank: context length must be >= 1");
  if (inv_temp_enabled && inv_temp.value(0, 0) <= 0)
    throw ValidationError("level bank: inv_temp must be positive");
}

void LevelBank::remap_range(double lo, double hi) {
  const double qmin = q.minCoeff(), qmax = q.maxCoeff();
  if (!(qmax > qmin)) throw ValidationError("level bank: degenerate q span");
  q = ((q.array() - qmin) / (qmax - qmin) * (hi - lo) + lo).matrix();
}

std::vector<ad::Parameter*> LevelBank::parameters() {
  std::vector<ad::Parameter*> out = {&context};
  if (inv_temp_enabled) out.push_back(&inv_temp);
  return out;
}

namespace {

struct SplitPlan {
  int before = 0;
  int after = 0;
};

SplitPlan context_split(const LevelBank& bank) {
  switch (bank.insertion) {
    case LevelInsertion::begin: return {bank.context_len, 0};
    case LevelInsertion::middle:
      return {(bank.context_len + 1) / 2, bank.context_len / 2};
    case LevelInsertion::end: return {0, bank.context_len};
  }
  return {};
}

Eigen::MatrixXd class_token_embeddings(const EncoderBackend& backend,
                                       const std::string& adjective,
                                       const std::string& dimension_name) {
  // embed_text adds bos/eos; strip them, the full prompt adds its own
  Eigen::MatrixXd with_specials =
      backend.embed_text(adjective + " " + dimension_name, nullptr);
  return with_specials.middleRows(1, with_specials.rows() - 2);
}

}  // namespace

std::vector<LevelPromptLayout> build_level_prompts(const EncoderBackend& backend,
                                                   const LevelBank& bank,
                                                   const std::string& dimension_name) {
  bank.validate();
  const SplitPlan split = context_split(bank);
  std::vector<LevelPromptLayout> out;
  for (const auto& adj : bank.adjectives) {
    Eigen::MatrixXd cls = class_token_embeddings(backend, adj, dimension_name);
    const int total = 2 + bank.context_len + static_cast<int>(cls.rows());
    if (total > backend.info().token_limit)
      throw ValidationError("level prompt for '" + adj + " " + dimension_name +
                            "' exceeds the backend token limit");
    LevelPromptLayout layout;
    layout.n_prefix_context = split.before;
    layout.n_class_tokens = static_cast<int>(cls.rows());
    layout.n_suffix_context = split.after;
    Eigen::MatrixXd seq(total, backend.info().embed_width);
    int r = 0;
    seq.row(r++) = backend.bos_embedding();
    seq.middleRows(r, split.before) = bank.context.value.topRows(split.before);
    r += split.before;
    seq.middleRows(r, cls.rows()) = cls;
    r += static_cast<int>(cls.rows());
    seq.middleRows(r, split.after) = bank.context.value.bottomRows(split.after);
    r += split.after;
    seq.row(r) = backend.eos_embedding();
    layout.embeddings = std::move(seq);
    out.push_back(std::move(layout));
  }
  return out;
}

ad::Var level_features_t(ad::Tape& tape, const EncoderBackend& backend,
                         LevelBank& bank, const std::string& dimension_name) {
  const SplitPlan split = context_split(bank);
  ad::Var ctx = tape.param(bank.context);
  ad::Var rows;
  bool first = true;
  for (const auto& adj : bank.adjectives) {
    Eigen::MatrixXd cls = class_token_embeddings(backend, adj, dimension_name);
    ad::Var seq = tape.constant(backend.bos_embedding());
    if (split.before > 0) seq = ad::vstack(seq, ad::slice_rows(ctx, 0, split.before));
    seq = ad::vstack(seq, tape.constant(cls));
    if (split.after > 0)
      seq = ad::vstack(seq, ad::slice_rows(ctx, split.before, split.after));
    seq = ad::vstack(seq, tape.constant(backend.eos_embedding()));
    if (seq.rows() > backend.info().token_limit)
      throw ValidationError("level prompt for '" + adj + " " + dimension_name +
                            "' exceeds the backend token limit");
    ad::Var feat = ad::mean_rows(backend.encode_tokens(tape, seq));
    rows = first ? feat : ad::vstack(rows, feat);
    first = false;
  }
  return rows;
}

const std::vector<Eigen::MatrixXd>& LevelFeatureCache::get(
    const EncoderBackend& backend, LevelBank& bank,
    const std::vector<std::string>& dimension_names) {
  std::uint64_t key = bank.context.digest();
  key = mix_seed(key, static_cast<std::uint64_t>(bank.insertion));
  for (const auto& n : dimension_names) key = mix_seed(key, fnv1a64(n));
  if (key == key_ && names_ == dimension_names) return features_;
  features_.clear();
  ad::Tape tape(false);
  for (const auto& name : dimension_names)
    features_.push_back(level_features_t(tape, backend, bank, name).value());
  key_ = key;
  names_ = dimension_names;
  return features_;
}

std::pair<double, Eigen::VectorXd> score_from_levels(const Eigen::VectorXd& fused,
                                                     const Eigen::MatrixXd& levels,
                                                     const Eigen::VectorXd& q,
                                                     double inv_temp) {
  if (inv_temp <= 0) throw ValidationError("inv_temp must be positive");
  if (levels.rows() != q.size()) throw ValidationError("levels/q size mismatch");
  const double fn = fused.norm();
  if (fn == 0.0) throw ValidationError("degenerate feature");
  Eigen::VectorXd logits(levels.rows());
  for (Eigen::Index l = 0; l < levels.rows(); ++l) {
    const double ln = levels.row(l).norm();
    if (ln == 0.0) throw ValidationError("degenerate feature");
    logits(l) = inv_temp * levels.row(l).dot(fused) / (ln * fn);
  }
  const double m = logits.maxCoeff();
  Eigen::VectorXd probs = (logits.array() - m).exp();
  probs /= probs.sum();
  // compensated accumulation keeps the uniform case at exactly mean(q)
  long double acc = 0.0L;
  for (Eigen::Index l = 0; l < q.size(); ++l)
    acc += static_cast<long double>(probs(l)) * static_cast<long double>(q(l));
  double score = static_cast<double>(acc);
  score = std::clamp(score, q.minCoeff(), q.maxCoeff());
  return {score, probs};
}

ScoreVars score_t(ad::Tape& tape, ad::Var fused_row, ad::Var level_rows,
                  const Eigen::VectorXd& q, ad::Var inv_temp) {
  ad::Var sims = ad::matmul(level_rows, ad::transpose(fused_row));  // (N_l x 1)
  ad::Var level_norms = ad::row_l2_norms(level_rows);
  ad::Var fused_norm = ad::l2_norm(fused_row);
  ad::Var cosines = ad::cdiv(ad::div_elem(sims, level_norms), fused_norm);
  ad::Var probs = ad::softmax_col(ad::cmul(cosines, inv_temp));
  ad::Var score = ad::matmul(tape.constant(q.transpose()), probs);
  return {score, probs};
}

}  // namespace t3dqa
