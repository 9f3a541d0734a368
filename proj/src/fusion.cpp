#include "t3dqa/fusion.hpp"

#include "t3dqa/common.hpp"

#include <cmath>
#include <stdexcept>

namespace t3dqa {

namespace {

Eigen::MatrixXd xavier(std::uint64_t seed, int rows, int cols) {
  auto rng = make_rng(seed);
  const double sd = std::sqrt(2.0 / (rows + cols));
  std::normal_distribution<double> g(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

}  // namespace

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "concat") return FusionMode::concat;
  if (s == "add") return FusionMode::add;
  if (s == "multiply") return FusionMode::multiply;
  throw ValidationError("unknown fusion mode '" + s + "'");
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::concat: return "concat";
    case FusionMode::add: return "add";
    case FusionMode::multiply: return "multiply";
  }
  return "?";
}

ProjectorParams::ProjectorParams(int width, int hidden, std::uint64_t seed)
    : w1("projector.w1", xavier(mix_seed(seed, 1), hidden, width)),
      b1("projector.b1", Eigen::MatrixXd::Zero(1, hidden)),
      w2("projector.w2", Eigen::MatrixXd::Zero(width, hidden)),
      b2("projector.b2", Eigen::MatrixXd::Zero(1, width)) {}

FusionParams::FusionParams(int in_w, int hidden, int n_f, std::uint64_t seed)
    : w1("fusion.w1", xavier(mix_seed(seed, 2), hidden, in_w)),
      b1("fusion.b1", Eigen::MatrixXd::Zero(1, hidden)),
      w2("fusion.w2", xavier(mix_seed(seed, 3), n_f, hidden)),
      b2("fusion.b2", Eigen::MatrixXd::Zero(1, n_f)),
      in_width(in_w) {}

ad::Var apply_projector(ad::Tape& tape, ProjectorParams& p, ad::Var tokens) {
  ad::Var h = ad::tanh(ad::add_rowbc(ad::matmul(tokens, ad::transpose(tape.param(p.w1))),
                                     tape.param(p.b1)));
  ad::Var delta = ad::add_rowbc(ad::matmul(h, ad::transpose(tape.param(p.w2))),
                                tape.param(p.b2));
  return ad::add(tokens, delta);
}

ad::Var project_dimension_feature(ad::Tape& tape, const EncoderBackend& backend,
                                  ProjectorParams& p, const std::string& text) {
  Eigen::MatrixXd emb = backend.embed_text(text, nullptr);
  ad::Var projected = apply_projector(tape, p, tape.constant(emb));
  ad::Var encoded = backend.encode_tokens(tape, projected);
  return ad::mean_rows(encoded);
}

AttentionVars attention_weights_t(ad::Tape& tape, ad::Var f_visual, ad::Var f_prompt,
                                  ad::Var f_dim_row, bool scale) {
  if (f_visual.cols() != f_prompt.cols() || f_prompt.cols() != f_dim_row.cols())
    throw std::logic_error("attention: feature widths differ");
  const double k = scale ? 1.0 / std::sqrt(double(f_visual.cols())) : 1.0;
  // u = F_P . f_d^T : relevance of each prompt token to this dimension
  ad::Var u = ad::matmul(f_prompt, ad::transpose(f_dim_row));
  if (scale) u = ad::affine(u, k, 0.0);
  ad::Var cross = ad::matmul(f_visual, ad::transpose(f_prompt));  // (Nv x Np)
  if (scale) cross = ad::affine(cross, k, 0.0);
  ad::Var visual_logits = ad::matmul(cross, u);
  AttentionVars out;
  out.w_visual = ad::softmax_col(visual_logits);
  out.w_prompt = ad::softmax_col(u);
  return out;
}

ad::Var fuse_t(ad::Tape& tape, ad::Var f_visual, ad::Var f_prompt,
               const AttentionVars& attn, FusionParams& params, FusionMode mode) {
  ad::Var wi = ad::matmul(ad::transpose(attn.w_visual), f_visual);  // (1 x N_f)
  ad::Var wp = ad::matmul(ad::transpose(attn.w_prompt), f_prompt);  // (1 x N_f)
  ad::Var agg;
  switch (mode) {
    case FusionMode::concat: agg = ad::hstack(wi, wp); break;
    case FusionMode::add:
      if (wi.cols() != wp.cols()) throw std::logic_error("fuse add: width mismatch");
      agg = ad::add(wi, wp);
      break;
    case FusionMode::multiply:
      if (wi.cols() != wp.cols()) throw std::logic_error("fuse multiply: width mismatch");
      agg = ad::mul(wi, wp);
      break;
  }
  if (agg.cols() != params.in_width)
    throw std::logic_error("fuse: aggregated width " + std::to_string(agg.cols()) +
                           " does not match fusion input width " +
                           std::to_string(params.in_width));
  ad::Var h = ad::tanh(ad::add_rowbc(ad::matmul(agg, ad::transpose(tape.param(params.w1))),
                                     tape.param(params.b1)));
  return ad::add_rowbc(ad::matmul(h, ad::transpose(tape.param(params.w2))),
                       tape.param(params.b2));
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> attention_weights(
    const Eigen::MatrixXd& f_visual, const Eigen::MatrixXd& f_prompt,
    const Eigen::VectorXd& f_dim, bool scale) {
  ad::Tape tape(false);
  AttentionVars attn = attention_weights_t(
      tape, tape.constant(f_visual), tape.constant(f_prompt),
      tape.constant(f_dim.transpose()), scale);
  return {attn.w_visual.value().col(0), attn.w_prompt.value().col(0)};
}

Eigen::VectorXd fuse(const Eigen::MatrixXd& f_visual, const Eigen::MatrixXd& f_prompt,
                     const Eigen::VectorXd& w_visual, const Eigen::VectorXd& w_prompt,
                     FusionParams& params, FusionMode mode) {
  ad::Tape tape(false);
  AttentionVars attn{tape.constant(w_visual), tape.constant(w_prompt)};
  ad::Var out = fuse_t(tape, tape.constant(f_visual), tape.constant(f_prompt), attn,
                       params, mode);
  return out.value().row(0).transpose();
}

DimensionFeature project_dimensions(const EncoderBackend& backend, ProjectorParams& p,
                                    const std::vector<std::string>& dimension_texts) {
  if (dimension_texts.empty()) throw ValidationError("project_dimensions: no dimension texts");
  ad::Tape tape(false);
  DimensionFeature out;
  out.rows.resize(static_cast<Eigen::Index>(dimension_texts.size()), backend.info().n_f);
  for (std::size_t d = 0; d < dimension_texts.size(); ++d) {
    ad::Var row = project_dimension_feature(tape, backend, p, dimension_texts[d]);
    out.rows.row(static_cast<Eigen::Index>(d)) = row.value().row(0);
  }
  if (!out.rows.allFinite())
    throw ValidationError("non-finite dimension features");
  return out;
}

}  // namespace t3dqa
