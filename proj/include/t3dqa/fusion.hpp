#pragma once

// Dimension-conditioned cross-modal fusion: dimension-text projection,
// joint attention weighting of visual/prompt tokens, and the fusion
// feed-forward. Pure functions of (parameters, inputs); parallel
// evaluation across samples is safe, parameter updates belong to the
// trainer.

#include "t3dqa/autodiff.hpp"
#include "t3dqa/encoders.hpp"

#include <string>
#include <vector>

namespace t3dqa {

enum class FusionMode { concat, add, multiply };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

// Residual two-layer feed-forward over token embeddings. With w2 == 0 (the
// initial state) it is exactly the identity, so a freshly constructed
// projector reproduces plain text encoding.
struct ProjectorParams {
  ad::Parameter w1, b1, w2, b2;

  ProjectorParams() = default;
  ProjectorParams(int width, int hidden, std::uint64_t seed);
  std::vector<ad::Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

// Plain two-layer feed-forward mapping the aggregated weighted features
// (1 x in_width) to a fused row (1 x n_f).
struct FusionParams {
  ad::Parameter w1, b1, w2, b2;
  int in_width = 0;

  FusionParams() = default;
  FusionParams(int in_width, int hidden, int n_f, std::uint64_t seed);
  std::vector<ad::Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

struct DimensionFeature {
  Eigen::MatrixXd rows;  // N_d x N_f, row d <-> declared dimension d
};

struct FusedFeature {
  Eigen::MatrixXd rows;  // N_d x N_f
  std::string sample_id;
};

// ---- differentiable building blocks ------------------------------------

ad::Var apply_projector(ad::Tape& tape, ProjectorParams& p, ad::Var tokens);

// Projects one dimension text to a single feature row (1 x N_f):
// embed -> projector -> text encoder -> mean pool.
ad::Var project_dimension_feature(ad::Tape& tape, const EncoderBackend& backend,
                                  ProjectorParams& p, const std::string& text);

struct AttentionVars {
  ad::Var w_visual;  // (N_visual_tokens x 1), sums to 1
  ad::Var w_prompt;  // (N_prompt_tokens x 1), sums to 1
};

// w_prompt = softmax over prompt tokens of F_P . f_d
// w_visual = softmax over visual tokens of (F_I . F_P^T)(F_P . f_d)
// `scale` optionally divides the pre-softmax logits by sqrt(N_f).
AttentionVars attention_weights_t(ad::Tape& tape, ad::Var f_visual, ad::Var f_prompt,
                                  ad::Var f_dim_row, bool scale);

ad::Var fuse_t(ad::Tape& tape, ad::Var f_visual, ad::Var f_prompt,
               const AttentionVars& attn, FusionParams& params, FusionMode mode);

// ---- value-level API ----------------------------------------------------

std::pair<Eigen::VectorXd, Eigen::VectorXd> attention_weights(
    const Eigen::MatrixXd& f_visual, const Eigen::MatrixXd& f_prompt,
    const Eigen::VectorXd& f_dim, bool scale = false);

Eigen::VectorXd fuse(const Eigen::MatrixXd& f_visual, const Eigen::MatrixXd& f_prompt,
                     const Eigen::VectorXd& w_visual, const Eigen::VectorXd& w_prompt,
                     FusionParams& params, FusionMode mode);

DimensionFeature project_dimensions(const EncoderBackend& backend, ProjectorParams& p,
                                    const std::vector<std::string>& dimension_texts);

}  // namespace t3dqa
