#pragma once

// Learnable quality-level prompts and the cosine score head. Context
// tokens are one shared learnable template across dimensions and levels;
// the text encoder stays frozen, so gradients reach the context tokens
// only. Scoring is pure; the level-feature cache is owned by whoever
// trains the context tokens.

#include "t3dqa/autodiff.hpp"
#include "t3dqa/encoders.hpp"

#include <map>
#include <string>
#include <vector>

namespace t3dqa {

enum class LevelInsertion { begin, middle, end };

LevelInsertion insertion_from_string(const std::string& s);
std::string to_string(LevelInsertion ins);

struct LevelBank {
  std::vector<std::string> adjectives = {"excellent", "good", "fair", "poor", "bad"};
  Eigen::VectorXd q;  // one value per adjective, strictly monotone
  int context_len = 12;
  LevelInsertion insertion = LevelInsertion::middle;
  ad::Parameter context;   // (context_len x embed_width)
  ad::Parameter inv_temp;  // 1x1 scale on cosine logits
  bool inv_temp_enabled = true;

  LevelBank() = default;
  LevelBank(int embed_width, std::uint64_t seed, int context_len = 12,
            LevelInsertion ins = LevelInsertion::middle,
            bool inv_temp_enabled = true, double inv_temp_init = 10.0);

  int n_levels() const { return static_cast<int>(adjectives.size()); }
  void validate() const;
  // Rescales q linearly from its current span onto [lo, hi].
  void remap_range(double lo, double hi);
  std::vector<ad::Parameter*> parameters();
  double effective_inv_temp() const {
    return inv_temp_enabled ? inv_temp.value(0, 0) : 1.0;
  }
};

// One level prompt = context tokens around the embedded
// "<adjective> <dimension name>" class tokens, bos/eos outside.
struct LevelPromptLayout {
  Eigen::MatrixXd embeddings;  // full sequence incl. specials
  int n_prefix_context = 0;
  int n_class_tokens = 0;
  int n_suffix_context = 0;
};

std::vector<LevelPromptLayout> build_level_prompts(const EncoderBackend& backend,
                                                   const LevelBank& bank,
                                                   const std::string& dimension_name);

// Differentiable level features for one dimension: (N_l x N_f), gradients
// flow to bank.context (and nothing else).
ad::Var level_features_t(ad::Tape& tape, const EncoderBackend& backend,
                         LevelBank& bank, const std::string& dimension_name);

// Value-level features for all dimensions, cached on the context digest so
// repeated calls with unchanged context tokens return bit-identical data.
class LevelFeatureCache {
 public:
  const std::vector<Eigen::MatrixXd>& get(const EncoderBackend& backend, LevelBank& bank,
                                          const std::vector<std::string>& dimension_names);

 private:
  std::uint64_t key_ = 0;
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> features_;
};

// prob = softmax(inv_temp * cos(f_m, each level row)); score = sum prob*q.
// Throws ValidationError("degenerate feature") on zero-norm inputs.
std::pair<double, Eigen::VectorXd> score_from_levels(const Eigen::VectorXd& fused,
                                                     const Eigen::MatrixXd& levels,
                                                     const Eigen::VectorXd& q,
                                                     double inv_temp);

struct ScoreVars {
  ad::Var score;  // 1x1
  ad::Var probs;  // (N_l x 1)
};

ScoreVars score_t(ad::Tape& tape, ad::Var fused_row, ad::Var level_rows,
                  const Eigen::VectorXd& q, ad::Var inv_temp);

}  // namespace t3dqa
