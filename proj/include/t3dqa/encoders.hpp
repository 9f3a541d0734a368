#pragma once

// Visual/textual encoding behind a backend-agnostic interface.
//
// The deterministic test backend is the only backend shipped here: token
// embeddings are seeded-hash functions of the token strings, the text
// encoder is a fixed smooth per-token map (so gradients pass through to
// injected context embeddings), and the visual encoder computes smooth
// per-patch statistics followed by a trainable linear projection.
//
// An adapter for a pretrained contrastive vision-language encoder only has
// to satisfy this same interface: patch-token visual output on a declared
// grid, token-level text output, and a shared joint feature width.
//
// Frozen backends are safe to call concurrently; trainable ones require
// the caller (the trainer) to serialize parameter updates.

#include "t3dqa/autodiff.hpp"
#include "t3dqa/image.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

namespace t3dqa {

enum class TokenOrigin { visual, prompt, dimension, level };

struct TokenMatrix {
  Eigen::MatrixXd tokens;  // n_tokens x N_f
  TokenOrigin origin = TokenOrigin::prompt;
};

struct BackendInfo {
  std::string name;
  int n_f = 512;
  int input_resolution = 224;
  int patch_rows = 14;
  int patch_cols = 14;
  int token_limit = 77;
  int embed_width = 512;  // token-embedding width fed to the text encoder
  std::uint64_t seed = 0;

  int patch_tokens() const { return patch_rows * patch_cols; }
};

class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual const BackendInfo& info() const = 0;

  // Patch tokens for one image: (patch_tokens x N_f). The image is resized
  // to the declared input resolution first. Differentiable w.r.t. the
  // backend's trainable parameters.
  virtual ad::Var encode_image(ad::Tape& tape, const Image& img) const = 0;

  // Raw descriptor stage of encode_image, before the trainable projection.
  // Constant w.r.t. parameters; cacheable per view file.
  virtual Eigen::MatrixXd image_descriptors(const Image& img) const = 0;
  virtual ad::Var project_descriptors(ad::Tape& tape,
                                      const Eigen::MatrixXd& raw) const = 0;

  // Text encoder over a token-embedding sequence: (n x embed_width) ->
  // (n x N_f). Own weights are frozen; gradients flow to the inputs.
  virtual ad::Var encode_tokens(ad::Tape& tape, ad::Var embeddings) const = 0;

  // Token embedder: raw text -> (n_tokens x embed_width), specials included.
  // Truncates against token_limit, recording a note in `warnings`.
  virtual Eigen::MatrixXd embed_text(const std::string& text,
                                     std::vector<std::string>* warnings) const = 0;
  virtual Eigen::MatrixXd bos_embedding() const = 0;
  virtual Eigen::MatrixXd eos_embedding() const = 0;

  virtual std::vector<ad::Parameter*> parameters() = 0;
  virtual std::uint64_t text_encoder_digest() const = 0;
};

struct TestBackendConfig {
  int n_f = 32;
  int patch_rows = 4;
  int patch_cols = 4;
  int input_resolution = 32;
  int token_limit = 77;
  std::uint64_t seed = 0;
};

std::shared_ptr<EncoderBackend> make_test_backend(const TestBackendConfig& cfg);

// Registry keyed by the config file's backend name.
std::shared_ptr<EncoderBackend> make_backend(const std::string& name,
                                             const TestBackendConfig& cfg);

// ---- plain (value-level) wrappers over the differentiable API ----------

// Concatenates patch tokens of all views in order: ((N_v * N_t^v) x N_f).
TokenMatrix encode_views(const EncoderBackend& backend,
                         const std::vector<Image>& views);
TokenMatrix encode_views_paths(const EncoderBackend& backend,
                               const std::vector<std::string>& paths);

// (n_tokens x N_f) prompt tokens; throws ValidationError on empty prompts.
TokenMatrix encode_prompt(const EncoderBackend& backend, const std::string& prompt,
                          std::vector<std::string>* warnings = nullptr);

Image load_view_for(const EncoderBackend& backend, const std::string& path);

}  // namespace t3dqa
