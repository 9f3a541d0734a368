#include "t3dqa/encoders.hpp"

#include "t3dqa/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace t3dqa {

namespace {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Eigen::VectorXd seeded_gaussian(std::uint64_t seed, int n, double sd) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

Eigen::MatrixXd seeded_gaussian_matrix(std::uint64_t seed, int rows, int cols, double sd) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

constexpr int kStatDim = 10;

class TestBackend final : public EncoderBackend {
 public:
  explicit TestBackend(const TestBackendConfig& cfg) {
    if (cfg.n_f < 2) throw ValidationError("test backend requires n_f >= 2");
    if (cfg.patch_rows < 1 || cfg.patch_cols < 1)
      throw ValidationError("test backend requires a nonempty patch grid");
    if (cfg.input_resolution % cfg.patch_rows != 0 ||
        cfg.input_resolution % cfg.patch_cols != 0)
      throw ValidationError("input resolution must be divisible by the patch grid");
    info_.name = "test";
    info_.n_f = cfg.n_f;
    info_.patch_rows = cfg.patch_rows;
    info_.patch_cols = cfg.patch_cols;
    info_.input_resolution = cfg.input_resolution;
    info_.token_limit = cfg.token_limit;
    info_.embed_width = cfg.n_f;
    info_.seed = cfg.seed;
    seed_ = cfg.seed;

    const int nf = cfg.n_f;
    // fixed smooth maps; the 1/sqrt(nf) output scale keeps token dot
    // products O(1) regardless of feature width
    stat_proj_ = seeded_gaussian_matrix(mix_seed(seed_, 0xA1), nf, kStatDim,
                                        1.0 / std::sqrt(double(kStatDim)));
    stat_bias_ = seeded_gaussian(mix_seed(seed_, 0xA2), nf, 0.5);
    text_w_ = seeded_gaussian_matrix(mix_seed(seed_, 0xB1), nf, nf,
                                     1.0 / std::sqrt(double(nf)));
    text_b_ = seeded_gaussian(mix_seed(seed_, 0xB2), nf, 0.3);
    out_scale_ = 1.0 / std::sqrt(double(nf));

    visual_proj_w_ = ad::Parameter(
        "visual.proj_w", Eigen::MatrixXd::Identity(nf, nf), true);
    visual_proj_b_ = ad::Parameter("visual.proj_b", Eigen::MatrixXd::Zero(1, nf), true);
  }

  const BackendInfo& info() const override { return info_; }

  Eigen::MatrixXd image_descriptors(const Image& img) const override {
    Image r = resize_bilinear(img, info_.input_resolution, info_.input_resolution);
    const int ph = info_.input_resolution / info_.patch_rows;
    const int pw = info_.input_resolution / info_.patch_cols;
    Eigen::MatrixXd raw(info_.patch_tokens(), info_.n_f);
    int t = 0;
    for (int gy = 0; gy < info_.patch_rows; ++gy)
      for (int gx = 0; gx < info_.patch_cols; ++gx, ++t) {
        Eigen::VectorXd s = patch_stats(r, gy * ph, gx * pw, ph, pw);
        Eigen::VectorXd f = (stat_proj_ * s + stat_bias_).array().tanh();
        raw.row(t) = (f * out_scale_).transpose();
      }
    if (!raw.allFinite()) throw ValidationError("backend produced non-finite visual features");
    return raw;
  }

  ad::Var project_descriptors(ad::Tape& tape, const Eigen::MatrixXd& raw) const override {
    auto* self = const_cast<TestBackend*>(this);
    ad::Var r = tape.constant(raw);
    ad::Var w = tape.param(self->visual_proj_w_);
    ad::Var b = tape.param(self->visual_proj_b_);
    return ad::add_rowbc(ad::matmul(r, ad::transpose(w)), b);
  }

  ad::Var encode_image(ad::Tape& tape, const Image& img) const override {
    return project_descriptors(tape, image_descriptors(img));
  }

  ad::Var encode_tokens(ad::Tape& tape, ad::Var embeddings) const override {
    const Eigen::Index n = embeddings.rows();
    if (n > info_.token_limit)
      throw ValidationError("token sequence of length " + std::to_string(n) +
                            " exceeds backend limit " + std::to_string(info_.token_limit));
    Eigen::MatrixXd pos(n, info_.embed_width);
    for (Eigen::Index i = 0; i < n; ++i)
      pos.row(i) = positional(static_cast<int>(i)).transpose();
    ad::Var shifted = ad::add(embeddings, tape.constant(pos));
    ad::Var pre = ad::add_rowbc(ad::matmul(shifted, tape.constant(text_w_.transpose())),
                                tape.constant(text_b_.transpose()));
    return ad::affine(ad::tanh(pre), out_scale_, 0.0);
  }

  Eigen::MatrixXd embed_text(const std::string& text,
                             std::vector<std::string>* warnings) const override {
    std::vector<std::string> toks = tokenize(text);
    const int max_words = info_.token_limit - 2;
    if (static_cast<int>(toks.size()) > max_words) {
      if (warnings)
        warnings->push_back("prompt truncated from " + std::to_string(toks.size()) +
                            " to " + std::to_string(max_words) + " tokens");
      toks.resize(max_words);
    }
    Eigen::MatrixXd m(toks.size() + 2, info_.embed_width);
    m.row(0) = token_embedding("<bos>").transpose();
    for (std::size_t i = 0; i < toks.size(); ++i)
      m.row(static_cast<Eigen::Index>(i) + 1) = token_embedding(toks[i]).transpose();
    m.row(m.rows() - 1) = token_embedding("<eos>").transpose();
    return m;
  }

  Eigen::MatrixXd bos_embedding() const override {
    return token_embedding("<bos>").transpose();
  }
  Eigen::MatrixXd eos_embedding() const override {
    return token_embedding("<eos>").transpose();
  }

  std::vector<ad::Parameter*> parameters() override {
    return {&visual_proj_w_, &visual_proj_b_};
  }

  std::uint64_t text_encoder_digest() const override {
    return ad::digest_matrix(text_w_) ^ ad::digest_matrix(text_b_);
  }

 private:
  Eigen::VectorXd token_embedding(const std::string& tok) const {
    std::lock_guard<std::mutex> lock(cache_mu_);
    auto it = token_cache_.find(tok);
    if (it != token_cache_.end()) return it->second;
    Eigen::VectorXd e = seeded_gaussian(mix_seed(seed_, 0xC1, fnv1a64(tok)),
                                        info_.embed_width,
                                        1.0 / std::sqrt(double(info_.embed_width)));
    token_cache_.emplace(tok, e);
    return e;
  }

  Eigen::VectorXd positional(int i) const {
    std::lock_guard<std::mutex> lock(cache_mu_);
    auto it = pos_cache_.find(i);
    if (it != pos_cache_.end()) return it->second;
    Eigen::VectorXd p =
        seeded_gaussian(mix_seed(seed_, 0xD1, static_cast<std::uint64_t>(i)),
                        info_.embed_width, 0.2 / std::sqrt(double(info_.embed_width)));
    pos_cache_.emplace(i, p);
    return p;
  }

  static Eigen::VectorXd patch_stats(const Image& img, int y0, int x0, int h, int w) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(kStatDim);
    double n = double(h) * double(w);
    double lum_min = 1.0, lum_max = 0.0;
    double mean[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    double gx = 0, gy = 0;
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) {
        double lum = 0;
        for (int c = 0; c < 3; ++c) {
          const double v = img.at(y, x, c);
          mean[c] += v;
          sq[c] += v * v;
          lum += v / 3.0;
        }
        lum_min = std::min(lum_min, lum);
        lum_max = std::max(lum_max, lum);
        if (x + 1 < x0 + w)
          for (int c = 0; c < 3; ++c) gx += std::abs(img.at(y, x + 1, c) - img.at(y, x, c));
        if (y + 1 < y0 + h)
          for (int c = 0; c < 3; ++c) gy += std::abs(img.at(y + 1, x, c) - img.at(y, x, c));
      }
    for (int c = 0; c < 3; ++c) {
      s(c) = mean[c] / n;
      s(3 + c) = std::sqrt(std::max(0.0, sq[c] / n - s(c) * s(c)));
    }
    s(6) = gx / (3.0 * n);
    s(7) = gy / (3.0 * n);
    s(8) = lum_min;
    s(9) = lum_max;
    return s;
  }

  BackendInfo info_;
  std::uint64_t seed_ = 0;
  Eigen::MatrixXd stat_proj_;
  Eigen::VectorXd stat_bias_;
  Eigen::MatrixXd text_w_;
  Eigen::VectorXd text_b_;
  double out_scale_ = 1.0;
  ad::Parameter visual_proj_w_;
  ad::Parameter visual_proj_b_;

  mutable std::mutex cache_mu_;
  mutable std::map<std::string, Eigen::VectorXd> token_cache_;
  mutable std::map<int, Eigen::VectorXd> pos_cache_;
};

}  // namespace

std::shared_ptr<EncoderBackend> make_test_backend(const TestBackendConfig& cfg) {
  return std::make_shared<TestBackend>(cfg);
}

std::shared_ptr<EncoderBackend> make_backend(const std::string& name,
                                             const TestBackendConfig& cfg) {
  if (name == "test") return make_test_backend(cfg);
  throw ValidationError("unknown backend '" + name + "' (known: test)");
}

Image load_view_for(const EncoderBackend& backend, const std::string& path) {
  Image img = load_image(path);
  const int res = backend.info().input_resolution;
  return resize_bilinear(img, res, res);
}

TokenMatrix encode_views(const EncoderBackend& backend, const std::vector<Image>& views) {
  if (views.empty()) throw ValidationError("encode_views: no views supplied");
  ad::Tape tape(false);
  ad::Var all;
  bool first = true;
  for (const auto& v : views) {
    ad::Var tok = backend.encode_image(tape, v);
    all = first ? tok : ad::vstack(all, tok);
    first = false;
  }
  if (!all.value().allFinite())
    throw ValidationError("backend produced non-finite visual tokens");
  return TokenMatrix{all.value(), TokenOrigin::visual};
}

TokenMatrix encode_views_paths(const EncoderBackend& backend,
                               const std::vector<std::string>& paths) {
  std::vector<Image> views;
  views.reserve(paths.size());
  for (const auto& p : paths) views.push_back(load_view_for(backend, p));
  return encode_views(backend, views);
}

TokenMatrix encode_prompt(const EncoderBackend& backend, const std::string& prompt,
                          std::vector<std::string>* warnings) {
  if (prompt.empty()) throw ValidationError("encode_prompt: empty prompt");
  Eigen::MatrixXd emb = backend.embed_text(prompt, warnings);
  ad::Tape tape(false);
  ad::Var out = backend.encode_tokens(tape, tape.constant(emb));
  if (!out.value().allFinite())
    throw ValidationError("backend produced non-finite prompt tokens");
  return TokenMatrix{out.value(), TokenOrigin::prompt};
}

}  // namespace t3dqa
