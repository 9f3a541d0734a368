#include "t3dqa/synthetic.hpp"

#include "t3dqa/common.hpp"
#include "t3dqa/image.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace fs = std::filesystem;

namespace t3dqa {

namespace {

constexpr double kPi = 3.14159265358979323846;

double round2(double v) { return std::round(v * 100.0) / 100.0; }

double quality_to_mos(double t) { return round2(5.0 - 4.0 * t); }

struct ObjectWords {
  const char* color;
  const char* noun;
};

const ObjectWords kWords[] = {
    {"red", "teapot"},    {"blue", "lantern"},  {"green", "cactus"},
    {"yellow", "robot"},  {"purple", "violin"}, {"orange", "castle"},
    {"teal", "sailboat"}, {"pink", "armchair"}, {"golden", "helmet"},
    {"silver", "rocket"},
};

PromptComponents components_for(int p) {
  // cycle through the 30 combinations: (2 single-attr * 3 attrs + 2 multi *
  // 2 relations stand-ins) x 2 styles x 3 lengths, flattened deterministically
  PromptComponents c;
  const int combo = p % 30;
  const int head = combo / 6;   // 0..4: single x {geom, app, mixed}, multi x {spatial, non-spatial}
  const int tail = combo % 6;   // style x length
  if (head < 3) {
    c.object = PromptComponents::Object::Single;
    c.attribute = static_cast<PromptComponents::Attribute>(head);
  } else {
    c.object = PromptComponents::Object::Multiple;
    c.relationship = static_cast<PromptComponents::Relationship>(head - 3);
  }
  c.style = tail % 2 == 0 ? PromptComponents::Style::Realistic
                          : PromptComponents::Style::Imaginative;
  c.length = static_cast<PromptComponents::Length>(tail / 2);
  return c;
}

struct PlantedLatents {
  double t_tc, t_gl, t_gr;  // distortion levels in [0,1]
};

PlantedLatents latents_for(std::uint64_t seed, int p, int g, int n_generators) {
  // generator bias spreads mean quality; a shared per-prompt shift makes
  // cross-prompt calibration genuinely harder than within-prompt ranking
  const double base =
      n_generators > 1 ? 0.12 + 0.76 * double(g) / double(n_generators - 1) : 0.5;
  auto rng = make_rng(mix_seed(seed, 0x51A7, mix_seed(p, 0x9E)));
  std::uniform_real_distribution<double> shift(-0.16, 0.16);
  const double prompt_shift = shift(rng);
  auto rng2 = make_rng(mix_seed(seed, 0x51A8, mix_seed(p, g)));
  std::uniform_real_distribution<double> jitter(-0.10, 0.10);
  PlantedLatents t;
  t.t_tc = std::clamp(base + prompt_shift + jitter(rng2), 0.02, 0.98);
  t.t_gl = std::clamp(base + prompt_shift + jitter(rng2), 0.02, 0.98);
  t.t_gr = std::clamp(base + prompt_shift + jitter(rng2), 0.02, 0.98);
  return t;
}

void object_color(int p, double* rgb) {
  const auto h = mix_seed(0xC0108, p);
  rgb[0] = 0.45 + 0.5 * double((h >> 8) & 0xFF) / 255.0;
  rgb[1] = 0.45 + 0.5 * double((h >> 16) & 0xFF) / 255.0;
  rgb[2] = 0.45 + 0.5 * double((h >> 24) & 0xFF) / 255.0;
}

Image render_view(const SyntheticSpec& spec, int p, int g, int v,
                  const PlantedLatents& t) {
  const int size = spec.image_size;
  double col[3];
  object_color(p, col);
  const double bg[3] = {0.10, 0.10, 0.12};
  Image img = Image::filled(size, size, bg[0], bg[1], bg[2]);

  auto rng = make_rng(mix_seed(spec.seed, 0xF00D, mix_seed(p, g, v)));
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const double cx = size / 2.0 + (uni(rng) - 0.5) * size * 0.06;
  const double cy = size / 2.0 + (uni(rng) - 0.5) * size * 0.06;
  const double radius = size * 0.36;
  const double wedge_start = 2.0 * kPi * uni(rng);
  const double wedge_span = 2.0 * kPi * 0.5 * t.t_gl;
  const double checker_phase = uni(rng) * 8.0;
  const int checker = std::max(2, size / 16);

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double r = std::sqrt(dx * dx + dy * dy);
      if (r > radius) continue;
      double ang = std::atan2(dy, dx) - wedge_start;
      while (ang < 0) ang += 2.0 * kPi;
      if (ang < wedge_span) continue;  // carved-away sector reads as missing
      const bool check = (static_cast<int>(x / checker + checker_phase) +
                          static_cast<int>(y / checker)) % 2 == 0;
      const double shade = check ? 1.0 : 0.35;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(col[c] * shade, 0.0, 1.0);
    }

  // floaters: bright specks outside the object silhouette
  const int n_floaters = static_cast<int>(std::lround(t.t_gr * 10.0));
  for (int f = 0; f < n_floaters; ++f) {
    const double ang = uni(rng) * 2.0 * kPi;
    const double rr = radius * (1.12 + 0.25 * uni(rng));
    const int fx = static_cast<int>(cx + rr * std::cos(ang));
    const int fy = static_cast<int>(cy + rr * std::sin(ang));
    for (int oy = 0; oy < 4; ++oy)
      for (int ox = 0; ox < 4; ++ox) {
        const int xx = fx + ox, yy = fy + oy;
        if (xx < 0 || yy < 0 || xx >= size || yy >= size) continue;
        img.at(yy, xx, 0) = 1.0;
        img.at(yy, xx, 1) = 1.0;
        img.at(yy, xx, 2) = 0.9;
      }
  }

  const int blur_radius = static_cast<int>(std::lround(t.t_tc * 3.0));
  if (blur_radius > 0) img = box_blur(img, blur_radius, 2);
  return img;
}

}  // namespace

SyntheticBenchmark generate_synthetic_benchmark(const SyntheticSpec& spec,
                                                const std::string& out_dir) {
  if (spec.n_prompts < 1 || spec.n_generators < 1 || spec.n_views < 1)
    throw ValidationError("synthetic benchmark: all counts must be >= 1");
  if (spec.noise_sd < 0) throw ValidationError("synthetic benchmark: noise_sd must be >= 0");

  fs::create_directories(fs::path(out_dir) / "renders");

  SyntheticBenchmark out;
  BenchmarkManifest& m = out.manifest;
  m.name = "synthetic-t23d";
  m.score_min = 1.0;
  m.score_max = 5.0;
  m.n_views = spec.n_views;
  for (const auto& d : primary_dimensions())
    if (d.id == "TC" || d.id == "GL" || d.id == "GR" || d.id == "OQ")
      m.dimensions.push_back(d);

  char buf[128];
  for (int p = 0; p < spec.n_prompts; ++p) {
    const auto& w = kWords[p % (sizeof(kWords) / sizeof(kWords[0]))];
    std::snprintf(buf, sizeof buf, "p%03d", p);
    const std::string prompt_id = buf;
    const std::string prompt_text =
        "a " + std::string(w.color) + " " + w.noun + " " + std::to_string(p / 10);
    for (int g = 0; g < spec.n_generators; ++g) {
      Sample s;
      std::snprintf(buf, sizeof buf, "p%03d_g%d", p, g);
      s.sample_id = buf;
      s.prompt_id = prompt_id;
      s.prompt_text = prompt_text;
      s.components = components_for(p);
      s.generator_id = "gen" + std::to_string(g);

      const PlantedLatents t = latents_for(spec.seed, p, g, spec.n_generators);
      MosVector planted;
      planted.set("TC", quality_to_mos(t.t_tc));
      planted.set("GL", quality_to_mos(t.t_gl));
      planted.set("GR", quality_to_mos(t.t_gr));
      planted.set("OQ", round2((planted.get("TC") + planted.get("GL") +
                                planted.get("GR")) / 3.0));
      out.planted.by_sample[s.sample_id] = planted;

      auto noise_rng = make_rng(mix_seed(spec.seed, 0x401E, mix_seed(p, g)));
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (const auto& d : m.dimensions) {
        double v = planted.get(d.id);
        if (spec.noise_sd > 0)
          v = round2(std::clamp(v + spec.noise_sd * gauss(noise_rng), 1.0, 5.0));
        s.mos.set(d.id, v);
      }

      for (int v = 0; v < spec.n_views; ++v) {
        std::snprintf(buf, sizeof buf, "renders/p%03d_g%d_v%d.ppm", p, g, v);
        const std::string rel = buf;
        const std::string abs_path = (fs::path(out_dir) / rel).string();
        save_ppm(render_view(spec, p, g, v, t), abs_path);
        s.view_paths.push_back(abs_path);
      }
      m.samples.push_back(std::move(s));
    }
  }

  out.manifest_path = (fs::path(out_dir) / "manifest.json").string();
  save_manifest(m, out.manifest_path);
  return out;
}

}  // namespace t3dqa
