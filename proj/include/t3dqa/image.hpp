#pragma once

// Minimal 8-bit RGB raster support. Renders travel as binary PPM (P6);
// grayscale PGM (P5) and ASCII P3 are accepted on load. Pixels are stored
// as doubles in [0,1], row-major, interleaved RGB.

#include <string>
#include <vector>

namespace t3dqa {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // height*width*3, [0,1]

  double& at(int y, int x, int c) { return pixels[(y * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pixels[(y * width + x) * 3 + c]; }

  static Image filled(int w, int h, double r, double g, double b);
};

Image load_image(const std::string& path);
void save_ppm(const Image& img, const std::string& path);
Image resize_bilinear(const Image& img, int out_w, int out_h);

// box blur with the given radius, applied `passes` times (approximates a
// Gaussian for passes >= 2)
Image box_blur(const Image& img, int radius, int passes);

}  // namespace t3dqa
