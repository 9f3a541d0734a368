#include "t3dqa/image.hpp"

#include "t3dqa/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace t3dqa {

Image Image::filled(int w, int h, double r, double g, double b) {
  Image img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
  return img;
}

namespace {

// skips whitespace and '#' comments in PNM headers
int next_header_int(std::istream& in, const std::string& path) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  if (!in || v < 0) throw ParseError("bad PNM header in " + path);
  return v;
}

}  // namespace

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open image file: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || (m1 != '6' && m1 != '5' && m1 != '3'))
    throw ParseError("unsupported raster format (expect PPM/PGM): " + path);
  const int w = next_header_int(in, path);
  const int h = next_header_int(in, path);
  const int maxv = next_header_int(in, path);
  if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 65535)
    throw ParseError("bad PNM dimensions in " + path);

  Image img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  const double scale = 1.0 / maxv;

  if (m1 == '3') {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      int v;
      in >> v;
      if (!in) throw ParseError("truncated P3 data in " + path);
      img.pixels[i] = v * scale;
    }
    return img;
  }

  in.get();  // single whitespace after maxval
  const int channels = (m1 == '6') ? 3 : 1;
  const int bytes_per = maxv > 255 ? 2 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * channels * bytes_per);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw ParseError("truncated pixel data in " + path);

  for (int i = 0; i < w * h; ++i) {
    for (int c = 0; c < 3; ++c) {
      const int src = (channels == 3) ? i * 3 + c : i;
      double v;
      if (bytes_per == 1) {
        v = buf[src];
      } else {
        v = buf[2 * src] * 256.0 + buf[2 * src + 1];
      }
      img.pixels[static_cast<std::size_t>(i) * 3 + c] = v * scale;
    }
  }
  return img;
}

void save_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write image file: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    double v = std::clamp(img.pixels[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw ValidationError("short write on image file: " + path);
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (img.width == out_w && img.height == out_h) return img;
  Image out;
  out.width = out_w;
  out.height = out_h;
  out.pixels.resize(static_cast<std::size_t>(out_w) * out_h * 3);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Image box_blur(const Image& img, int radius, int passes) {
  if (radius <= 0 || passes <= 0) return img;
  Image cur = img;
  Image tmp = img;
  const int w = img.width, h = img.height;
  for (int p = 0; p < passes; ++p) {
    // horizontal
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          double acc = 0;
          int n = 0;
          for (int k = -radius; k <= radius; ++k) {
            const int xx = x + k;
            if (xx < 0 || xx >= w) continue;
            acc += cur.at(y, xx, c);
            ++n;
          }
          tmp.at(y, x, c) = acc / n;
        }
    // vertical
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          double acc = 0;
          int n = 0;
          for (int k = -radius; k <= radius; ++k) {
            const int yy = y + k;
            if (yy < 0 || yy >= h) continue;
            acc += tmp.at(yy, x, c);
            ++n;
          }
          cur.at(y, x, c) = acc / n;
        }
  }
  return cur;
}

}  // namespace t3dqa
