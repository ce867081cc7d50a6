#include "coast/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace coast {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

bool has_suffix(const std::string& s, const std::string& suf) {
  if (s.size() < suf.size()) return false;
  std::string tail = s.substr(s.size() - suf.size());
  std::transform(tail.begin(), tail.end(), tail.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return tail == suf;
}

// Reads one PGM header token, skipping whitespace and '#' comments.
int pgm_token(std::istream& f, const std::string& path) {
  int c = f.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = f.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = f.get();
  }
  if (c == EOF || !std::isdigit(c))
    throw FormatError("read_image: malformed PGM header in " + path);
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = f.get();
  }
  return v;
}

Image read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_image: cannot open " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5')
    throw FormatError("read_image: not a binary PGM (P5): " + path);
  const int w = pgm_token(f, path);
  const int h = pgm_token(f, path);
  const int maxval = pgm_token(f, path);
  if (maxval != 255)
    throw FormatError("read_image: unsupported PGM maxval " +
                      std::to_string(maxval) + " (need 255) in " + path);
  if (w < 1 || h < 1)
    throw FormatError("read_image: empty PGM in " + path);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FormatError("read_image: truncated PGM payload in " + path);
  Image img(h, w, 1);
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.data[i] = raw[i] / 255.0;
  return img;
}

void write_pgm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("write_image: cannot open " + path);
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(img.width) *
                                 img.height);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const long v = std::lround(img.data[i] * 255.0);
    raw[i] = static_cast<unsigned char>(std::clamp(v, 0L, 255L));
  }
  f.write(reinterpret_cast<const char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (!f) throw FormatError("write_image: write failed for " + path);
}

struct FileCloser {
  std::FILE* fp;
  ~FileCloser() {
    if (fp) std::fclose(fp);
  }
};

Image read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw FormatError("read_image: cannot open " + path);
  FileCloser closer{fp};

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_image: libpng init failed");
  }
  std::vector<std::vector<png_byte>> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_image: corrupt PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = static_cast<int>(png_get_channels(png, info));
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_image: unsupported PNG channel count " +
                      std::to_string(ch) + " in " + path);
  }

  rows.assign(h, std::vector<png_byte>(png_get_rowbytes(png, info)));
  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = rows[y].data();
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c)
        img.at(c, y, x) = rows[y][x * ch + c] / 255.0;
  return img;
}

void write_png(const Image& img, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw FormatError("write_image: cannot open " + path);
  FileCloser closer{fp};

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("write_image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("write_image: PNG write failed for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const long v = std::lround(img.at(0, y, x) * 255.0);
      row[x] = static_cast<png_byte>(std::clamp(v, 0L, 255L));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image make_image(int h, int w, int c, const NdArray& values) {
  if (c != 1 && c != 3)
    throw DimensionError("make_image: channels must be 1 or 3");
  if (values.size() != static_cast<std::size_t>(h) * w * c)
    throw DimensionError("make_image: value count does not match dimensions");
  Image img(h, w, c);
  for (std::size_t i = 0; i < values.size(); ++i)
    img.data[i] = clamp01(values[i]);
  return img;
}

Image to_luminance(const Image& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3)
    throw DimensionError("to_luminance: channels must be 1 or 3");
  Image out(img.height, img.width, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(0, y, x) = clamp01(0.299 * img.at(0, y, x) +
                                0.587 * img.at(1, y, x) +
                                0.114 * img.at(2, y, x));
  return out;
}

Image read_image(const std::string& path) {
  if (has_suffix(path, ".pgm")) return read_pgm(path);
  if (has_suffix(path, ".png")) return read_png(path);
  // Sniff the magic for files without a telling extension.
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_image: cannot open " + path);
  char head[2] = {0, 0};
  f.read(head, 2);
  f.close();
  if (head[0] == 'P' && head[1] == '5') return read_pgm(path);
  if (static_cast<unsigned char>(head[0]) == 0x89 && head[1] == 'P')
    return read_png(path);
  throw FormatError("read_image: unsupported format: " + path);
}

void write_image(const Image& img, const std::string& path) {
  if (img.channels != 1)
    throw DimensionError("write_image: only 1-channel images are written");
  if (has_suffix(path, ".png"))
    write_png(img, path);
  else
    write_pgm(img, path);
}

}  // namespace coast
