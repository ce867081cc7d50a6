#pragma once

#include <string>

#include "coast/ndarray.hpp"

namespace coast {

// Planar float image, values in [0,1], data shape {channels, H, W}.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  NdArray data;

  Image() = default;
  Image(int h, int w, int c)
      : height(h), width(w), channels(c), data({c, h, w}) {}

  double& at(int c, int y, int x) { return data.at(c, y, x); }
  double at(int c, int y, int x) const { return data.at(c, y, x); }
};

// Builds an image from raw values, clamping to [0,1] on ingest.
Image make_image(int h, int w, int c, const NdArray& values);

// Full-range luminance: Y = 0.299 R + 0.587 G + 0.114 B. 1-channel
// images pass through unchanged.
Image to_luminance(const Image& img);

// Reads binary PGM (P5, maxval 255) or 8-bit PNG (gray or RGB; palette
// expanded, alpha stripped). Pixel values map to v/255.
Image read_image(const std::string& path);

// Writes a 1-channel image as PGM or PNG depending on the file extension;
// values are round(v*255) clamped to [0,255].
void write_image(const Image& img, const std::string& path);

}  // namespace coast
