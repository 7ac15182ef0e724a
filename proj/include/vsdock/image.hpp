#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsdock/errors.hpp"

namespace vsdock {

// 8-bit grayscale image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  GrayImage() = default;
  GrayImage(int w, int h) : width(w), height(h), data(size_t(w) * h, 0) {}

  std::uint8_t& at(int u, int v) { return data[size_t(v) * width + u]; }
  std::uint8_t at(int u, int v) const { return data[size_t(v) * width + u]; }
  bool inside(int u, int v) const {
    return u >= 0 && u < width && v >= 0 && v < height;
  }
};

// Binary (P5) PGM with maxval 255; round trips bit-exact.
void write_pgm(const GrayImage& img, const std::string& path);
GrayImage read_pgm(const std::string& path);

}  // namespace vsdock
