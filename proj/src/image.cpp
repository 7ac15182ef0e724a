#include "vsdock/image.hpp"

#include <cstdio>
#include <fstream>

namespace vsdock {

void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            std::streamsize(img.data.size()));
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

namespace {

int next_token(std::istream& in) {
  // Skips whitespace and '#' comment lines between header tokens.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) {
    throw IoError("truncated PGM header");
  }
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open for reading: " + path);
  }
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5') {
    throw IoError("not a binary PGM (P5): " + path);
  }
  const int w = next_token(in);
  const int h = next_token(in);
  const int maxval = next_token(in);
  if (maxval != 255 || w <= 0 || h <= 0) {
    throw IoError("unsupported PGM header in " + path);
  }
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.data.data()),
          std::streamsize(img.data.size()));
  if (in.gcount() != std::streamsize(img.data.size())) {
    throw IoError("truncated PGM payload in " + path);
  }
  return img;
}

}  // namespace vsdock
