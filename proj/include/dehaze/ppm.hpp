#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/image.hpp"

// Binary PPM (P6, RGB) and PGM (P5, gray) at 8 bits per sample. Lossless,
// byte-stable across runs, and trivially inspectable; the pipeline's native
// on-disk image format.

namespace dehaze {

namespace detail {

inline int ppm_next_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns a non-negative integer.
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  return in ? value : -1;
}

}  // namespace detail

inline Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  char p = 0, type = 0;
  in.get(p);
  in.get(type);
  if (p != 'P' || (type != '6' && type != '5')) throw IoError("not a binary PPM/PGM: " + path);
  const int channels = type == '6' ? 3 : 1;
  const int w = detail::ppm_next_token(in);
  const int h = detail::ppm_next_token(in);
  const int maxval = detail::ppm_next_token(in);
  if (w <= 0 || h <= 0) throw IoError("bad image header: " + path);
  if (maxval != 255) throw IoError("unsupported maxval " + std::to_string(maxval) + ": " + path);
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw IoError("truncated image: " + path);

  Image img(h, w, channels);
  // interleaved -> planar
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = dequantize8(raw[(static_cast<std::size_t>(y) * w + x) * channels + c]);
  return img;
}

inline void write_ppm(const std::string& path, const Image& img) {
  if (img.channels != 3 && img.channels != 1)
    throw ShapeError("PPM writer expects 1 or 3 channels");
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image: " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.width) * img.height * img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        raw[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            quantize8(img.at(c, y, x));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write: " + path);
}

}  // namespace dehaze
