#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/tensor.hpp"

namespace dehaze {

// Planar CHW float image. Intensity images hold values in [0,1]; depth maps
// reuse the same container with channels == 1 and values >= 0.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;  // channels * height * width

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || c <= 0) throw ShapeError("image dimensions must be positive");
    data.assign(static_cast<std::size_t>(c) * h * w, 0.f);
  }

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  bool same_size(const Image& o) const { return height == o.height && width == o.width; }
};

inline bool image_in_unit_range(const Image& img, float slack = 0.f) {
  for (float v : img.data)
    if (!(v >= -slack && v <= 1.f + slack)) return false;
  return true;
}

inline void clamp_unit(Image& img) {
  for (float& v : img.data) v = std::min(1.f, std::max(0.f, v));
}

inline std::uint8_t quantize8(float v) {
  const float c = std::min(1.f, std::max(0.f, v));
  return static_cast<std::uint8_t>(std::lround(c * 255.f));
}

inline float dequantize8(std::uint8_t v) { return static_cast<float>(v) / 255.f; }

// Images stack into NCHW batches for the networks.
template <typename T>
Tensor<T> to_tensor(const std::vector<const Image*>& batch) {
  if (batch.empty()) throw ShapeError("empty image batch");
  const int h = batch[0]->height, w = batch[0]->width, c = batch[0]->channels;
  Tensor<T> t({static_cast<std::int64_t>(batch.size()), c, h, w});
  T* out = t.data();
  for (const Image* img : batch) {
    if (img->height != h || img->width != w || img->channels != c)
      throw ShapeError("image batch members differ in size");
    for (float v : img->data) *out++ = static_cast<T>(v);
  }
  return t;
}

template <typename T>
Image from_tensor(const Tensor<T>& t, std::int64_t n) {
  if (t.ndim() != 4) throw ShapeError("expected NCHW tensor");
  Image img(static_cast<int>(t.dim(2)), static_cast<int>(t.dim(3)), static_cast<int>(t.dim(1)));
  const T* src = t.data() + n * t.dim(1) * t.dim(2) * t.dim(3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(src[i]);
  return img;
}

}  // namespace dehaze
