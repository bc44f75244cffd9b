#pragma once

#include <algorithm>
#include <cmath>

#include "dehaze/image.hpp"

namespace dehaze {

// Bilinear resample with half-pixel centers: src = (dst + 0.5) * scale - 0.5,
// clamped at the border. Applied identically to both members of a hazy/clear
// pair so pixel correspondence survives the resize.
inline Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize target must be positive");
  if (src.height == out_h && src.width == out_w) return src;
  Image dst(out_h, out_w, src.channels);
  const float sy = static_cast<float>(src.height) / out_h;
  const float sx = static_cast<float>(src.width) / out_w;
  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      float fy = (y + 0.5f) * sy - 0.5f;
      fy = std::min(std::max(fy, 0.f), static_cast<float>(src.height - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, src.height - 1);
      const float wy = fy - y0;
      for (int x = 0; x < out_w; ++x) {
        float fx = (x + 0.5f) * sx - 0.5f;
        fx = std::min(std::max(fx, 0.f), static_cast<float>(src.width - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, src.width - 1);
        const float wx = fx - x0;
        const float top = src.at(c, y0, x0) * (1.f - wx) + src.at(c, y0, x1) * wx;
        const float bot = src.at(c, y1, x0) * (1.f - wx) + src.at(c, y1, x1) * wx;
        dst.at(c, y, x) = top * (1.f - wy) + bot * wy;
      }
    }
  }
  return dst;
}

}  // namespace dehaze
