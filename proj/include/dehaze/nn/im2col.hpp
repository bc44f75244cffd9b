#pragma once

#include <cstdint>

namespace dehaze::nn {

inline int conv_out_extent(int grid, int kernel, int stride, int pad) {
  return (grid + 2 * pad - kernel) / stride + 1;
}

// Unfolds an image plane set [C, Hg, Wg] into col[C*kh*kw, P] where
// P = Hp*Wp enumerates window positions on the padded grid. Out-of-grid taps
// read as zero.
template <typename T>
void im2col(const T* img, int C, int Hg, int Wg, int kh, int kw, int sh, int sw, int ph, int pw,
            int Hp, int Wp, T* col) {
  const std::int64_t P = static_cast<std::int64_t>(Hp) * Wp;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = col + (static_cast<std::int64_t>(c) * kh * kw + ki * kw + kj) * P;
        for (int oy = 0; oy < Hp; ++oy) {
          const int y = oy * sh - ph + ki;
          if (y < 0 || y >= Hg) {
            for (int ox = 0; ox < Wp; ++ox) row[oy * Wp + ox] = T(0);
            continue;
          }
          const T* src = img + (static_cast<std::int64_t>(c) * Hg + y) * Wg;
          for (int ox = 0; ox < Wp; ++ox) {
            const int x = ox * sw - pw + kj;
            row[oy * Wp + ox] = (x < 0 || x >= Wg) ? T(0) : src[x];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates col[C*kh*kw, P] back onto the image grid.
// Caller zeroes `img` first.
template <typename T>
void col2im(const T* col, int C, int Hg, int Wg, int kh, int kw, int sh, int sw, int ph, int pw,
            int Hp, int Wp, T* img) {
  const std::int64_t P = static_cast<std::int64_t>(Hp) * Wp;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = col + (static_cast<std::int64_t>(c) * kh * kw + ki * kw + kj) * P;
        for (int oy = 0; oy < Hp; ++oy) {
          const int y = oy * sh - ph + ki;
          if (y < 0 || y >= Hg) continue;
          T* dst = img + (static_cast<std::int64_t>(c) * Hg + y) * Wg;
          for (int ox = 0; ox < Wp; ++ox) {
            const int x = ox * sw - pw + kj;
            if (x >= 0 && x < Wg) dst[x] += row[oy * Wp + ox];
          }
        }
      }
    }
  }
}

}  // namespace dehaze::nn
