#pragma once

#include <cmath>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/image.hpp"

// Image-quality and classification metrics. Definitions are pinned exactly:
//
// psnr: 10*log10(1/mse) with peak 1.0, computed in double over all elements,
//       capped at 100 dB (identical images report the cap, not infinity).
// ssim: per channel, local statistics under an 11x11 Gaussian window with
//       sigma 1.5 (weights normalized to sum 1), constants C1=(0.01)^2 and
//       C2=(0.03)^2, evaluated at every position where the window fits
//       entirely, averaged over positions and channels. If the image is
//       smaller than the window, the window shrinks to the image extent and
//       the weights are renormalized over the shrunken support.
// top1_accuracy: 100 * matches / total.

namespace dehaze {

inline constexpr double kPsnrCapDb = 100.0;

inline double image_mse(const Image& x, const Image& y) {
  if (!x.same_size(y) || x.channels != y.channels) throw ShapeError("metric size mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = static_cast<double>(x.data[i]) - static_cast<double>(y.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(x.data.size());
}

inline double psnr(const Image& x, const Image& y) {
  const double mse = image_mse(x, y);
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::vector<double> gaussian_taps(int n, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(n));
  const double mid = (n - 1) / 2.0;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-(i - mid) * (i - mid) / (2.0 * sigma * sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-region Gaussian filter of one channel plane (doubles).
inline std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                        const std::vector<double>& gy,
                                        const std::vector<double>& gx, int& oh, int& ow) {
  const int ky = static_cast<int>(gy.size()), kx = static_cast<int>(gx.size());
  ow = w - kx + 1;
  oh = h - ky + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kx; ++k) acc += gx[static_cast<std::size_t>(k)] * plane[static_cast<std::size_t>(y) * w + x + k];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < ky; ++k) acc += gy[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

inline double ssim(const Image& x, const Image& y) {
  if (!x.same_size(y) || x.channels != y.channels) throw ShapeError("metric size mismatch");
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const int wy = std::min(11, x.height);
  const int wx = std::min(11, x.width);
  const auto gy = detail::gaussian_taps(wy, 1.5);
  const auto gx = detail::gaussian_taps(wx, 1.5);

  const std::size_t plane = x.plane_size();
  double total = 0;
  for (int c = 0; c < x.channels; ++c) {
    std::vector<double> px(plane), py(plane), pxx(plane), pyy(plane), pxy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const double a = x.data[c * plane + i];
      const double b = y.data[c * plane + i];
      px[i] = a;
      py[i] = b;
      pxx[i] = a * a;
      pyy[i] = b * b;
      pxy[i] = a * b;
    }
    int oh = 0, ow = 0;
    const auto mx = detail::filter_valid(px, x.height, x.width, gy, gx, oh, ow);
    const auto my = detail::filter_valid(py, x.height, x.width, gy, gx, oh, ow);
    const auto mxx = detail::filter_valid(pxx, x.height, x.width, gy, gx, oh, ow);
    const auto myy = detail::filter_valid(pyy, x.height, x.width, gy, gx, oh, ow);
    const auto mxy = detail::filter_valid(pxy, x.height, x.width, gy, gx, oh, ow);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cov + kC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(x.channels);
}

inline double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& truths) {
  if (predictions.size() != truths.size() || predictions.empty())
    throw ShapeError("prediction/truth lists must be equal-length and non-empty");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == truths[i]) ++matches;
  return 100.0 * static_cast<double>(matches) / static_cast<double>(predictions.size());
}

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double accuracy = 0.0;
  std::int64_t sample_count = 0;
};

}  // namespace dehaze
