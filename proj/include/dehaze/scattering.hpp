#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/dataset.hpp"
#include "dehaze/image.hpp"
#include "dehaze/parallel.hpp"
#include "dehaze/ppm.hpp"
#include "dehaze/rng.hpp"

// Haze formation: I(x) = J(x) * t(x) + A * (1 - t(x)) with t(x) = exp(-beta * d(x)).
// Everything here is a pure function of its inputs; synthesis randomness comes
// from per-item derived seeds so parallel and serial runs agree byte for byte.

namespace dehaze {

enum class DepthMode { ConstantPerImage, SuppliedMap };
enum class AirlightMode { UniformPerChannel, Fixed };

struct HazeParams {
  double beta = 2.0;
  DepthMode depth_mode = DepthMode::ConstantPerImage;
  double depth_min = 0.1;   // constant-per-image draw range
  double depth_max = 1.0;
  std::string depth_map_dir;  // supplied-map mode: <dir>/<key>.pgm, values scaled by depth_scale
  double depth_scale = 1.0;
  AirlightMode airlight_mode = AirlightMode::UniformPerChannel;
  double airlight_min = 0.7;
  double airlight_max = 1.0;
  std::array<double, 3> airlight_fixed{0.9, 0.9, 0.9};
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (beta < 0) throw InvalidParameterError("beta must be >= 0");
    if (depth_min < 0 || depth_max < depth_min)
      throw InvalidParameterError("need 0 <= depth_min <= depth_max");
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(airlight_min) || !unit(airlight_max) || airlight_max < airlight_min)
      throw InvalidParameterError("airlight range must lie in [0,1]");
    for (double a : airlight_fixed)
      if (!unit(a)) throw InvalidParameterError("fixed airlight must lie in [0,1]");
    if (depth_mode == DepthMode::SuppliedMap && depth_map_dir.empty())
      throw InvalidParameterError("supplied-map mode needs depth_map_dir");
  }
};

// t(x) = exp(-beta * d(x)), elementwise over a single-channel depth map.
inline Image transmission_from_depth(const Image& depth, double beta) {
  if (beta < 0) throw InvalidParameterError("beta must be >= 0");
  if (depth.channels != 1) throw ShapeError("depth map must have one channel");
  Image t(depth.height, depth.width, 1);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const float d = depth.data[i];
    if (d < 0) throw InvalidParameterError("depth values must be >= 0");
    t.data[i] = static_cast<float>(std::exp(-beta * static_cast<double>(d)));
  }
  return t;
}

// I = J*t + A*(1-t). A convex blend, so outputs stay in [0,1].
inline Image apply_scattering(const Image& clear, const Image& t,
                              const std::array<float, 3>& airlight) {
  if (clear.channels != 3) throw ShapeError("clear image must be RGB");
  if (t.channels != 1 || !clear.same_size(t))
    throw ShapeError("transmission map must be single-channel and match the image size");
  for (float a : airlight)
    if (!(a >= 0.f && a <= 1.f)) throw InvalidParameterError("airlight must lie in [0,1]");
  Image hazy(clear.height, clear.width, 3);
  const std::size_t plane = clear.plane_size();
  for (int c = 0; c < 3; ++c) {
    const float a = airlight[static_cast<std::size_t>(c)];
    const float* j = clear.data.data() + c * plane;
    float* out = hazy.data.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i)
      out[i] = j[i] * t.data[i] + a * (1.f - t.data[i]);
  }
  return hazy;
}

// Inversion used by tests and sanity checks: J = (I - A*(1-t)) / t.
inline Image invert_scattering(const Image& hazy, const Image& t,
                               const std::array<float, 3>& airlight) {
  if (t.channels != 1 || !hazy.same_size(t)) throw ShapeError("transmission map mismatch");
  Image clear(hazy.height, hazy.width, hazy.channels);
  const std::size_t plane = hazy.plane_size();
  for (int c = 0; c < hazy.channels; ++c) {
    const float a = airlight[static_cast<std::size_t>(c % 3)];
    for (std::size_t i = 0; i < plane; ++i) {
      const float tv = t.data[i];
      clear.data[c * plane + i] = (hazy.data[c * plane + i] - a * (1.f - tv)) / tv;
    }
  }
  return clear;
}

// Per-item haze draw, replayable in isolation. Stream: derive(seed, index+1);
// constant mode draws depth first, then airlight R,G,B; supplied-map mode
// draws airlight only.
struct HazeDraw {
  double depth = 0.0;
  std::array<double, 3> airlight{0, 0, 0};
};

inline HazeDraw draw_haze(const HazeParams& p, std::size_t item_index) {
  auto eng = rng::engine(rng::derive(p.rng_seed, static_cast<std::uint64_t>(item_index) + 1));
  HazeDraw d;
  if (p.depth_mode == DepthMode::ConstantPerImage)
    d.depth = rng::uniform(eng, p.depth_min, p.depth_max);
  if (p.airlight_mode == AirlightMode::UniformPerChannel) {
    for (int c = 0; c < 3; ++c) d.airlight[c] = rng::uniform(eng, p.airlight_min, p.airlight_max);
  } else {
    d.airlight = p.airlight_fixed;
  }
  return d;
}

// Synthesizes one hazy image per clear image under out_dir/hazy/ and returns
// the manifest. Items are processed in input order (index = position), each
// with its own derived stream. Unreadable sources are skipped with a warning.
inline Manifest synthesize_pairs(const std::vector<LabeledImage>& clear_items,
                                 const HazeParams& params, const std::string& out_dir) {
  params.validate();
  if (clear_items.empty()) throw DatasetError("no clear images to synthesize from");

  std::filesystem::create_directories(std::filesystem::path(out_dir) / "hazy");
  std::vector<PairedSample> rows(clear_items.size());
  std::vector<char> ok(clear_items.size(), 0);
  std::vector<std::string> warnings(clear_items.size());

  parallel_for(static_cast<std::int64_t>(clear_items.size()), [&](std::int64_t i) {
    const LabeledImage& item = clear_items[static_cast<std::size_t>(i)];
    try {
      Image clear = read_ppm(item.path);
      const HazeDraw draw = draw_haze(params, static_cast<std::size_t>(i));
      Image t;
      std::string depth_map_path;
      if (params.depth_mode == DepthMode::SuppliedMap) {
        std::string safe_key = item.key;
        std::replace(safe_key.begin(), safe_key.end(), '/', '_');
        depth_map_path =
            (std::filesystem::path(params.depth_map_dir) / (safe_key + ".pgm")).string();
        Image depth = read_ppm(depth_map_path);
        if (!depth.same_size(clear))
          throw ShapeError("depth map size mismatch for " + item.key);
        if (params.depth_scale != 1.0)
          for (float& v : depth.data) v *= static_cast<float>(params.depth_scale);
        t = transmission_from_depth(depth, params.beta);
      } else {
        Image depth(clear.height, clear.width, 1);
        std::fill(depth.data.begin(), depth.data.end(), static_cast<float>(draw.depth));
        t = transmission_from_depth(depth, params.beta);
      }
      const std::array<float, 3> a{static_cast<float>(draw.airlight[0]),
                                   static_cast<float>(draw.airlight[1]),
                                   static_cast<float>(draw.airlight[2])};
      Image hazy = apply_scattering(clear, t, a);

      std::string safe_key = item.key;
      std::replace(safe_key.begin(), safe_key.end(), '/', '_');
      const std::string hazy_path =
          (std::filesystem::path(out_dir) / "hazy" / (safe_key + ".ppm")).string();
      write_ppm(hazy_path, hazy);

      PairedSample& s = rows[static_cast<std::size_t>(i)];
      s.key = item.key;
      s.clear_path = item.path;
      s.hazy_path = hazy_path;
      s.label = item.label;
      s.beta = params.beta;
      s.depth = params.depth_mode == DepthMode::ConstantPerImage ? draw.depth : 0.0;
      s.depth_map_path = depth_map_path;
      s.airlight = draw.airlight;
      ok[static_cast<std::size_t>(i)] = 1;
    } catch (const std::exception& e) {
      warnings[static_cast<std::size_t>(i)] = e.what();
    }
  });

  Manifest m;
  m.beta = params.beta;
  m.seed = params.rng_seed;
  m.depth_mode = params.depth_mode == DepthMode::ConstantPerImage ? "constant" : "map";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (ok[i])
      m.pairs.push_back(std::move(rows[i]));
    else
      std::cerr << "[synthesize] skipping " << clear_items[i].key << ": " << warnings[i] << "\n";
  }
  if (m.pairs.empty()) throw DatasetError("haze synthesis produced no pairs");
  return m;
}

}  // namespace dehaze
