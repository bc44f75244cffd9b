#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dehaze/common.hpp"
#include "dehaze/image.hpp"
#include "dehaze/ppm.hpp"
#include "dehaze/rng.hpp"

namespace dehaze {

struct LabeledImage {
  std::string key;   // unique within a dataset
  std::string path;  // clear image on disk
  int label = 0;     // class index in [0, C)
};

// One hazy/clear training pair. The two images share the identity key; the
// hazy member always inherits the clear source's split partition.
struct PairedSample {
  std::string key;
  std::string clear_path;
  std::string hazy_path;
  int label = 0;
  double beta = 0.0;
  double depth = 0.0;           // constant-depth mode
  std::string depth_map_path;   // supplied-map mode (empty otherwise)
  std::array<double, 3> airlight{0, 0, 0};
};

struct Manifest {
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::string depth_mode;
  std::vector<PairedSample> pairs;
};

inline void write_manifest(const std::string& path, const Manifest& m) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  nlohmann::json meta{{"record", "meta"},
                      {"beta", m.beta},
                      {"seed", m.seed},
                      {"depth_mode", m.depth_mode},
                      {"pairs", m.pairs.size()}};
  out << meta.dump() << "\n";
  for (const auto& s : m.pairs) {
    nlohmann::json row{{"record", "pair"}, {"key", s.key},
                       {"clear", s.clear_path}, {"hazy", s.hazy_path},
                       {"label", s.label},      {"beta", s.beta},
                       {"airlight", s.airlight}};
    if (s.depth_map_path.empty())
      row["depth"] = s.depth;
    else
      row["depth_map"] = s.depth_map_path;
    out << row.dump() << "\n";
  }
  if (!out) throw IoError("short write: " + path);
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json row = nlohmann::json::parse(line);
    if (row.value("record", "") == "meta") {
      m.beta = row.value("beta", 0.0);
      m.seed = row.value("seed", std::uint64_t(0));
      m.depth_mode = row.value("depth_mode", "");
      continue;
    }
    PairedSample s;
    s.key = row.at("key").get<std::string>();
    s.clear_path = row.at("clear").get<std::string>();
    s.hazy_path = row.at("hazy").get<std::string>();
    s.label = row.at("label").get<int>();
    s.beta = row.value("beta", 0.0);
    s.depth = row.value("depth", 0.0);
    s.depth_map_path = row.value("depth_map", "");
    auto a = row.at("airlight");
    s.airlight = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
    m.pairs.push_back(std::move(s));
  }
  if (m.pairs.empty()) throw DatasetError("manifest has no pairs: " + path);
  return m;
}

// Directory-of-class-folders ingestion: every subdirectory of `root` is one
// class (sorted name order defines the label index), every *.ppm inside is
// one sample. Keys are "<class>/<stem>".
inline std::vector<LabeledImage> load_labeled_folders(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DatasetError("not a directory: " + root);
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw DatasetError("no class folders under " + root);

  std::vector<LabeledImage> items;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(fs::path(root) / classes[label]))
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      items.push_back({classes[label] + "/" + f.stem().string(), f.string(),
                       static_cast<int>(label)});
  }
  if (items.empty()) throw DatasetError("no .ppm files under " + root);
  return items;
}

// ---------------------------------------------------------------------------
// Tiny synthetic class dataset: colored geometric shapes (one shape type per
// class) over textured gradient backgrounds. Self-contained substitute for an
// external photo collection so experiments run anywhere.
// ---------------------------------------------------------------------------

namespace detail {

inline void draw_tiny_image(Image& img, int shape_kind, rng::Engine& eng) {
  const int h = img.height, w = img.width;
  // Gradient background between two random colors plus a low-frequency wave.
  std::array<float, 3> c0, c1;
  for (int c = 0; c < 3; ++c) {
    c0[c] = static_cast<float>(rng::uniform(eng, 0.05, 0.95));
    c1[c] = static_cast<float>(rng::uniform(eng, 0.05, 0.95));
  }
  const double ang = rng::uniform(eng, 0.0, 2.0 * 3.14159265358979323846);
  const double gx = std::cos(ang), gy = std::sin(ang);
  const double freq = rng::uniform(eng, 2.0, 6.0);
  const double phase = rng::uniform(eng, 0.0, 2.0 * 3.14159265358979323846);
  const double tex_amp = 0.06;

  std::array<float, 3> sc;
  for (int c = 0; c < 3; ++c) sc[c] = static_cast<float>(rng::uniform(eng, 0.0, 1.0));
  // Keep the shape bright enough to stay visible under haze.
  const float mx = std::max({sc[0], sc[1], sc[2]});
  if (mx < 0.5f)
    for (int c = 0; c < 3; ++c) sc[c] = std::min(1.f, sc[c] + (0.6f - mx));

  const double cx = rng::uniform(eng, 0.35, 0.65) * w;
  const double cy = rng::uniform(eng, 0.35, 0.65) * h;
  const double r = rng::uniform(eng, 0.18, 0.30) * std::min(h, w);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = (gx * x / w + gy * y / h + 1.0) * 0.5;
      const double tex = tex_amp * std::sin(freq * 2.0 * 3.14159265358979323846 *
                                                (0.7 * x / w + 0.3 * y / h) + phase);
      const double dx = x - cx, dy = y - cy;
      bool inside = false;
      switch (shape_kind % 4) {
        case 0:  // disc
          inside = dx * dx + dy * dy <= r * r;
          break;
        case 1:  // square
          inside = std::max(std::abs(dx), std::abs(dy)) <= 0.9 * r;
          break;
        case 2:  // upward triangle
          inside = dy <= 0.8 * r && dy >= -0.8 * r &&
                   std::abs(dx) <= (dy + 0.8 * r) * 0.65;
          break;
        default:  // plus sign
          inside = (std::abs(dx) <= 0.35 * r && std::abs(dy) <= r) ||
                   (std::abs(dy) <= 0.35 * r && std::abs(dx) <= r);
          break;
      }
      for (int c = 0; c < 3; ++c) {
        float v = inside ? sc[c]
                         : static_cast<float>(c0[c] * (1.0 - u) + c1[c] * u + tex);
        img.at(c, y, x) = std::min(1.f, std::max(0.f, v));
      }
    }
  }
}

}  // namespace detail

// Writes `classes` x `per_class` clear PPM images under out_dir/class_<c>/ and
// returns their records. Fully determined by `seed`.
inline std::vector<LabeledImage> generate_tiny_dataset(const std::string& out_dir, int classes,
                                                       int per_class, int size,
                                                       std::uint64_t seed) {
  if (classes < 2 || per_class < 1 || size < 32)
    throw InvalidParameterError("tiny dataset needs >=2 classes, >=1 image, size >=32");
  std::vector<LabeledImage> items;
  for (int cls = 0; cls < classes; ++cls) {
    char clsname[32];
    std::snprintf(clsname, sizeof(clsname), "class_%02d", cls);
    for (int i = 0; i < per_class; ++i) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "img_%03d", i);
      Image img(size, size, 3);
      auto eng = rng::engine(rng::derive(seed, static_cast<std::uint64_t>(cls) + 1,
                                         static_cast<std::uint64_t>(i) + 1));
      detail::draw_tiny_image(img, cls, eng);
      const std::string path =
          (std::filesystem::path(out_dir) / clsname / (std::string(stem) + ".ppm")).string();
      write_ppm(path, img);
      items.push_back({std::string(clsname) + "/" + stem, path, cls});
    }
  }
  return items;
}

}  // namespace dehaze
