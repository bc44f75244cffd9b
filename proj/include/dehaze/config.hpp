#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dehaze/common.hpp"
#include "dehaze/models/cnet.hpp"
#include "dehaze/models/dnet.hpp"
#include "dehaze/objective.hpp"
#include "dehaze/scattering.hpp"
#include "dehaze/train/joint.hpp"

// Experiment configuration. One file fully determines a run: the same config
// reproduces the same dataset, split, initialization, training trajectory and
// reports, byte for byte. Precedence: built-in defaults < preset < config
// file < command-line overrides.

namespace dehaze {

struct Config {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string preset = "tiny";

  struct Synth {
    std::string source_kind = "tiny";  // "tiny" | "folders"
    std::string source_dir;            // folders mode: directory of class folders
    int classes = 4;
    int per_class = 32;
    int image_size = 256;
    double beta = 2.0;
    std::string depth_mode = "constant";  // "constant" | "map"
    double depth_min = 0.1;
    double depth_max = 1.0;
    std::string depth_map_dir;
    double depth_scale = 1.0;
    std::string airlight_mode = "uniform";  // "uniform" | "fixed"
    double airlight_min = 0.7;
    double airlight_max = 1.0;
    double airlight_fixed = 0.9;
  } synth;

  struct Data {
    std::string manifest;  // produced by `synthesize`
    double val_fraction = 0.2;
    double test_fraction = 0.25;
    int resize = 256;
    int batch_size = 8;
  } data;

  struct Model {
    double width_scale = 0.125;
    double leaky_slope = 0.2;
    std::string skip_mode = "concat";  // "concat" | "add"
    int disc_hidden = 256;
    std::string cnet_backbone = "small";  // "small" | "resnet50"
    int num_classes = 0;                  // 0: derive from the manifest labels
  } model;

  struct Train {
    std::string variant = "DNet+CCGAN+CNet";
    double learning_rate = 1e-3;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    LossWeights weights;  // a=500, b=1, c=1
    int epochs = 10;
    bool non_saturating_gan = false;
    int checkpoint_every = 0;  // extra mid-epoch saves every N steps; 0 = epoch ends only
  } train;

  struct Eval {
    std::string external_classifier;  // optional scorer executable
  } eval;

  void validate() const {
    if (train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (train.learning_rate <= 0) throw ConfigError("train.learning_rate must be positive");
    if (data.batch_size < 2) throw ConfigError("data.batch_size must be >= 2");
    if (data.resize % 256 != 0) throw ConfigError("data.resize must be a multiple of 256");
    if (model.width_scale <= 0) throw ConfigError("model.width_scale must be positive");
    if (synth.source_kind != "tiny" && synth.source_kind != "folders")
      throw ConfigError("synth.source_kind must be 'tiny' or 'folders'");
    train.weights.validate();
    parse_variant(train.variant);
    skip_mode_enum();
    backbone_enum();
  }

  SkipMode skip_mode_enum() const {
    if (model.skip_mode == "concat") return SkipMode::Concat;
    if (model.skip_mode == "add") return SkipMode::Add;
    throw ConfigError("model.skip_mode must be 'concat' or 'add'");
  }

  CNetBackbone backbone_enum() const {
    if (model.cnet_backbone == "small") return CNetBackbone::SmallResidual;
    if (model.cnet_backbone == "resnet50") return CNetBackbone::Residual50;
    throw ConfigError("model.cnet_backbone must be 'small' or 'resnet50'");
  }

  HazeParams haze_params() const {
    HazeParams p;
    p.beta = synth.beta;
    p.depth_mode = synth.depth_mode == "map" ? DepthMode::SuppliedMap : DepthMode::ConstantPerImage;
    if (synth.depth_mode != "map" && synth.depth_mode != "constant")
      throw ConfigError("synth.depth_mode must be 'constant' or 'map'");
    p.depth_min = synth.depth_min;
    p.depth_max = synth.depth_max;
    p.depth_map_dir = synth.depth_map_dir;
    p.depth_scale = synth.depth_scale;
    if (synth.airlight_mode == "fixed") {
      p.airlight_mode = AirlightMode::Fixed;
      p.airlight_fixed = {synth.airlight_fixed, synth.airlight_fixed, synth.airlight_fixed};
    } else if (synth.airlight_mode == "uniform") {
      p.airlight_mode = AirlightMode::UniformPerChannel;
    } else {
      throw ConfigError("synth.airlight_mode must be 'uniform' or 'fixed'");
    }
    p.airlight_min = synth.airlight_min;
    p.airlight_max = synth.airlight_max;
    p.rng_seed = rng::derive(seed, 0x4A2E);
    return p;
  }

  ModelHyper model_hyper(int num_classes) const {
    ModelHyper h;
    h.width_scale = model.width_scale;
    h.leaky_slope = model.leaky_slope;
    h.skip_mode = skip_mode_enum();
    h.disc_hidden = model.disc_hidden;
    h.cnet_backbone = backbone_enum();
    h.num_classes = num_classes;
    return h;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"seed", seed},
        {"out_dir", out_dir},
        {"preset", preset},
        {"synth",
         {{"source_kind", synth.source_kind}, {"source_dir", synth.source_dir},
          {"classes", synth.classes},         {"per_class", synth.per_class},
          {"image_size", synth.image_size},   {"beta", synth.beta},
          {"depth_mode", synth.depth_mode},   {"depth_min", synth.depth_min},
          {"depth_max", synth.depth_max},     {"depth_map_dir", synth.depth_map_dir},
          {"depth_scale", synth.depth_scale}, {"airlight_mode", synth.airlight_mode},
          {"airlight_min", synth.airlight_min}, {"airlight_max", synth.airlight_max},
          {"airlight_fixed", synth.airlight_fixed}}},
        {"data",
         {{"manifest", data.manifest},
          {"val_fraction", data.val_fraction},
          {"test_fraction", data.test_fraction},
          {"resize", data.resize},
          {"batch_size", data.batch_size}}},
        {"model",
         {{"width_scale", model.width_scale},
          {"leaky_slope", model.leaky_slope},
          {"skip_mode", model.skip_mode},
          {"disc_hidden", model.disc_hidden},
          {"cnet_backbone", model.cnet_backbone},
          {"num_classes", model.num_classes}}},
        {"train",
         {{"variant", train.variant},
          {"learning_rate", train.learning_rate},
          {"adam_beta1", train.adam_beta1},
          {"adam_beta2", train.adam_beta2},
          {"weights", {{"a", train.weights.a}, {"b", train.weights.b}, {"c", train.weights.c}}},
          {"epochs", train.epochs},
          {"non_saturating_gan", train.non_saturating_gan},
          {"checkpoint_every", train.checkpoint_every}}},
        {"eval", {{"external_classifier", eval.external_classifier}}}};
  }

  void merge_json(const nlohmann::json& j) {
    auto get = [](const nlohmann::json& o, const char* key, auto& slot) {
      if (o.contains(key)) slot = o.at(key).get<std::decay_t<decltype(slot)>>();
    };
    get(j, "seed", seed);
    get(j, "out_dir", out_dir);
    if (j.contains("synth")) {
      const auto& o = j.at("synth");
      get(o, "source_kind", synth.source_kind);
      get(o, "source_dir", synth.source_dir);
      get(o, "classes", synth.classes);
      get(o, "per_class", synth.per_class);
      get(o, "image_size", synth.image_size);
      get(o, "beta", synth.beta);
      get(o, "depth_mode", synth.depth_mode);
      get(o, "depth_min", synth.depth_min);
      get(o, "depth_max", synth.depth_max);
      get(o, "depth_map_dir", synth.depth_map_dir);
      get(o, "depth_scale", synth.depth_scale);
      get(o, "airlight_mode", synth.airlight_mode);
      get(o, "airlight_min", synth.airlight_min);
      get(o, "airlight_max", synth.airlight_max);
      get(o, "airlight_fixed", synth.airlight_fixed);
    }
    if (j.contains("data")) {
      const auto& o = j.at("data");
      get(o, "manifest", data.manifest);
      get(o, "val_fraction", data.val_fraction);
      get(o, "test_fraction", data.test_fraction);
      get(o, "resize", data.resize);
      get(o, "batch_size", data.batch_size);
    }
    if (j.contains("model")) {
      const auto& o = j.at("model");
      get(o, "width_scale", model.width_scale);
      get(o, "leaky_slope", model.leaky_slope);
      get(o, "skip_mode", model.skip_mode);
      get(o, "disc_hidden", model.disc_hidden);
      get(o, "cnet_backbone", model.cnet_backbone);
      get(o, "num_classes", model.num_classes);
    }
    if (j.contains("train")) {
      const auto& o = j.at("train");
      get(o, "variant", train.variant);
      get(o, "learning_rate", train.learning_rate);
      get(o, "adam_beta1", train.adam_beta1);
      get(o, "adam_beta2", train.adam_beta2);
      if (o.contains("weights")) {
        get(o.at("weights"), "a", train.weights.a);
        get(o.at("weights"), "b", train.weights.b);
        get(o.at("weights"), "c", train.weights.c);
      }
      get(o, "epochs", train.epochs);
      get(o, "non_saturating_gan", train.non_saturating_gan);
      get(o, "checkpoint_every", train.checkpoint_every);
    }
    if (j.contains("eval")) get(j.at("eval"), "external_classifier", eval.external_classifier);
  }

  // "paper" switches every dial the source protocol pins to the full-scale
  // values; "tiny" is the desk-scale preset the acceptance experiments use.
  void apply_preset(const std::string& name) {
    preset = name;
    if (name == "tiny") {
      model.width_scale = 0.125;
      model.cnet_backbone = "small";
      synth.source_kind = "tiny";
      synth.classes = 4;
      synth.per_class = 32;
      train.epochs = 10;
      train.learning_rate = 1e-3;
      data.batch_size = 4;
    } else if (name == "paper") {
      model.width_scale = 1.0;
      model.cnet_backbone = "resnet50";
      synth.source_kind = "folders";
      synth.beta = 2.0;
      train.learning_rate = 2e-4;
      train.weights = LossWeights{500.0, 1.0, 1.0};
      train.epochs = 100;
      data.batch_size = 8;
      data.val_fraction = 0.2;
    } else {
      throw ConfigError("unknown preset '" + name + "' (expected tiny or paper)");
    }
  }

  static Config load(const std::string& file, const std::string& preset_name) {
    Config cfg;
    cfg.apply_preset(preset_name.empty() ? "tiny" : preset_name);
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw ConfigError("cannot open config file: " + file);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const std::exception& e) {
        throw ConfigError("config parse failure in " + file + ": " + e.what());
      }
      if (j.contains("preset") && preset_name.empty())
        cfg.apply_preset(j.at("preset").get<std::string>());
      cfg.merge_json(j);
    }
    return cfg;
  }

  // Root for relative output paths, overridable via environment.
  std::string resolved_out_dir() const {
    std::filesystem::path p(out_dir);
    if (p.is_relative()) {
      if (const char* root = std::getenv("DEHAZE_OUT_ROOT")) p = std::filesystem::path(root) / p;
    }
    return p.string();
  }

  std::uint64_t hash() const { return fnv1a64(to_json().dump()); }

  // Hash with volatile fields (schedule length) removed: a resumed run may
  // extend epochs but must otherwise match the stored configuration.
  std::uint64_t resume_hash() const {
    nlohmann::json j = to_json();
    j["train"].erase("epochs");
    j.erase("out_dir");
    return fnv1a64(j.dump());
  }

  static std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

  static std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

}  // namespace dehaze
