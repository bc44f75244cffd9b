#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dehaze/checkpoint.hpp"
#include "dehaze/config.hpp"
#include "dehaze/dataset.hpp"
#include "dehaze/metrics.hpp"
#include "dehaze/ppm.hpp"
#include "dehaze/resize.hpp"
#include "dehaze/split.hpp"
#include "dehaze/train/joint.hpp"

// Test-partition evaluation: dehaze every hazy test image, score it against
// the clear ground truth, classify it with the in-system classifier, and emit
// the same measurements for the raw hazy images as a baseline row. Metrics
// are computed at the processing resolution; samples walk in sorted key
// order, so runs are reproducible.

namespace dehaze {

struct LoadedCheckpoint {
  Config config;
  int num_classes = 0;
  JointModels<float> models;
  DatasetSplit split;
};

inline LoadedCheckpoint load_checkpoint_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(fs::path(dir) / "state.json") || !fs::exists(fs::path(dir) / "params.bin"))
    throw CheckpointError("not a checkpoint directory: " + dir);
  nlohmann::json state;
  std::ifstream(fs::path(dir) / "state.json") >> state;
  if (state.value("format", -1) != 1)
    throw CheckpointError("unsupported checkpoint format version in " + dir);

  LoadedCheckpoint out;
  nlohmann::json cfg_json;
  std::ifstream(fs::path(dir) / "config.json") >> cfg_json;
  out.config.merge_json(cfg_json);
  out.num_classes = state.value("num_classes", 0);
  if (out.num_classes < 2) throw CheckpointError("checkpoint is missing the class count");

  out.models = JointModels<float>::build(out.config.model_hyper(out.num_classes),
                                         rng::derive(out.config.seed, 0x3CDE15));
  const auto params = load_archive((fs::path(dir) / "params.bin").string());
  auto prefs = out.models.all_parameters();
  restore_tensors(params, prefs, "parameter");
  auto brefs = out.models.all_buffers();
  restore_tensors(params, brefs, "buffer");
  out.models.set_training(false);
  out.split = load_split((fs::path(dir) / "split.json").string());
  return out;
}

struct EvalOptions {
  int batch_size = 8;
  int resize = 256;
  std::string dump_dir;             // when set, dehazed outputs land here as PPM
  std::string external_classifier;  // optional scorer executable (see protocol below)
};

struct SampleRecord {
  std::string key;
  double psnr = 0;
  double ssim = 0;
  int predicted = -1;
  int truth = -1;
  bool failed = false;
};

struct EvaluationRun {
  std::vector<SampleRecord> dehazed;  // one per decodable test sample
  std::vector<SampleRecord> hazy;     // baseline: hazy image scored directly
  MetricReport dehazed_agg, hazy_agg;
  std::size_t failed_count = 0;
  std::map<std::string, double> external_accuracy;
};

namespace detail {

inline MetricReport aggregate(const std::vector<SampleRecord>& rows) {
  MetricReport agg;
  if (rows.empty()) return agg;
  double ps = 0, ss = 0;
  std::size_t matches = 0;
  for (const auto& r : rows) {
    ps += r.psnr;
    ss += r.ssim;
    if (r.predicted == r.truth) ++matches;
  }
  agg.psnr = ps / static_cast<double>(rows.size());
  agg.ssim = ss / static_cast<double>(rows.size());
  agg.accuracy = 100.0 * static_cast<double>(matches) / static_cast<double>(rows.size());
  agg.sample_count = static_cast<std::int64_t>(rows.size());
  return agg;
}

inline int argmax_row(const Tensor<float>& logits, std::int64_t n) {
  const std::int64_t C = logits.dim(1);
  std::int64_t best = 0;
  for (std::int64_t c = 1; c < C; ++c)
    if (logits[n * C + c] > logits[n * C + best]) best = c;
  return static_cast<int>(best);
}

}  // namespace detail

// External scorer protocol: the executable receives one absolute image path
// per stdin line and must print one integer class label per line, in order.
inline std::vector<int> run_external_classifier(const std::string& exe,
                                                const std::vector<std::string>& paths,
                                                const std::string& work_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(work_dir);
  const std::string in_path = (fs::path(work_dir) / "scorer_paths.txt").string();
  const std::string out_path = (fs::path(work_dir) / "scorer_labels.txt").string();
  {
    std::ofstream out(in_path, std::ios::trunc);
    for (const auto& p : paths) out << fs::absolute(p).string() << "\n";
  }
  const std::string cmd = "'" + exe + "' < '" + in_path + "' > '" + out_path + "'";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw Error("external classifier failed with status " + std::to_string(rc));
  std::ifstream in(out_path);
  std::vector<int> labels;
  int v = 0;
  while (in >> v) labels.push_back(v);
  if (labels.size() != paths.size())
    throw Error("external classifier returned " + std::to_string(labels.size()) +
                " labels for " + std::to_string(paths.size()) + " images");
  return labels;
}

inline EvaluationRun evaluate(JointModels<float>& models,
                              const std::vector<PairedSample>& test_pairs,
                              const EvalOptions& opts) {
  if (test_pairs.empty()) throw DatasetError("empty test partition");
  std::vector<PairedSample> pairs = test_pairs;
  std::sort(pairs.begin(), pairs.end(),
            [](const PairedSample& a, const PairedSample& b) { return a.key < b.key; });

  models.set_training(false);
  EvaluationRun run;
  std::vector<std::string> dumped_paths;
  std::vector<int> dumped_truths;

  const int r = opts.resize;
  std::size_t start = 0;
  while (start < pairs.size()) {
    // assemble a batch of decodable samples
    std::vector<const PairedSample*> batch;
    std::vector<Image> hazy_imgs, clear_imgs;
    while (start < pairs.size() && batch.size() < static_cast<std::size_t>(opts.batch_size)) {
      const PairedSample& p = pairs[start++];
      try {
        Image h = resize_bilinear(read_ppm(p.hazy_path), r, r);
        Image c = resize_bilinear(read_ppm(p.clear_path), r, r);
        hazy_imgs.push_back(std::move(h));
        clear_imgs.push_back(std::move(c));
        batch.push_back(&p);
      } catch (const std::exception&) {
        ++run.failed_count;
      }
    }
    if (batch.empty()) continue;

    std::vector<const Image*> hp, cp;
    for (const auto& im : hazy_imgs) hp.push_back(&im);
    for (const auto& im : clear_imgs) cp.push_back(&im);
    Tensor<float> hazy_t = to_tensor<float>(hp);
    Tensor<float> clear_t = to_tensor<float>(cp);

    Tensor<float> dehazed_t = models.dnet->forward(hazy_t);
    Tensor<float> logits_dehazed = models.cnet->forward(dehazed_t);
    Tensor<float> logits_hazy = models.cnet->forward(hazy_t);

    for (std::size_t i = 0; i < batch.size(); ++i) {
      Image dehazed = from_tensor(dehazed_t, static_cast<std::int64_t>(i));
      SampleRecord d;
      d.key = batch[i]->key;
      d.truth = batch[i]->label;
      d.psnr = psnr(dehazed, clear_imgs[i]);
      d.ssim = ssim(dehazed, clear_imgs[i]);
      d.predicted = detail::argmax_row(logits_dehazed, static_cast<std::int64_t>(i));
      run.dehazed.push_back(d);

      SampleRecord h;
      h.key = batch[i]->key;
      h.truth = batch[i]->label;
      h.psnr = psnr(hazy_imgs[i], clear_imgs[i]);
      h.ssim = ssim(hazy_imgs[i], clear_imgs[i]);
      h.predicted = detail::argmax_row(logits_hazy, static_cast<std::int64_t>(i));
      run.hazy.push_back(h);

      if (!opts.dump_dir.empty()) {
        std::string safe = d.key;
        std::replace(safe.begin(), safe.end(), '/', '_');
        const std::string path =
            (std::filesystem::path(opts.dump_dir) / (safe + ".ppm")).string();
        write_ppm(path, dehazed);
        dumped_paths.push_back(path);
        dumped_truths.push_back(d.truth);
      }
    }
  }
  if (run.dehazed.empty()) throw DatasetError("no test sample could be evaluated");

  run.dehazed_agg = detail::aggregate(run.dehazed);
  run.hazy_agg = detail::aggregate(run.hazy);

  if (!opts.external_classifier.empty() && !dumped_paths.empty()) {
    const auto labels =
        run_external_classifier(opts.external_classifier, dumped_paths, opts.dump_dir);
    std::size_t matches = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == dumped_truths[i]) ++matches;
    run.external_accuracy["external"] =
        100.0 * static_cast<double>(matches) / static_cast<double>(labels.size());
  }
  return run;
}

inline void write_evaluation(const std::string& path, const EvaluationRun& run,
                             const std::string& checkpoint, const std::string& config_hash) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write evaluation report: " + path);
  nlohmann::json meta{{"record", "meta"},
                      {"checkpoint", checkpoint},
                      {"config_hash", config_hash},
                      {"samples", run.dehazed_agg.sample_count},
                      {"failed", run.failed_count}};
  out << meta.dump() << "\n";
  auto agg_row = [&](const char* name, const MetricReport& m) {
    nlohmann::json row{{"record", "aggregate"}, {"name", name},       {"psnr", m.psnr},
                       {"ssim", m.ssim},        {"accuracy", m.accuracy}, {"samples", m.sample_count}};
    out << row.dump() << "\n";
  };
  agg_row("dehazed", run.dehazed_agg);
  agg_row("hazy_baseline", run.hazy_agg);
  for (const auto& [name, acc] : run.external_accuracy) {
    nlohmann::json row{{"record", "external"}, {"name", name}, {"accuracy", acc}};
    out << row.dump() << "\n";
  }
  for (std::size_t i = 0; i < run.dehazed.size(); ++i) {
    const auto& d = run.dehazed[i];
    const auto& h = run.hazy[i];
    nlohmann::json row{{"record", "sample"},   {"key", d.key},
                       {"psnr", d.psnr},       {"ssim", d.ssim},
                       {"pred", d.predicted},  {"truth", d.truth},
                       {"hazy_psnr", h.psnr},  {"hazy_ssim", h.ssim},
                       {"hazy_pred", h.predicted}};
    out << row.dump() << "\n";
  }
}

}  // namespace dehaze
