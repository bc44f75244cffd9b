// Command-line driver: synthesize | train | dehaze | evaluate | ablate.
// Every command is fully determined by its config file and seed; re-running
// with the same inputs reproduces outputs byte for byte.
//
// Exit codes: 0 success, 1 usage/config problem, 2 runtime failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dehaze/config.hpp"
#include "dehaze/dataset.hpp"
#include "dehaze/evalharness.hpp"
#include "dehaze/report.hpp"
#include "dehaze/scattering.hpp"
#include "dehaze/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace dehaze;

namespace {

struct CommonFlags {
  std::string config_file;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "JSON config file");
    cmd->add_option("--preset", preset, "base preset: tiny or paper");
    cmd->add_option("--seed", seed, "override the root seed");
    cmd->add_option("--out-dir", out_dir, "override the output directory");
  }

  Config resolve() const {
    Config cfg = Config::load(config_file, preset);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();
    return cfg;
  }
};

std::string default_manifest(const Config& cfg) {
  return cfg.data.manifest.empty()
             ? (fs::path(cfg.resolved_out_dir()) / "manifest.jsonl").string()
             : cfg.data.manifest;
}

int cmd_synthesize(const CommonFlags& flags) {
  Config cfg = flags.resolve();
  const std::string out = cfg.resolved_out_dir();
  std::vector<LabeledImage> items;
  if (cfg.synth.source_kind == "tiny") {
    items = generate_tiny_dataset((fs::path(out) / "clear").string(), cfg.synth.classes,
                                  cfg.synth.per_class, cfg.synth.image_size,
                                  rng::derive(cfg.seed, 0x71F1));
  } else {
    items = load_labeled_folders(cfg.synth.source_dir);
  }
  Manifest manifest = synthesize_pairs(items, cfg.haze_params(), out);
  const std::string manifest_path = (fs::path(out) / "manifest.jsonl").string();
  write_manifest(manifest_path, manifest);
  std::cout << "synthesized " << manifest.pairs.size() << " pairs (beta " << manifest.beta
            << ", depth " << manifest.depth_mode << ") -> " << manifest_path << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags, bool resume) {
  Config cfg = flags.resolve();
  cfg.data.manifest = default_manifest(cfg);
  Trainer trainer(cfg);
  trainer.prepare(resume);
  trainer.run();
  std::cout << "trained " << cfg.train.variant << " for " << cfg.train.epochs << " epochs ("
            << trainer.step() << " steps); checkpoints under " << trainer.out_dir()
            << "/checkpoints\n";
  return 0;
}

int cmd_dehaze(const std::string& checkpoint, const std::vector<std::string>& inputs,
               std::string out_dir) {
  LoadedCheckpoint ckpt = load_checkpoint_dir(checkpoint);
  if (out_dir.empty()) out_dir = "dehazed";
  fs::path out_root(out_dir);
  if (out_root.is_relative()) {
    if (const char* root = std::getenv("DEHAZE_OUT_ROOT")) out_root = fs::path(root) / out_root;
  }
  fs::create_directories(out_root);
  const int r = ckpt.config.data.resize;
  for (const auto& input : inputs) {
    Image src = read_ppm(input);
    Image net_in = resize_bilinear(src, r, r);
    Tensor<float> x = to_tensor<float>({&net_in});
    Tensor<float> y = ckpt.models.dnet->forward(x);
    Image dehazed = from_tensor(y, 0);
    Image restored = resize_bilinear(dehazed, src.height, src.width);
    const std::string out_path =
        (out_root / (fs::path(input).stem().string() + "_dehazed.ppm")).string();
    write_ppm(out_path, restored);
    std::cout << input << " -> " << out_path << "\n";
  }
  return 0;
}

std::vector<PairedSample> test_pairs_for(const Manifest& manifest, const DatasetSplit& split) {
  std::map<std::string, const PairedSample*> by_key;
  for (const auto& p : manifest.pairs) by_key[p.key] = &p;
  std::vector<PairedSample> out;
  for (const auto& key : split.test) {
    auto it = by_key.find(key);
    if (it != by_key.end()) out.push_back(*it->second);
  }
  return out;
}

int cmd_evaluate(const CommonFlags& flags, std::string checkpoint) {
  Config cfg = flags.resolve();
  cfg.data.manifest = default_manifest(cfg);
  const std::string out = cfg.resolved_out_dir();
  if (checkpoint.empty()) {
    const std::string best = out + "/checkpoints/best";
    checkpoint = fs::exists(fs::path(best) / "state.json") ? best : out + "/checkpoints/last";
  }
  LoadedCheckpoint ckpt = load_checkpoint_dir(checkpoint);
  Manifest manifest = read_manifest(default_manifest(cfg));
  const auto pairs = test_pairs_for(manifest, ckpt.split);

  EvalOptions opts;
  opts.batch_size = cfg.data.batch_size;
  opts.resize = cfg.data.resize;
  opts.dump_dir = out + "/eval/dehazed";
  opts.external_classifier = cfg.eval.external_classifier;
  EvaluationRun run = evaluate(ckpt.models, pairs, opts);

  const std::string hash = Config::hash_hex(cfg.hash());
  write_evaluation(out + "/eval/evaluation.jsonl", run, checkpoint, hash);

  ExperimentReport report;
  report.config_hash = hash;
  report.seed = cfg.seed;
  report.dataset = default_manifest(cfg);
  ReportRow hazy{"hazy_baseline", run.hazy_agg.psnr, run.hazy_agg.ssim, run.hazy_agg.accuracy,
                 {},              run.hazy_agg.sample_count, checkpoint};
  ReportRow dehazed{"dehazed",      run.dehazed_agg.psnr,         run.dehazed_agg.ssim,
                    run.dehazed_agg.accuracy, run.external_accuracy, run.dehazed_agg.sample_count,
                    checkpoint};
  report.rows = {hazy, dehazed};
  std::cout << render_report_table(report);
  std::cout << "wrote " << out << "/eval/evaluation.jsonl (failed samples: " << run.failed_count
            << ")\n";
  return 0;
}

int cmd_ablate(const CommonFlags& flags) {
  Config base = flags.resolve();
  base.data.manifest = default_manifest(base);
  const std::string out = base.resolved_out_dir();
  const std::vector<std::string> variants{"DNet", "DNet+CCGAN", "DNet+CNet", "DNet+CCGAN+CNet"};

  ExperimentReport report;
  report.config_hash = Config::hash_hex(base.hash());
  report.seed = base.seed;
  report.dataset = base.data.manifest;
  report.note = "four-way ablation, shared seed";

  bool any_failed = false;
  bool have_baseline = false;
  for (const auto& name : variants) {
    Config cfg = base;
    cfg.train.variant = name;
    std::string safe = name;
    std::replace(safe.begin(), safe.end(), '+', '_');
    cfg.out_dir = (fs::path(out) / "ablation" / safe).string();
    ReportRow row;
    row.name = name;
    try {
      Trainer trainer(cfg);
      trainer.prepare(false);
      trainer.run();
      const std::string ckpt_dir =
          fs::exists(fs::path(trainer.best_dir()) / "state.json") ? trainer.best_dir()
                                                                  : trainer.last_dir();
      LoadedCheckpoint ckpt = load_checkpoint_dir(ckpt_dir);
      Manifest manifest = read_manifest(cfg.data.manifest);
      EvalOptions opts;
      opts.batch_size = cfg.data.batch_size;
      opts.resize = cfg.data.resize;
      EvaluationRun run = evaluate(ckpt.models, test_pairs_for(manifest, ckpt.split), opts);
      row.psnr = run.dehazed_agg.psnr;
      row.ssim = run.dehazed_agg.ssim;
      row.acc_cnet = run.dehazed_agg.accuracy;
      row.samples = run.dehazed_agg.sample_count;
      row.checkpoint = ckpt_dir;
      if (!have_baseline) {
        report.rows.insert(report.rows.begin(),
                           ReportRow{"hazy_baseline", run.hazy_agg.psnr, run.hazy_agg.ssim,
                                     run.hazy_agg.accuracy, {}, run.hazy_agg.sample_count,
                                     ckpt_dir});
        have_baseline = true;
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      any_failed = true;
    }
    report.rows.push_back(row);
  }

  write_report(out + "/ablation/report.jsonl", report);
  const std::string table = render_report_table(report);
  std::ofstream(out + "/ablation/report.txt") << table;
  std::cout << table;
  return any_failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint dehazing + classification experiments"};
  app.require_subcommand(1);

  CommonFlags synth_flags, train_flags, eval_flags, ablate_flags;
  bool resume = false;
  std::string checkpoint, dehaze_out;
  std::vector<std::string> inputs;

  auto* synth = app.add_subcommand("synthesize", "generate clear/hazy pairs and a manifest");
  synth_flags.attach(synth);

  auto* train = app.add_subcommand("train", "train a variant from a manifest");
  train_flags.attach(train);
  train->add_flag("--resume", resume, "continue from the last checkpoint");

  auto* dehaze_cmd = app.add_subcommand("dehaze", "run the generator on images");
  dehaze_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  dehaze_cmd->add_option("--out-dir", dehaze_out, "output directory (default: dehazed)");
  dehaze_cmd->add_option("inputs", inputs, "input images (PPM)")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on the test partition");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory (default: best/last)");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate all four variants");
  ablate_flags.attach(ablate);

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synthesize(synth_flags);
    if (train->parsed()) return cmd_train(train_flags, resume);
    if (dehaze_cmd->parsed()) return cmd_dehaze(checkpoint, inputs, dehaze_out);
    if (eval_cmd->parsed()) return cmd_evaluate(eval_flags, checkpoint);
    if (ablate->parsed()) return cmd_ablate(ablate_flags);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
