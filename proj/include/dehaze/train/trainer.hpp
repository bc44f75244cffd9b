#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dehaze/checkpoint.hpp"
#include "dehaze/config.hpp"
#include "dehaze/dataset.hpp"
#include "dehaze/image.hpp"
#include "dehaze/metrics.hpp"
#include "dehaze/ppm.hpp"
#include "dehaze/resize.hpp"
#include "dehaze/split.hpp"
#include "dehaze/train/joint.hpp"

// Joint training loop: per batch, one discriminator ascent step (when the
// adversarial term is active) with generator-side parameters frozen, then one
// generator-side descent step on the combined loss with the discriminator
// frozen. Metrics stream to an append-only line-delimited log; checkpoints
// save atomically and a resumed run continues bit-identically.

namespace dehaze {

struct StepRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  LossBreakdown losses;
  double d_value = 0.0;
};

class Trainer {
 public:
  explicit Trainer(Config cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    variant_ = parse_variant(cfg_.train.variant);
    flags_ = VariantFlags::of(variant_);
  }

  const std::string& out_dir() const { return out_; }
  std::string last_dir() const { return out_ + "/checkpoints/last"; }
  std::string best_dir() const { return out_ + "/checkpoints/best"; }
  std::string metrics_path() const { return out_ + "/metrics.jsonl"; }

  void prepare(bool resume = false) {
    out_ = cfg_.resolved_out_dir();
    std::filesystem::create_directories(out_ + "/checkpoints");

    manifest_ = read_manifest(cfg_.data.manifest);
    std::sort(manifest_.pairs.begin(), manifest_.pairs.end(),
              [](const PairedSample& a, const PairedSample& b) { return a.key < b.key; });
    for (std::size_t i = 0; i < manifest_.pairs.size(); ++i)
      index_of_[manifest_.pairs[i].key] = i;

    num_classes_ = cfg_.model.num_classes;
    if (num_classes_ == 0) {
      int mx = 0;
      for (const auto& p : manifest_.pairs) mx = std::max(mx, p.label);
      num_classes_ = mx + 1;
    }
    if (num_classes_ < 2) throw DatasetError("manifest carries fewer than two classes");

    models_ = JointModels<float>::build(cfg_.model_hyper(num_classes_),
                                        rng::derive(cfg_.seed, 0x3CDE15));
    adam_g_ = std::make_unique<nn::Adam<float>>(cfg_.train.learning_rate, cfg_.train.adam_beta1,
                                                cfg_.train.adam_beta2);
    adam_d_ = std::make_unique<nn::Adam<float>>(cfg_.train.learning_rate, cfg_.train.adam_beta1,
                                                cfg_.train.adam_beta2);
    g_params_ = models_.generator_side_parameters(flags_);
    d_params_ = models_.discriminator_parameters();
    adam_g_->attach(g_params_);
    adam_d_->attach(d_params_);

    if (resume) {
      restore_checkpoint(last_dir());
    } else {
      std::vector<LabeledImage> clear_items;
      for (const auto& p : manifest_.pairs) clear_items.push_back({p.key, p.clear_path, p.label});
      split_ = build_split(clear_items, cfg_.data.val_fraction, cfg_.seed,
                           cfg_.data.test_fraction);
      split_ = enforce_pairing(split_, manifest_.pairs);
      save_split(out_ + "/split.json", split_);
      std::ofstream log(metrics_path(), std::ios::trunc);
      // run_hash ignores schedule length and output location, so a resumed
      // log stays byte-identical to an uninterrupted one
      nlohmann::json meta{{"record", "meta"},
                          {"run_hash", Config::hash_hex(cfg_.resume_hash())},
                          {"variant", cfg_.train.variant},
                          {"batch_size", cfg_.data.batch_size},
                          {"seed", cfg_.seed}};
      log << meta.dump() << "\n";
    }
    prepared_ = true;
  }

  // (epoch_, batch_index_) always name the next batch to run, so a restored
  // checkpoint continues exactly where the saved run would have.
  void run() {
    if (!prepared_) prepare(false);
    while (epoch_ < cfg_.train.epochs) {
      const auto batches =
          epoch_batches(split_.train.size(), static_cast<std::size_t>(cfg_.data.batch_size),
                        cfg_.seed, static_cast<std::uint64_t>(epoch_));
      for (std::size_t bi = static_cast<std::size_t>(batch_index_); bi < batches.size(); ++bi) {
        StepRecord rec = step_batch(batches[bi]);
        append_metrics(rec);
        batch_index_ = static_cast<std::int64_t>(bi) + 1;
        if (cfg_.train.checkpoint_every > 0 && rec.step % cfg_.train.checkpoint_every == 0)
          save_checkpoint(last_dir());
      }
      run_validation();
      ++epoch_;
      batch_index_ = 0;
      save_checkpoint(last_dir());
      std::cerr << "[train] epoch " << epoch_ << "/" << cfg_.train.epochs << " step " << step_
                << " val_psnr " << last_val_psnr_ << "\n";
    }
    if (!std::filesystem::exists(best_dir())) save_checkpoint(best_dir());
  }

  // One optimization step on explicit train-partition positions (testing
  // hook; `run` drives it with seeded permutations).
  StepRecord step_batch(const std::vector<std::size_t>& positions) {
    std::vector<std::string> keys;
    Tensor<float> hazy, clear;
    std::vector<int> labels;
    load_batch(split_.train, positions, hazy, clear, labels, &keys);

    models_.set_training(true);
    StepRecord rec;
    const bool gan_active = flags_.ccgan && cfg_.train.weights.b != 0;
    if (gan_active) rec.d_value = discriminator_step(models_, *adam_d_, hazy, clear);

    nn::zero_grads(g_params_);
    GeneratorPass<float> pass =
        generator_loss(models_, hazy, clear, labels, cfg_.train.weights, flags_,
                       cfg_.train.non_saturating_gan, /*do_backward=*/true);
    if (!pass.losses.finite() || !std::isfinite(rec.d_value)) {
      std::ostringstream os;
      os << "non-finite loss (mse=" << pass.losses.mse << " gan=" << pass.losses.gan
         << " ce=" << pass.losses.ce << " d=" << rec.d_value << ") at step " << step_ + 1
         << "; batch keys:";
      for (const auto& k : keys) os << " " << k;
      throw NumericError(os.str());
    }
    adam_g_->step();

    ++step_;
    rec.step = step_;
    rec.epoch = epoch_;
    rec.losses = pass.losses;
    return rec;
  }

  // Mean dehazed-vs-clear quality over a partition, in evaluation mode.
  double partition_psnr(const std::vector<std::string>& keys, double* mean_ce = nullptr) {
    if (keys.empty()) throw DatasetError("empty partition");
    models_.set_training(false);
    double psnr_acc = 0, ce_acc = 0;
    std::size_t count = 0;
    const std::size_t bs = static_cast<std::size_t>(cfg_.data.batch_size);
    for (std::size_t start = 0; start < keys.size(); start += bs) {
      const std::size_t end = std::min(keys.size(), start + bs);
      std::vector<std::size_t> positions(end - start);
      for (std::size_t i = start; i < end; ++i) positions[i - start] = i;
      Tensor<float> hazy, clear;
      std::vector<int> labels;
      load_batch(keys, positions, hazy, clear, labels, nullptr);
      Tensor<float> dehazed = models_.dnet->forward(hazy);
      for (std::size_t i = 0; i < positions.size(); ++i) {
        Image d = from_tensor(dehazed, static_cast<std::int64_t>(i));
        Image c = from_tensor(clear, static_cast<std::int64_t>(i));
        psnr_acc += psnr(d, c);
        ++count;
      }
      if (mean_ce && flags_.cnet) {
        Tensor<float> probs = softmax(models_.cnet->forward(dehazed));
        ce_acc += ce_loss_batch(probs, labels) * static_cast<double>(positions.size());
      }
    }
    models_.set_training(true);
    if (mean_ce) *mean_ce = flags_.cnet ? ce_acc / static_cast<double>(count) : 0.0;
    return psnr_acc / static_cast<double>(count);
  }

  JointModels<float>& models() { return models_; }
  const Config& config() const { return cfg_; }
  const DatasetSplit& split() const { return split_; }
  const Manifest& manifest() const { return manifest_; }
  int num_classes() const { return num_classes_; }
  std::int64_t step() const { return step_; }
  VariantFlags flags() const { return flags_; }
  std::uint64_t generator_side_checksum() { return nn::param_checksum(g_params_); }
  std::uint64_t discriminator_checksum() { return nn::param_checksum(d_params_); }
  std::uint64_t checksum_of(std::vector<nn::ParamRef<float>> ps) {
    return nn::param_checksum(ps);
  }

  // Loads (hazy, clear, labels) for `positions` into NCHW batches at the
  // configured processing resolution.
  void load_batch(const std::vector<std::string>& keys,
                  const std::vector<std::size_t>& positions, Tensor<float>& hazy,
                  Tensor<float>& clear, std::vector<int>& labels,
                  std::vector<std::string>* out_keys) {
    if (positions.empty()) throw DatasetError("empty batch");
    const int r = cfg_.data.resize;
    hazy = Tensor<float>({static_cast<std::int64_t>(positions.size()), 3, r, r});
    clear = Tensor<float>({static_cast<std::int64_t>(positions.size()), 3, r, r});
    labels.assign(positions.size(), 0);
    if (out_keys) out_keys->assign(positions.size(), "");
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const std::string& key = keys.at(positions[i]);
      const PairedSample& pair = manifest_.pairs.at(index_of_.at(key));
      Image h = resize_bilinear(read_ppm(pair.hazy_path), r, r);
      Image c = resize_bilinear(read_ppm(pair.clear_path), r, r);
      std::copy(h.data.begin(), h.data.end(), hazy.data() + static_cast<std::int64_t>(i) * 3 * r * r);
      std::copy(c.data.begin(), c.data.end(), clear.data() + static_cast<std::int64_t>(i) * 3 * r * r);
      labels[i] = pair.label;
      if (out_keys) (*out_keys)[i] = key;
    }
  }

  void save_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path stage = checkpoint_stage_dir(dir);

    std::vector<NamedTensor> params;
    for (auto& p : models_.all_parameters()) params.push_back({p.name, p.value});
    for (auto& b : models_.all_buffers()) params.push_back({b.name, b.value});
    save_archive((stage / "params.bin").string(), params);

    std::vector<NamedTensor> opt;
    collect_adam(opt, "adam_g", *adam_g_);
    collect_adam(opt, "adam_d", *adam_d_);
    save_archive((stage / "optimizer.bin").string(), opt);

    nlohmann::json state{{"format", 1},
                         {"step", step_},
                         {"epoch", epoch_},
                         {"batch_index", batch_index_},
                         {"best_val_psnr", best_val_psnr_},
                         {"best_val_ce", best_val_ce_},
                         {"adam_g_steps", adam_g_->step_count()},
                         {"adam_d_steps", adam_d_->step_count()},
                         {"num_classes", num_classes_},
                         {"variant", cfg_.train.variant},
                         {"resume_hash", Config::hash_hex(cfg_.resume_hash())}};
    std::ofstream(stage / "state.json") << state.dump(2) << "\n";
    std::ofstream(stage / "config.json") << cfg_.to_json().dump(2) << "\n";
    save_split((stage / "split.json").string(), split_);
    checkpoint_publish_dir(dir);
  }

 private:
  static void collect_adam(std::vector<NamedTensor>& out, const std::string& tag,
                           nn::Adam<float>& adam) {
    const auto& refs = adam.params();
    for (std::size_t i = 0; i < refs.size(); ++i) {
      out.push_back({tag + ".m." + refs[i].name, &adam.first_moments()[i]});
      out.push_back({tag + ".v." + refs[i].name, &adam.second_moments()[i]});
    }
  }

  void restore_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(fs::path(dir) / "state.json"))
      throw CheckpointError("no checkpoint to resume at " + dir);
    nlohmann::json state;
    std::ifstream(fs::path(dir) / "state.json") >> state;
    if (state.value("format", -1) != 1)
      throw CheckpointError("unsupported checkpoint format in " + dir);
    if (state.value("resume_hash", "") != Config::hash_hex(cfg_.resume_hash()))
      throw ConfigError("resume config does not match the checkpointed run");

    const auto params = load_archive((fs::path(dir) / "params.bin").string());
    auto prefs = models_.all_parameters();
    restore_tensors(params, prefs, "parameter");
    auto brefs = models_.all_buffers();
    restore_tensors(params, brefs, "buffer");

    const auto opt = load_archive((fs::path(dir) / "optimizer.bin").string());
    restore_adam(opt, "adam_g", *adam_g_, state.value("adam_g_steps", std::int64_t(0)));
    restore_adam(opt, "adam_d", *adam_d_, state.value("adam_d_steps", std::int64_t(0)));

    step_ = state.value("step", std::int64_t(0));
    epoch_ = state.value("epoch", std::int64_t(0));
    batch_index_ = state.value("batch_index", std::int64_t(0));
    best_val_psnr_ = state.value("best_val_psnr", -1.0);
    best_val_ce_ = state.value("best_val_ce", 1e30);
    split_ = load_split((fs::path(dir) / "split.json").string());
    save_split(out_ + "/split.json", split_);
    truncate_metrics_log();
  }

  void restore_adam(const std::map<std::string, Tensor<float>>& archive, const std::string& tag,
                    nn::Adam<float>& adam, std::int64_t steps) {
    const auto& refs = adam.params();
    std::vector<nn::ParamRef<float>> m_refs, v_refs;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      m_refs.push_back({tag + ".m." + refs[i].name, &adam.first_moments()[i], nullptr});
      v_refs.push_back({tag + ".v." + refs[i].name, &adam.second_moments()[i], nullptr});
    }
    restore_tensors(archive, m_refs, "optimizer");
    restore_tensors(archive, v_refs, "optimizer");
    adam.set_step_count(steps);
  }

  // Drops any metric rows past the checkpoint (a crashed run may have logged
  // steps that were never saved), so the resumed log matches an uninterrupted
  // one byte for byte.
  void truncate_metrics_log() {
    std::ifstream in(metrics_path());
    if (!in) throw CheckpointError("metrics log missing for resume: " + metrics_path());
    std::vector<std::string> keep;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json row = nlohmann::json::parse(line);
      if (row.value("record", "") == "meta" || row.value("step", std::int64_t(0)) <= step_)
        keep.push_back(line);
    }
    in.close();
    std::ofstream out(metrics_path(), std::ios::trunc);
    for (const auto& l : keep) out << l << "\n";
  }

  void append_metrics(const StepRecord& rec) {
    std::ofstream log(metrics_path(), std::ios::app);
    nlohmann::json row{{"step", rec.step},
                       {"epoch", rec.epoch},
                       {"mse", rec.losses.mse},
                       {"gan", rec.losses.gan},
                       {"ce", rec.losses.ce},
                       {"total", rec.losses.total},
                       {"d_value", rec.d_value},
                       {"weights",
                        {{"a", cfg_.train.weights.a},
                         {"b", cfg_.train.weights.b},
                         {"c", cfg_.train.weights.c}}}};
    log << row.dump() << "\n";
  }

  // Selection metric: validation quality (dehazed vs clear), ties broken by
  // lower validation cross entropy when the classifier is active.
  void run_validation() {
    if (split_.validation.empty()) return;
    double ce = 0;
    const double p = partition_psnr(split_.validation, &ce);
    last_val_psnr_ = p;
    const bool better = p > best_val_psnr_ || (p == best_val_psnr_ && ce < best_val_ce_);
    if (better) {
      best_val_psnr_ = p;
      best_val_ce_ = ce;
      save_checkpoint(best_dir());
    }
  }

  Config cfg_;
  Variant variant_ = Variant::Full;
  VariantFlags flags_;
  std::string out_;
  Manifest manifest_;
  std::map<std::string, std::size_t> index_of_;
  DatasetSplit split_;
  int num_classes_ = 0;
  JointModels<float> models_;
  std::unique_ptr<nn::Adam<float>> adam_g_, adam_d_;
  std::vector<nn::ParamRef<float>> g_params_, d_params_;
  std::int64_t step_ = 0;
  std::int64_t epoch_ = 0;
  std::int64_t batch_index_ = 0;
  double best_val_psnr_ = -1.0;
  double best_val_ce_ = 1e30;
  double last_val_psnr_ = 0.0;
  bool prepared_ = false;
};

}  // namespace dehaze
