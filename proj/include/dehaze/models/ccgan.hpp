#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/nn/init.hpp"
#include "dehaze/nn/layers.hpp"
#include "dehaze/tensor.hpp"

// Adversarial feature pathway: a convolutional extractor produces compact
// feature maps from clear and dehazed images (stride halves five times, so a
// 256 input lands on 8x8 and a 224 input on 7x7), and a two-layer fully
// connected discriminator scores whether a flattened feature map came from a
// clear image. Flattening is channel-major (NCHW order), fixed so checkpoints
// stay portable.

namespace dehaze {

struct FeatureExtractorConfig {
  std::vector<int> stage_channels{64, 128, 256, 512, 512};
  std::vector<int> stage_convs{2, 2, 3, 3, 3};
  double width_scale = 1.0;

  int scaled(int c) const {
    return std::max(1, static_cast<int>(std::lround(c * width_scale)));
  }

  int downsamplings() const { return static_cast<int>(stage_channels.size()); }

  int feature_channels() const { return scaled(stage_channels.back()); }

  void validate() const {
    if (stage_channels.size() != stage_convs.size() || stage_channels.empty())
      throw ConfigError("extractor stage lists must align and be non-empty");
    for (int n : stage_convs)
      if (n < 1) throw ConfigError("each extractor stage needs at least one convolution");
    if (width_scale <= 0) throw ConfigError("width_scale must be positive");
  }
};

template <typename T>
class FeatureExtractor {
 public:
  FeatureExtractor(FeatureExtractorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    int cin = 3;
    for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
      const int cout = cfg_.scaled(cfg_.stage_channels[s]);
      for (int k = 0; k < cfg_.stage_convs[s]; ++k) {
        layers_.push_back(std::make_unique<nn::Conv2d<T>>(cin, cout, 3, 1, 1));
        layers_.push_back(std::make_unique<nn::BatchNorm2d<T>>(cout));
        layers_.push_back(std::make_unique<nn::ReLU<T>>());
        cin = cout;
      }
      layers_.push_back(std::make_unique<nn::MaxPool2d<T>>(2, 2));
    }
    auto ps = parameters();
    nn::init_parameters(ps, seed);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(1) != 3)
      throw ShapeError("extractor expects [N,3,H,W], got " + Tensor<T>::shape_string(x.shape()));
    const int div = 1 << cfg_.downsamplings();
    if (x.dim(2) % div != 0 || x.dim(3) % div != 0 || x.dim(2) == 0 || x.dim(3) == 0)
      throw ShapeError("extractor input extents must be positive multiples of " +
                       std::to_string(div));
    Tensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
    return d;
  }

  std::vector<nn::ParamRef<T>> parameters() {
    std::vector<nn::ParamRef<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->params("ext.l" + std::to_string(i), out);
    return out;
  }

  std::vector<nn::ParamRef<T>> buffers() {
    std::vector<nn::ParamRef<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->buffers("ext.l" + std::to_string(i), out);
    return out;
  }

  void set_training(bool on) {
    for (auto& l : layers_) l->set_training(on);
  }

  const FeatureExtractorConfig& config() const { return cfg_; }

 private:
  FeatureExtractorConfig cfg_;
  std::vector<std::unique_ptr<nn::Layer<T>>> layers_;
};

struct DiscriminatorConfig {
  int feature_channels = 512;  // channels of the incoming feature map
  int feature_extent = 8;      // spatial side of the incoming feature map
  int hidden_width = 256;

  std::int64_t input_width() const {
    return static_cast<std::int64_t>(feature_channels) * feature_extent * feature_extent;
  }

  void validate() const {
    if (feature_channels < 1 || feature_extent < 1 || hidden_width < 1)
      throw ConfigError("discriminator dimensions must be positive");
  }
};

template <typename T>
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    fc1_ = std::make_unique<nn::Linear<T>>(static_cast<int>(cfg_.input_width()),
                                           cfg_.hidden_width);
    act_ = std::make_unique<nn::LeakyReLU<T>>(0.2);
    fc2_ = std::make_unique<nn::Linear<T>>(cfg_.hidden_width, 1);
    sig_ = std::make_unique<nn::Sigmoid<T>>();
    auto ps = parameters();
    nn::init_parameters(ps, seed);
  }

  // features [N, C, E, E] -> probabilities [N, 1], strictly inside (0,1).
  Tensor<T> forward(const Tensor<T>& features) {
    Tensor<T> h = features;
    const std::int64_t n = h.dim(0);
    if (h.numel() != n * cfg_.input_width())
      throw ShapeError("discriminator features do not flatten to expected width");
    h.reshape({n, cfg_.input_width()});
    h = fc1_->forward(h);
    h = act_->forward(h);
    h = fc2_->forward(h);
    return sig_->forward(h);
  }

  // dy [N, 1] w.r.t. probabilities -> gradient w.r.t. features [N, C, E, E].
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = sig_->backward(dy);
    d = fc2_->backward(d);
    d = act_->backward(d);
    d = fc1_->backward(d);
    d.reshape({d.dim(0), cfg_.feature_channels, cfg_.feature_extent, cfg_.feature_extent});
    return d;
  }

  std::vector<nn::ParamRef<T>> parameters() {
    std::vector<nn::ParamRef<T>> out;
    fc1_->params("disc.fc1", out);
    fc2_->params("disc.fc2", out);
    return out;
  }

  std::vector<nn::ParamRef<T>> buffers() { return {}; }
  void set_training(bool) {}

  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  std::unique_ptr<nn::Linear<T>> fc1_, fc2_;
  std::unique_ptr<nn::LeakyReLU<T>> act_;
  std::unique_ptr<nn::Sigmoid<T>> sig_;
};

}  // namespace dehaze
