#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/nn/init.hpp"
#include "dehaze/nn/layers.hpp"
#include "dehaze/tensor.hpp"

// Classification head consuming dehazed images. Two backbones share the I/O
// contract (any input the stem can downsample; global average pooling absorbs
// the final extent before the fully connected layer):
//   - small-residual: stem + 3 residual stages, ~10 convolutions, desk scale
//   - residual-50:   bottleneck stages [3,4,6,3], the paper-scale preset

namespace dehaze {

enum class CNetBackbone { SmallResidual, Residual50 };

struct CNetConfig {
  int num_classes = 4;
  CNetBackbone backbone = CNetBackbone::SmallResidual;
  double width_scale = 1.0;

  int scaled(int c) const {
    return std::max(1, static_cast<int>(std::lround(c * width_scale)));
  }

  void validate() const {
    if (num_classes < 2) throw ConfigError("classifier needs at least two classes");
    if (width_scale <= 0) throw ConfigError("width_scale must be positive");
  }
};

namespace detail {

// conv3x3 -> bn -> relu -> conv3x3 -> bn, plus projected identity; relu after
// the sum.
template <typename T>
class BasicBlock final : public nn::Layer<T> {
 public:
  BasicBlock(int cin, int cout, int stride)
      : conv1_(cin, cout, 3, stride, 1), bn1_(cout), conv2_(cout, cout, 3, 1, 1), bn2_(cout) {
    if (stride != 1 || cin != cout) {
      proj_conv_ = std::make_unique<nn::Conv2d<T>>(cin, cout, 1, stride, 0);
      proj_bn_ = std::make_unique<nn::BatchNorm2d<T>>(cout);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = relu1_.forward(bn1_.forward(conv1_.forward(x)));
    h = bn2_.forward(conv2_.forward(h));
    Tensor<T> id = proj_conv_ ? proj_bn_->forward(proj_conv_->forward(x)) : x;
    h.check_same_shape(id, "residual add");
    for (std::int64_t i = 0; i < h.numel(); ++i) h[i] += id[i];
    return relu_out_.forward(h);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> d = relu_out_.backward(dy);
    Tensor<T> did = proj_conv_ ? proj_conv_->backward(proj_bn_->backward(d)) : d;
    Tensor<T> dm = conv2_.backward(bn2_.backward(d));
    dm = conv1_.backward(bn1_.backward(relu1_.backward(dm)));
    for (std::int64_t i = 0; i < dm.numel(); ++i) dm[i] += did[i];
    return dm;
  }

  void params(const std::string& p, std::vector<nn::ParamRef<T>>& out) override {
    conv1_.params(p + ".conv1", out);
    bn1_.params(p + ".bn1", out);
    conv2_.params(p + ".conv2", out);
    bn2_.params(p + ".bn2", out);
    if (proj_conv_) {
      proj_conv_->params(p + ".proj", out);
      proj_bn_->params(p + ".proj_bn", out);
    }
  }

  void buffers(const std::string& p, std::vector<nn::ParamRef<T>>& out) override {
    bn1_.buffers(p + ".bn1", out);
    bn2_.buffers(p + ".bn2", out);
    if (proj_bn_) proj_bn_->buffers(p + ".proj_bn", out);
  }

  void set_training(bool on) override {
    bn1_.set_training(on);
    bn2_.set_training(on);
    if (proj_bn_) proj_bn_->set_training(on);
  }

 private:
  nn::Conv2d<T> conv1_;
  nn::BatchNorm2d<T> bn1_;
  nn::Conv2d<T> conv2_;
  nn::BatchNorm2d<T> bn2_;
  nn::ReLU<T> relu1_, relu_out_;
  std::unique_ptr<nn::Conv2d<T>> proj_conv_;
  std::unique_ptr<nn::BatchNorm2d<T>> proj_bn_;
};

// 1x1 reduce -> 3x3 -> 1x1 expand with projected identity.
template <typename T>
class Bottleneck final : public nn::Layer<T> {
 public:
  Bottleneck(int cin, int mid, int cout, int stride)
      : conv1_(cin, mid, 1, 1, 0), bn1_(mid), conv2_(mid, mid, 3, stride, 1), bn2_(mid),
        conv3_(mid, cout, 1, 1, 0), bn3_(cout) {
    if (stride != 1 || cin != cout) {
      proj_conv_ = std::make_unique<nn::Conv2d<T>>(cin, cout, 1, stride, 0);
      proj_bn_ = std::make_unique<nn::BatchNorm2d<T>>(cout);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = relu1_.forward(bn1_.forward(conv1_.forward(x)));
    h = relu2_.forward(bn2_.forward(conv2_.forward(h)));
    h = bn3_.forward(conv3_.forward(h));
    Tensor<T> id = proj_conv_ ? proj_bn_->forward(proj_conv_->forward(x)) : x;
    h.check_same_shape(id, "residual add");
    for (std::int64_t i = 0; i < h.numel(); ++i) h[i] += id[i];
    return relu_out_.forward(h);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> d = relu_out_.backward(dy);
    Tensor<T> did = proj_conv_ ? proj_conv_->backward(proj_bn_->backward(d)) : d;
    Tensor<T> dm = conv3_.backward(bn3_.backward(d));
    dm = conv2_.backward(bn2_.backward(relu2_.backward(dm)));
    dm = conv1_.backward(bn1_.backward(relu1_.backward(dm)));
    for (std::int64_t i = 0; i < dm.numel(); ++i) dm[i] += did[i];
    return dm;
  }

  void params(const std::string& p, std::vector<nn::ParamRef<T>>& out) override {
    conv1_.params(p + ".conv1", out);
    bn1_.params(p + ".bn1", out);
    conv2_.params(p + ".conv2", out);
    bn2_.params(p + ".bn2", out);
    conv3_.params(p + ".conv3", out);
    bn3_.params(p + ".bn3", out);
    if (proj_conv_) {
      proj_conv_->params(p + ".proj", out);
      proj_bn_->params(p + ".proj_bn", out);
    }
  }

  void buffers(const std::string& p, std::vector<nn::ParamRef<T>>& out) override {
    bn1_.buffers(p + ".bn1", out);
    bn2_.buffers(p + ".bn2", out);
    bn3_.buffers(p + ".bn3", out);
    if (proj_bn_) proj_bn_->buffers(p + ".proj_bn", out);
  }

  void set_training(bool on) override {
    bn1_.set_training(on);
    bn2_.set_training(on);
    bn3_.set_training(on);
    if (proj_bn_) proj_bn_->set_training(on);
  }

 private:
  nn::Conv2d<T> conv1_;
  nn::BatchNorm2d<T> bn1_;
  nn::Conv2d<T> conv2_;
  nn::BatchNorm2d<T> bn2_;
  nn::Conv2d<T> conv3_;
  nn::BatchNorm2d<T> bn3_;
  nn::ReLU<T> relu1_, relu2_, relu_out_;
  std::unique_ptr<nn::Conv2d<T>> proj_conv_;
  std::unique_ptr<nn::BatchNorm2d<T>> proj_bn_;
};

}  // namespace detail

template <typename T>
class Classifier {
 public:
  Classifier(CNetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    int feat = 0;
    if (cfg_.backbone == CNetBackbone::SmallResidual) {
      const int w1 = cfg_.scaled(64), w2 = cfg_.scaled(128), w3 = cfg_.scaled(256);
      trunk_.push_back(std::make_unique<nn::Conv2d<T>>(3, w1, 3, 2, 1));
      trunk_.push_back(std::make_unique<nn::BatchNorm2d<T>>(w1));
      trunk_.push_back(std::make_unique<nn::ReLU<T>>());
      trunk_.push_back(std::make_unique<detail::BasicBlock<T>>(w1, w1, 2));
      trunk_.push_back(std::make_unique<detail::BasicBlock<T>>(w1, w2, 2));
      trunk_.push_back(std::make_unique<detail::BasicBlock<T>>(w2, w3, 2));
      feat = w3;
    } else {
      const int stem = cfg_.scaled(64);
      trunk_.push_back(std::make_unique<nn::Conv2d<T>>(3, stem, 7, 2, 3));
      trunk_.push_back(std::make_unique<nn::BatchNorm2d<T>>(stem));
      trunk_.push_back(std::make_unique<nn::ReLU<T>>());
      trunk_.push_back(std::make_unique<nn::MaxPool2d<T>>(3, 2, 1));
      const int mids[4] = {cfg_.scaled(64), cfg_.scaled(128), cfg_.scaled(256), cfg_.scaled(512)};
      const int depth[4] = {3, 4, 6, 3};
      int cin = stem;
      for (int s = 0; s < 4; ++s) {
        const int cout = mids[s] * 4;
        for (int b = 0; b < depth[s]; ++b) {
          const int stride = (b == 0 && s > 0) ? 2 : 1;
          trunk_.push_back(std::make_unique<detail::Bottleneck<T>>(cin, mids[s], cout, stride));
          cin = cout;
        }
      }
      feat = cin;
    }
    gap_ = std::make_unique<nn::GlobalAvgPool<T>>();
    fc_ = std::make_unique<nn::Linear<T>>(feat, cfg_.num_classes);
    auto ps = parameters();
    nn::init_parameters(ps, seed);
  }

  // image batch -> logits [N, num_classes]
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(1) != 3)
      throw ShapeError("classifier expects [N,3,H,W], got " +
                       Tensor<T>::shape_string(x.shape()));
    if (x.dim(2) < 32 || x.dim(3) < 32)
      throw ShapeError("classifier input too small for the downsampling trunk");
    Tensor<T> h = x;
    for (auto& l : trunk_) h = l->forward(h);
    h = gap_->forward(h);
    return fc_->forward(h);
  }

  // dy w.r.t. logits -> gradient w.r.t. the input image
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = fc_->backward(dy);
    d = gap_->backward(d);
    for (auto it = trunk_.rbegin(); it != trunk_.rend(); ++it) d = (*it)->backward(d);
    return d;
  }

  std::vector<nn::ParamRef<T>> parameters() {
    std::vector<nn::ParamRef<T>> out;
    for (std::size_t i = 0; i < trunk_.size(); ++i)
      trunk_[i]->params("cnet.l" + std::to_string(i), out);
    fc_->params("cnet.fc", out);
    return out;
  }

  std::vector<nn::ParamRef<T>> buffers() {
    std::vector<nn::ParamRef<T>> out;
    for (std::size_t i = 0; i < trunk_.size(); ++i)
      trunk_[i]->buffers("cnet.l" + std::to_string(i), out);
    return out;
  }

  void set_training(bool on) {
    for (auto& l : trunk_) l->set_training(on);
  }

  const CNetConfig& config() const { return cfg_; }

 private:
  CNetConfig cfg_;
  std::vector<std::unique_ptr<nn::Layer<T>>> trunk_;
  std::unique_ptr<nn::GlobalAvgPool<T>> gap_;
  std::unique_ptr<nn::Linear<T>> fc_;
};

}  // namespace dehaze
