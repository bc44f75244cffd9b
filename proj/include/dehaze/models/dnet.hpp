#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/nn/init.hpp"
#include "dehaze/nn/layers.hpp"
#include "dehaze/tensor.hpp"

// Dehazing generator: 8 stride-2 encoder layers against 8 mirrored decoder
// layers with skip links between symmetric stages (encoder output i feeds the
// decoder stage that runs at the same spatial extent). Encoder stages are
// conv + batchnorm + leaky rectifier (no norm on the first stage); decoder
// stages are transposed conv + batchnorm + rectifier, and the last stage maps
// through a bounded activation onto [0,1].

namespace dehaze {

enum class SkipMode { Concat, Add };

struct GeneratorConfig {
  std::vector<int> encoder_channels{64, 128, 256, 512, 512, 512, 512, 512};
  std::vector<int> decoder_channels{512, 512, 512, 512, 256, 128, 64, 3};
  int kernel = 4;
  int stride = 2;
  int pad = 1;
  double leaky_slope = 0.2;
  SkipMode skip_mode = SkipMode::Concat;
  double width_scale = 1.0;  // hidden-channel multiplier; the output stays 3-channel

  int scaled(int c) const {
    return std::max(1, static_cast<int>(std::lround(c * width_scale)));
  }

  void validate() const {
    if (encoder_channels.size() != 8 || decoder_channels.size() != 8)
      throw ConfigError("generator needs exactly 8 encoder and 8 decoder layers");
    if (decoder_channels.back() != 3)
      throw ConfigError("final decoder layer must emit 3 channels");
    if (width_scale <= 0) throw ConfigError("width_scale must be positive");
    if (kernel != 2 * pad + stride)
      throw ConfigError("kernel/stride/pad must halve and double extents exactly");
  }
};

template <typename T>
class Generator {
 public:
  Generator(GeneratorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    int cin = 3;
    for (int i = 0; i < 8; ++i) {
      const int cout = cfg_.scaled(cfg_.encoder_channels[static_cast<std::size_t>(i)]);
      enc_ch_[static_cast<std::size_t>(i)] = cout;
      enc_conv_.push_back(std::make_unique<nn::Conv2d<T>>(cin, cout, cfg_.kernel, cfg_.stride,
                                                          cfg_.pad));
      enc_bn_.push_back(i == 0 ? nullptr : std::make_unique<nn::BatchNorm2d<T>>(cout));
      enc_act_.push_back(std::make_unique<nn::LeakyReLU<T>>(cfg_.leaky_slope));
      cin = cout;
    }
    for (int j = 0; j < 8; ++j) {
      const bool last = j == 7;
      const int cout = last ? 3 : cfg_.scaled(cfg_.decoder_channels[static_cast<std::size_t>(j)]);
      dec_ch_[static_cast<std::size_t>(j)] = cout;
      int in = j == 0 ? enc_ch_[7] : dec_ch_[static_cast<std::size_t>(j - 1)];
      if (j > 0) {
        const int skip_c = enc_ch_[static_cast<std::size_t>(7 - j)];
        if (cfg_.skip_mode == SkipMode::Concat) {
          in += skip_c;
        } else if (skip_c != in) {
          throw ConfigError("additive skips need matching encoder/decoder channels");
        }
      }
      dec_conv_.push_back(std::make_unique<nn::ConvTranspose2d<T>>(in, cout, cfg_.kernel,
                                                                   cfg_.stride, cfg_.pad));
      dec_bn_.push_back(last ? nullptr : std::make_unique<nn::BatchNorm2d<T>>(cout));
      if (last)
        dec_out_act_ = std::make_unique<nn::UnitTanh<T>>();
      else
        dec_act_.push_back(std::make_unique<nn::ReLU<T>>());
    }
    auto ps = parameters();
    nn::init_parameters(ps, seed);
  }

  // zero_skip in [0,7) replaces that encoder output with zeros where it is
  // consumed as a skip (diagnostic hook; the chain path is untouched).
  Tensor<T> forward(const Tensor<T>& x, int zero_skip = -1) {
    if (x.ndim() != 4 || x.dim(1) != 3)
      throw ShapeError("generator expects [N,3,H,W], got " +
                       Tensor<T>::shape_string(x.shape()));
    if (x.dim(2) % 256 != 0 || x.dim(3) % 256 != 0 || x.dim(2) == 0 || x.dim(3) == 0)
      throw ShapeError("generator input extents must be positive multiples of 256");
    zero_skip_ = zero_skip;
    enc_out_.clear();
    enc_shapes_.clear();
    Tensor<T> h = x;
    for (int i = 0; i < 8; ++i) {
      h = enc_conv_[static_cast<std::size_t>(i)]->forward(h);
      if (enc_bn_[static_cast<std::size_t>(i)]) h = enc_bn_[static_cast<std::size_t>(i)]->forward(h);
      h = enc_act_[static_cast<std::size_t>(i)]->forward(h);
      enc_out_.push_back(h);
      enc_shapes_.push_back({static_cast<int>(h.dim(1)), static_cast<int>(h.dim(2)),
                             static_cast<int>(h.dim(3))});
    }
    dec_shapes_.clear();
    for (int j = 0; j < 8; ++j) {
      Tensor<T> in;
      if (j == 0) {
        in = enc_out_[7];
      } else {
        const int si = 7 - j;
        Tensor<T> skip = enc_out_[static_cast<std::size_t>(si)];
        if (si == zero_skip_) skip.fill(T(0));
        in = cfg_.skip_mode == SkipMode::Concat ? nn::concat_channels(h, skip) : add(h, skip);
      }
      h = dec_conv_[static_cast<std::size_t>(j)]->forward(in);
      if (dec_bn_[static_cast<std::size_t>(j)]) h = dec_bn_[static_cast<std::size_t>(j)]->forward(h);
      h = j == 7 ? dec_out_act_->forward(h) : dec_act_[static_cast<std::size_t>(j)]->forward(h);
      dec_shapes_.push_back({static_cast<int>(h.dim(1)), static_cast<int>(h.dim(2)),
                             static_cast<int>(h.dim(3))});
    }
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    // Gradients w.r.t. each cached encoder output accumulate from the skip
    // uses first, then the chain walk adds the downstream path.
    std::vector<Tensor<T>> genc(8);
    Tensor<T> d = dy;
    for (int j = 7; j >= 0; --j) {
      d = j == 7 ? dec_out_act_->backward(d) : dec_act_[static_cast<std::size_t>(j)]->backward(d);
      if (dec_bn_[static_cast<std::size_t>(j)]) d = dec_bn_[static_cast<std::size_t>(j)]->backward(d);
      d = dec_conv_[static_cast<std::size_t>(j)]->backward(d);
      if (j == 0) {
        accumulate(genc[7], d);
      } else {
        const int si = 7 - j;
        if (cfg_.skip_mode == SkipMode::Concat) {
          auto [dchain, dskip] = nn::split_channels(d, d.dim(1) - enc_ch_[static_cast<std::size_t>(si)]);
          if (si != zero_skip_) accumulate(genc[static_cast<std::size_t>(si)], dskip);
          d = std::move(dchain);
        } else {
          if (si != zero_skip_) accumulate(genc[static_cast<std::size_t>(si)], d);
        }
      }
    }
    Tensor<T> dx;
    for (int i = 7; i >= 0; --i) {
      Tensor<T> g = std::move(genc[static_cast<std::size_t>(i)]);
      if (i < 7 && !dx.empty()) accumulate(g, dx);  // chain grad from layer i+1
      Tensor<T> t = enc_act_[static_cast<std::size_t>(i)]->backward(g);
      if (enc_bn_[static_cast<std::size_t>(i)]) t = enc_bn_[static_cast<std::size_t>(i)]->backward(t);
      dx = enc_conv_[static_cast<std::size_t>(i)]->backward(t);
    }
    return dx;
  }

  std::vector<nn::ParamRef<T>> parameters() {
    std::vector<nn::ParamRef<T>> out;
    for (int i = 0; i < 8; ++i) {
      const std::string p = "dnet.enc" + std::to_string(i);
      enc_conv_[static_cast<std::size_t>(i)]->params(p + ".conv", out);
      if (enc_bn_[static_cast<std::size_t>(i)]) enc_bn_[static_cast<std::size_t>(i)]->params(p + ".bn", out);
    }
    for (int j = 0; j < 8; ++j) {
      const std::string p = "dnet.dec" + std::to_string(j);
      dec_conv_[static_cast<std::size_t>(j)]->params(p + ".deconv", out);
      if (dec_bn_[static_cast<std::size_t>(j)]) dec_bn_[static_cast<std::size_t>(j)]->params(p + ".bn", out);
    }
    return out;
  }

  std::vector<nn::ParamRef<T>> buffers() {
    std::vector<nn::ParamRef<T>> out;
    for (int i = 0; i < 8; ++i)
      if (enc_bn_[static_cast<std::size_t>(i)])
        enc_bn_[static_cast<std::size_t>(i)]->buffers("dnet.enc" + std::to_string(i) + ".bn", out);
    for (int j = 0; j < 8; ++j)
      if (dec_bn_[static_cast<std::size_t>(j)])
        dec_bn_[static_cast<std::size_t>(j)]->buffers("dnet.dec" + std::to_string(j) + ".bn", out);
    return out;
  }

  void set_training(bool on) {
    for (auto& bn : enc_bn_)
      if (bn) bn->set_training(on);
    for (auto& bn : dec_bn_)
      if (bn) bn->set_training(on);
  }

  const GeneratorConfig& config() const { return cfg_; }
  // [C,H,W] per stage from the most recent forward, encoder then decoder.
  const std::vector<std::array<int, 3>>& encoder_trace() const { return enc_shapes_; }
  const std::vector<std::array<int, 3>>& decoder_trace() const { return dec_shapes_; }

 private:
  static Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    a.check_same_shape(b, "skip add");
    Tensor<T> y(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
    return y;
  }
  static void accumulate(Tensor<T>& acc, const Tensor<T>& g) {
    if (acc.empty()) {
      acc = g;
      return;
    }
    acc.check_same_shape(g, "gradient accumulate");
    for (std::int64_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
  }

  GeneratorConfig cfg_;
  std::array<int, 8> enc_ch_{}, dec_ch_{};
  std::vector<std::unique_ptr<nn::Conv2d<T>>> enc_conv_;
  std::vector<std::unique_ptr<nn::BatchNorm2d<T>>> enc_bn_;
  std::vector<std::unique_ptr<nn::LeakyReLU<T>>> enc_act_;
  std::vector<std::unique_ptr<nn::ConvTranspose2d<T>>> dec_conv_;
  std::vector<std::unique_ptr<nn::BatchNorm2d<T>>> dec_bn_;
  std::vector<std::unique_ptr<nn::ReLU<T>>> dec_act_;
  std::unique_ptr<nn::UnitTanh<T>> dec_out_act_;
  std::vector<Tensor<T>> enc_out_;
  std::vector<std::array<int, 3>> enc_shapes_, dec_shapes_;
  int zero_skip_ = -1;
};

}  // namespace dehaze
