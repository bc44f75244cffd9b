#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/models/ccgan.hpp"
#include "dehaze/models/cnet.hpp"
#include "dehaze/models/dnet.hpp"
#include "dehaze/nn/adam.hpp"
#include "dehaze/objective.hpp"

// The joint network: generator + adversarial feature pathway + classifier,
// with one shared generator-side loss routine used by the trainer and by the
// gradient checks, so the path that is verified is the path that trains.

namespace dehaze {

enum class Variant { DNet, DNetCCGAN, DNetCNet, Full };

inline Variant parse_variant(const std::string& name) {
  if (name == "DNet") return Variant::DNet;
  if (name == "DNet+CCGAN") return Variant::DNetCCGAN;
  if (name == "DNet+CNet") return Variant::DNetCNet;
  if (name == "DNet+CCGAN+CNet") return Variant::Full;
  throw ConfigError("unknown variant '" + name +
                    "' (expected DNet, DNet+CCGAN, DNet+CNet or DNet+CCGAN+CNet)");
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::DNet: return "DNet";
    case Variant::DNetCCGAN: return "DNet+CCGAN";
    case Variant::DNetCNet: return "DNet+CNet";
    default: return "DNet+CCGAN+CNet";
  }
}

struct VariantFlags {
  bool ccgan = true;
  bool cnet = true;

  static VariantFlags of(Variant v) {
    switch (v) {
      case Variant::DNet: return {false, false};
      case Variant::DNetCCGAN: return {true, false};
      case Variant::DNetCNet: return {false, true};
      default: return {true, true};
    }
  }
};

struct ModelHyper {
  double width_scale = 1.0;
  double leaky_slope = 0.2;
  SkipMode skip_mode = SkipMode::Concat;
  int disc_hidden = 256;  // scaled by width_scale like the other widths
  CNetBackbone cnet_backbone = CNetBackbone::SmallResidual;
  int num_classes = 4;
};

template <typename T>
struct JointModels {
  GeneratorConfig gen_cfg;
  FeatureExtractorConfig ext_cfg;
  DiscriminatorConfig disc_cfg;
  CNetConfig cnet_cfg;
  std::unique_ptr<Generator<T>> dnet;
  std::unique_ptr<FeatureExtractor<T>> ext;
  std::unique_ptr<Discriminator<T>> disc;
  std::unique_ptr<Classifier<T>> cnet;

  // Sub-network seeds derive from the run seed; construction order never
  // affects the drawn values.
  static JointModels build(const ModelHyper& h, std::uint64_t seed) {
    JointModels m;
    m.gen_cfg.width_scale = h.width_scale;
    m.gen_cfg.leaky_slope = h.leaky_slope;
    m.gen_cfg.skip_mode = h.skip_mode;
    m.ext_cfg.width_scale = h.width_scale;
    m.disc_cfg.feature_channels = m.ext_cfg.feature_channels();
    m.disc_cfg.feature_extent = 8;
    m.disc_cfg.hidden_width =
        std::max(1, static_cast<int>(std::lround(h.disc_hidden * h.width_scale)));
    m.cnet_cfg.num_classes = h.num_classes;
    m.cnet_cfg.backbone = h.cnet_backbone;
    m.cnet_cfg.width_scale = h.width_scale;
    m.dnet = std::make_unique<Generator<T>>(m.gen_cfg, rng::derive(seed, 0xD0));
    m.ext = std::make_unique<FeatureExtractor<T>>(m.ext_cfg, rng::derive(seed, 0xE0));
    m.disc = std::make_unique<Discriminator<T>>(m.disc_cfg, rng::derive(seed, 0xF0));
    m.cnet = std::make_unique<Classifier<T>>(m.cnet_cfg, rng::derive(seed, 0xC0));
    return m;
  }

  void set_training(bool on) {
    dnet->set_training(on);
    ext->set_training(on);
    cnet->set_training(on);
  }

  std::vector<nn::ParamRef<T>> all_parameters() {
    auto out = dnet->parameters();
    append(out, ext->parameters());
    append(out, disc->parameters());
    append(out, cnet->parameters());
    return out;
  }

  std::vector<nn::ParamRef<T>> all_buffers() {
    auto out = dnet->buffers();
    append(out, ext->buffers());
    append(out, cnet->buffers());
    return out;
  }

  // The group the generator-side optimizer updates: the dehazing network
  // always; the feature extractor when the adversarial term is active (it is
  // the fooling party of the min-max game); the classifier when its loss is
  // active.
  std::vector<nn::ParamRef<T>> generator_side_parameters(VariantFlags flags) {
    auto out = dnet->parameters();
    if (flags.ccgan) append(out, ext->parameters());
    if (flags.cnet) append(out, cnet->parameters());
    return out;
  }

  std::vector<nn::ParamRef<T>> discriminator_parameters() { return disc->parameters(); }

 private:
  static void append(std::vector<nn::ParamRef<T>>& a, std::vector<nn::ParamRef<T>> b) {
    a.insert(a.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
  }
};

template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != b.ndim()) throw ShapeError("batch concat rank mismatch");
  for (std::size_t i = 1; i < a.ndim(); ++i)
    if (a.dim(i) != b.dim(i)) throw ShapeError("batch concat inner shape mismatch");
  auto shape = a.shape();
  shape[0] = a.dim(0) + b.dim(0);
  Tensor<T> y(shape);
  std::copy(a.data(), a.data() + a.numel(), y.data());
  std::copy(b.data(), b.data() + b.numel(), y.data() + a.numel());
  return y;
}

// One discriminator ascent step on mean[log D(real) + log(1 - D(fake))] with
// every generator-side parameter frozen. Returns the objective value.
template <typename T>
double discriminator_step(JointModels<T>& m, nn::Adam<T>& adam_d, const Tensor<T>& hazy,
                          const Tensor<T>& clear) {
  const std::int64_t n = hazy.dim(0);
  Tensor<T> dehazed = m.dnet->forward(hazy);
  Tensor<T> f_real = m.ext->forward(clear);
  Tensor<T> f_fake = m.ext->forward(dehazed);
  Tensor<T> p = m.disc->forward(concat_batch(f_real, f_fake));

  Tensor<T> p_real({n, 1}), p_fake({n, 1});
  for (std::int64_t i = 0; i < n; ++i) {
    p_real[i] = p[i];
    p_fake[i] = p[n + i];
  }
  const double value = discriminator_objective(p_real, p_fake);

  Tensor<T> d_real, d_fake;
  discriminator_objective_grads(p_real, p_fake, d_real, d_fake);
  Tensor<T> dp({2 * n, 1});
  for (std::int64_t i = 0; i < n; ++i) {
    dp[i] = d_real[i];
    dp[n + i] = d_fake[i];
  }
  auto disc_params = m.discriminator_parameters();
  nn::zero_grads(disc_params);
  m.disc->backward(dp);  // stops here; features are inputs, not parameters
  adam_d.step();
  return value;
}

template <typename T>
struct GeneratorPass {
  LossBreakdown losses;
  Tensor<T> dehazed;  // retained when requested, empty otherwise
};

// Generator-side loss L = a*mse + b*gan + c*ce with the current discriminator.
// Disabled terms are exactly zero and their networks are never touched. With
// do_backward, gradients accumulate into the dehazing network, the feature
// extractor and classifier (when active), and transiently into the
// discriminator (whose optimizer ignores them).
template <typename T>
GeneratorPass<T> generator_loss(JointModels<T>& m, const Tensor<T>& hazy, const Tensor<T>& clear,
                                const std::vector<int>& labels, const LossWeights& w,
                                VariantFlags flags, bool non_saturating, bool do_backward,
                                bool keep_dehazed = false) {
  w.validate();
  LossWeights eff = w;
  if (!flags.ccgan) eff.b = 0;
  if (!flags.cnet) eff.c = 0;
  const bool gan_on = flags.ccgan && eff.b != 0;
  const bool ce_on = flags.cnet && eff.c != 0;

  GeneratorPass<T> out;
  Tensor<T> dehazed = m.dnet->forward(hazy);
  out.losses.mse = mse_loss(dehazed, clear);

  Tensor<T> p_fake, probs;
  if (gan_on) {
    Tensor<T> f_fake = m.ext->forward(dehazed);
    p_fake = m.disc->forward(f_fake);
    out.losses.gan = generator_gan_loss(p_fake, non_saturating);
  }
  if (ce_on) {
    if (labels.size() != static_cast<std::size_t>(hazy.dim(0)))
      throw ShapeError("label count does not match batch");
    Tensor<T> logits = m.cnet->forward(dehazed);
    probs = softmax(logits);
    out.losses.ce = ce_loss_batch(probs, labels);
  }
  combine_losses(out.losses, eff);

  if (do_backward) {
    Tensor<T> d_dehazed = mse_grad(dehazed, clear, eff.a);
    if (gan_on) {
      Tensor<T> dp = generator_gan_grad(p_fake, non_saturating, eff.b);
      Tensor<T> df = m.disc->backward(dp);
      Tensor<T> dimg = m.ext->backward(df);
      for (std::int64_t i = 0; i < d_dehazed.numel(); ++i) d_dehazed[i] += dimg[i];
    }
    if (ce_on) {
      Tensor<T> dlogits = ce_grad_logits(probs, labels, eff.c);
      Tensor<T> dimg = m.cnet->backward(dlogits);
      for (std::int64_t i = 0; i < d_dehazed.numel(); ++i) d_dehazed[i] += dimg[i];
    }
    m.dnet->backward(d_dehazed);
  }
  if (keep_dehazed) out.dehazed = std::move(dehazed);
  return out;
}

}  // namespace dehaze
