#pragma once

#include <cmath>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/tensor.hpp"

// Loss terms and the weighted combination L = a*L_mse + b*L_gan + c*L_ce.
// Conventions, fixed for every implementation of this project:
//   - mse averages over every element (batch * channels * pixels)
//   - the adversarial and cross-entropy terms average over the batch
//   - probabilities are clamped to [1e-7, 1-1e-7] before any log

namespace dehaze {

inline constexpr double kProbEps = 1e-7;

struct LossWeights {
  double a = 500.0;  // mse
  double b = 1.0;    // adversarial
  double c = 1.0;    // cross entropy

  void validate() const {
    if (a < 0 || b < 0 || c < 0) throw InvalidParameterError("loss weights must be >= 0");
  }
};

struct LossBreakdown {
  double mse = 0.0;
  double gan = 0.0;
  double ce = 0.0;
  double total = 0.0;

  bool finite() const {
    return std::isfinite(mse) && std::isfinite(gan) && std::isfinite(ce) && std::isfinite(total);
  }
};

inline double combine_losses(LossBreakdown& b, const LossWeights& w) {
  b.total = w.a * b.mse + w.b * b.gan + w.c * b.ce;
  return b.total;
}

namespace detail {
inline double clamp_prob(double p) {
  return p < kProbEps ? kProbEps : (p > 1.0 - kProbEps ? 1.0 - kProbEps : p);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Mean squared error over all elements.
// ---------------------------------------------------------------------------

template <typename T>
double mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  a.check_same_shape(b, "mse");
  double acc = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

// d(mse)/d(a), scaled by `weight`.
template <typename T>
Tensor<T> mse_grad(const Tensor<T>& a, const Tensor<T>& b, double weight = 1.0) {
  a.check_same_shape(b, "mse");
  Tensor<T> g(a.shape());
  const double s = 2.0 * weight / static_cast<double>(a.numel());
  for (std::int64_t i = 0; i < a.numel(); ++i)
    g[i] = static_cast<T>(s * (static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return g;
}

// ---------------------------------------------------------------------------
// Softmax and cross entropy
// ---------------------------------------------------------------------------

// Row-wise max-shifted softmax over logits [N, C] (or a single [C] vector).
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> probs(logits.shape());
  const std::int64_t C = logits.ndim() == 1 ? logits.dim(0) : logits.dim(1);
  const std::int64_t N = logits.numel() / C;
  for (std::int64_t n = 0; n < N; ++n) {
    const T* in = logits.data() + n * C;
    T* out = probs.data() + n * C;
    double mx = static_cast<double>(in[0]);
    for (std::int64_t i = 1; i < C; ++i) mx = std::max(mx, static_cast<double>(in[i]));
    double z = 0;
    for (std::int64_t i = 0; i < C; ++i) {
      const double e = std::exp(static_cast<double>(in[i]) - mx);
      out[i] = static_cast<T>(e);
      z += e;
    }
    for (std::int64_t i = 0; i < C; ++i) out[i] = static_cast<T>(static_cast<double>(out[i]) / z);
  }
  return probs;
}

// -log P[label], clamped; probs is one probability vector [C].
template <typename T>
double ce_loss(const Tensor<T>& probs, int label) {
  const std::int64_t C = probs.numel();
  if (label < 0 || label >= C) throw InvalidParameterError("label out of range");
  return -std::log(detail::clamp_prob(static_cast<double>(probs[label])));
}

// Batch mean of -log P[label] over probs [N, C].
template <typename T>
double ce_loss_batch(const Tensor<T>& probs, const std::vector<int>& labels) {
  const std::int64_t N = probs.dim(0), C = probs.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != N)
    throw ShapeError("label count does not match batch");
  double acc = 0;
  for (std::int64_t n = 0; n < N; ++n) {
    if (labels[static_cast<std::size_t>(n)] < 0 || labels[static_cast<std::size_t>(n)] >= C)
      throw InvalidParameterError("label out of range");
    acc += -std::log(detail::clamp_prob(
        static_cast<double>(probs[n * C + labels[static_cast<std::size_t>(n)]])));
  }
  return acc / static_cast<double>(N);
}

// d(mean ce)/d(logits) = (softmax - onehot) / N, scaled by `weight`.
template <typename T>
Tensor<T> ce_grad_logits(const Tensor<T>& probs, const std::vector<int>& labels,
                         double weight = 1.0) {
  const std::int64_t N = probs.dim(0), C = probs.dim(1);
  Tensor<T> g(probs.shape());
  const double s = weight / static_cast<double>(N);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const double onehot = labels[static_cast<std::size_t>(n)] == c ? 1.0 : 0.0;
      g[n * C + c] = static_cast<T>(s * (static_cast<double>(probs[n * C + c]) - onehot));
    }
  return g;
}

// ---------------------------------------------------------------------------
// Adversarial terms over discriminator probabilities.
// The discriminator ascends  mean[log D(real) + log(1 - D(fake))].
// The generator side descends, by default, the written form
// mean[log(1 - D(fake))]; the non-saturating surrogate -mean[log D(fake)]
// shares its fixed points and is offered behind a flag.
// ---------------------------------------------------------------------------

// Value of the discriminator objective (to be maximized).
template <typename T>
double discriminator_objective(const Tensor<T>& p_real, const Tensor<T>& p_fake) {
  p_real.check_same_shape(p_fake, "adversarial terms");
  double acc = 0;
  for (std::int64_t i = 0; i < p_real.numel(); ++i)
    acc += std::log(detail::clamp_prob(static_cast<double>(p_real[i]))) +
           std::log(1.0 - detail::clamp_prob(static_cast<double>(p_fake[i])));
  return acc / static_cast<double>(p_real.numel());
}

// Gradients of -objective (for a descent step on the discriminator), w.r.t.
// the probabilities. Clamped samples contribute zero gradient.
template <typename T>
void discriminator_objective_grads(const Tensor<T>& p_real, const Tensor<T>& p_fake,
                                   Tensor<T>& d_real, Tensor<T>& d_fake) {
  const std::int64_t n = p_real.numel();
  d_real = Tensor<T>(p_real.shape());
  d_fake = Tensor<T>(p_fake.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    const double pr = static_cast<double>(p_real[i]);
    const double pf = static_cast<double>(p_fake[i]);
    d_real[i] = (pr < kProbEps || pr > 1.0 - kProbEps)
                    ? T(0)
                    : static_cast<T>(-1.0 / (pr * static_cast<double>(n)));
    d_fake[i] = (pf < kProbEps || pf > 1.0 - kProbEps)
                    ? T(0)
                    : static_cast<T>(1.0 / ((1.0 - pf) * static_cast<double>(n)));
  }
}

// Generator-side adversarial loss value over fake probabilities.
template <typename T>
double generator_gan_loss(const Tensor<T>& p_fake, bool non_saturating) {
  double acc = 0;
  for (std::int64_t i = 0; i < p_fake.numel(); ++i) {
    const double p = detail::clamp_prob(static_cast<double>(p_fake[i]));
    acc += non_saturating ? -std::log(p) : std::log(1.0 - p);
  }
  return acc / static_cast<double>(p_fake.numel());
}

// d(generator gan loss)/d(p_fake), scaled by `weight`.
template <typename T>
Tensor<T> generator_gan_grad(const Tensor<T>& p_fake, bool non_saturating, double weight = 1.0) {
  const std::int64_t n = p_fake.numel();
  Tensor<T> g(p_fake.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    const double p = static_cast<double>(p_fake[i]);
    if (p < kProbEps || p > 1.0 - kProbEps) {
      g[i] = T(0);
      continue;
    }
    const double d = non_saturating ? -1.0 / p : -1.0 / (1.0 - p);
    g[i] = static_cast<T>(weight * d / static_cast<double>(n));
  }
  return g;
}

}  // namespace dehaze
