#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/nn/im2col.hpp"
#include "dehaze/parallel.hpp"
#include "dehaze/tensor.hpp"

// Layer zoo: explicit forward/backward with cached activations, no tape.
// backward() accumulates parameter gradients (+=) and returns the input
// gradient; callers zero gradients at the start of each optimization step.
//
// Convolutions run one GEMM per batch element; batch elements are processed
// in parallel but each element's arithmetic is identical regardless of the
// thread count, and cross-element reductions happen in fixed batch order, so
// results are bit-reproducible.

namespace dehaze::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapC = Eigen::Map<const MatRM<T>>;

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;  // null for buffers (running statistics)
};

// Fixed-order sum. Eigen's redux peels to the destination's runtime alignment
// which makes its low bits depend on heap addresses; reductions here must be
// bit-stable across thread counts and allocation history, so they are written
// out explicitly.
template <typename T>
T ordered_sum(const T* p, std::int64_t n) {
  double acc = 0;
  for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(p[i]);
  return static_cast<T>(acc);
}

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void params(const std::string&, std::vector<ParamRef<T>>&) {}
  virtual void buffers(const std::string&, std::vector<ParamRef<T>>&) {}
  virtual void set_training(bool) {}
};

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int cin, int cout, int kernel, int stride, int pad, bool bias = true)
      : cin_(cin), cout_(cout), k_(kernel), s_(stride), p_(pad), has_bias_(bias),
        w_({cout, cin, kernel, kernel}), gw_({cout, cin, kernel, kernel}) {
    if (bias) {
      b_ = Tensor<T>({cout});
      gb_ = Tensor<T>({cout});
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    check_input(x);
    x_ = x;
    const int N = static_cast<int>(x.dim(0));
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const int Ho = conv_out_extent(H, k_, s_, p_), Wo = conv_out_extent(W, k_, s_, p_);
    Tensor<T> y({N, cout_, Ho, Wo});
    const std::int64_t K = static_cast<std::int64_t>(cin_) * k_ * k_;
    const std::int64_t P = static_cast<std::int64_t>(Ho) * Wo;
    parallel_for(N, [&](std::int64_t n) {
      std::vector<T> col(static_cast<std::size_t>(K * P));
      im2col(x.data() + n * cin_ * H * W, cin_, H, W, k_, k_, s_, s_, p_, p_, Ho, Wo, col.data());
      MapC<T> colm(col.data(), K, P);
      MapC<T> wm(w_.data(), cout_, K);
      MapM<T> ym(y.data() + n * cout_ * P, cout_, P);
      ym.noalias() = wm * colm;
      if (has_bias_)
        for (int c = 0; c < cout_; ++c) ym.row(c).array() += b_[c];
    });
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int N = static_cast<int>(x_.dim(0));
    const int H = static_cast<int>(x_.dim(2)), W = static_cast<int>(x_.dim(3));
    const int Ho = static_cast<int>(dy.dim(2)), Wo = static_cast<int>(dy.dim(3));
    const std::int64_t K = static_cast<std::int64_t>(cin_) * k_ * k_;
    const std::int64_t P = static_cast<std::int64_t>(Ho) * Wo;
    Tensor<T> dx(x_.shape());
    std::vector<Tensor<T>> dw_part(static_cast<std::size_t>(N));
    std::vector<Tensor<T>> db_part(static_cast<std::size_t>(N));
    parallel_for(N, [&](std::int64_t n) {
      std::vector<T> col(static_cast<std::size_t>(K * P));
      im2col(x_.data() + n * cin_ * H * W, cin_, H, W, k_, k_, s_, s_, p_, p_, Ho, Wo,
             col.data());
      MapC<T> colm(col.data(), K, P);
      MapC<T> dym(dy.data() + n * cout_ * P, cout_, P);
      MapC<T> wm(w_.data(), cout_, K);

      Tensor<T>& dwn = dw_part[static_cast<std::size_t>(n)];
      dwn = Tensor<T>({cout_, cin_, k_, k_});
      MapM<T>(dwn.data(), cout_, K).noalias() = dym * colm.transpose();
      if (has_bias_) {
        Tensor<T>& dbn = db_part[static_cast<std::size_t>(n)];
        dbn = Tensor<T>({cout_});
        for (int c = 0; c < cout_; ++c)
          dbn[c] = ordered_sum(dy.data() + (n * cout_ + c) * P, P);
      }

      std::vector<T> dcol(static_cast<std::size_t>(K * P));
      MapM<T>(dcol.data(), K, P).noalias() = wm.transpose() * dym;
      col2im(dcol.data(), cin_, H, W, k_, k_, s_, s_, p_, p_, Ho, Wo,
             dx.data() + n * cin_ * H * W);
    });
    for (int n = 0; n < N; ++n) {
      const Tensor<T>& dwn = dw_part[static_cast<std::size_t>(n)];
      for (std::int64_t i = 0; i < gw_.numel(); ++i) gw_[i] += dwn[i];
      if (has_bias_)
        for (int c = 0; c < cout_; ++c) gb_[c] += db_part[static_cast<std::size_t>(n)][c];
    }
    return dx;
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + ".w", &w_, &gw_});
    if (has_bias_) out.push_back({prefix + ".b", &b_, &gb_});
  }

  Tensor<T>& weight() { return w_; }
  Tensor<T>& bias() { return b_; }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.ndim() != 4 || x.dim(1) != cin_)
      throw ShapeError("conv input must be [N," + std::to_string(cin_) + ",H,W], got " +
                       Tensor<T>::shape_string(x.shape()));
  }

  int cin_, cout_, k_, s_, p_;
  bool has_bias_;
  Tensor<T> w_, gw_, b_, gb_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// Transposed convolution. Weight layout [Cin, Cout, kh, kw]; the forward pass
// is the adjoint of Conv2d's forward with the same kernel geometry, so the
// spatial map is H -> (H-1)*stride - 2*pad + kernel.
// ---------------------------------------------------------------------------

template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(int cin, int cout, int kernel, int stride, int pad, bool bias = true)
      : cin_(cin), cout_(cout), k_(kernel), s_(stride), p_(pad), has_bias_(bias),
        w_({cin, cout, kernel, kernel}), gw_({cin, cout, kernel, kernel}) {
    if (bias) {
      b_ = Tensor<T>({cout});
      gb_ = Tensor<T>({cout});
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.ndim() != 4 || x.dim(1) != cin_)
      throw ShapeError("deconv input must be [N," + std::to_string(cin_) + ",H,W], got " +
                       Tensor<T>::shape_string(x.shape()));
    x_ = x;
    const int N = static_cast<int>(x.dim(0));
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const int Ho = (H - 1) * s_ - 2 * p_ + k_, Wo = (W - 1) * s_ - 2 * p_ + k_;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("deconv output collapses to zero extent");
    Tensor<T> y({N, cout_, Ho, Wo});
    const std::int64_t K = static_cast<std::int64_t>(cout_) * k_ * k_;
    const std::int64_t P = static_cast<std::int64_t>(H) * W;
    parallel_for(N, [&](std::int64_t n) {
      MapC<T> xm(x.data() + n * cin_ * P, cin_, P);
      MapC<T> wm(w_.data(), cin_, K);
      std::vector<T> col(static_cast<std::size_t>(K * P));
      MapM<T>(col.data(), K, P).noalias() = wm.transpose() * xm;
      T* yn = y.data() + n * cout_ * Ho * Wo;
      col2im(col.data(), cout_, Ho, Wo, k_, k_, s_, s_, p_, p_, H, W, yn);
      if (has_bias_) {
        for (int c = 0; c < cout_; ++c) {
          T* plane = yn + static_cast<std::int64_t>(c) * Ho * Wo;
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i) plane[i] += b_[c];
        }
      }
    });
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int N = static_cast<int>(x_.dim(0));
    const int H = static_cast<int>(x_.dim(2)), W = static_cast<int>(x_.dim(3));
    const int Ho = static_cast<int>(dy.dim(2)), Wo = static_cast<int>(dy.dim(3));
    const std::int64_t K = static_cast<std::int64_t>(cout_) * k_ * k_;
    const std::int64_t P = static_cast<std::int64_t>(H) * W;
    Tensor<T> dx(x_.shape());
    std::vector<Tensor<T>> dw_part(static_cast<std::size_t>(N));
    std::vector<Tensor<T>> db_part(static_cast<std::size_t>(N));
    parallel_for(N, [&](std::int64_t n) {
      std::vector<T> col(static_cast<std::size_t>(K * P));
      im2col(dy.data() + n * cout_ * Ho * Wo, cout_, Ho, Wo, k_, k_, s_, s_, p_, p_, H, W,
             col.data());
      MapC<T> colm(col.data(), K, P);
      MapC<T> wm(w_.data(), cin_, K);
      MapC<T> xm(x_.data() + n * cin_ * P, cin_, P);

      MapM<T>(dx.data() + n * cin_ * P, cin_, P).noalias() = wm * colm;

      Tensor<T>& dwn = dw_part[static_cast<std::size_t>(n)];
      dwn = Tensor<T>({cin_, cout_, k_, k_});
      MapM<T>(dwn.data(), cin_, K).noalias() = xm * colm.transpose();
      if (has_bias_) {
        Tensor<T>& dbn = db_part[static_cast<std::size_t>(n)];
        dbn = Tensor<T>({cout_});
        for (int c = 0; c < cout_; ++c)
          dbn[c] = ordered_sum(dy.data() + (n * cout_ + c) * Ho * Wo,
                               static_cast<std::int64_t>(Ho) * Wo);
      }
    });
    for (int n = 0; n < N; ++n) {
      const Tensor<T>& dwn = dw_part[static_cast<std::size_t>(n)];
      for (std::int64_t i = 0; i < gw_.numel(); ++i) gw_[i] += dwn[i];
      if (has_bias_)
        for (int c = 0; c < cout_; ++c) gb_[c] += db_part[static_cast<std::size_t>(n)][c];
    }
    return dx;
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + ".w", &w_, &gw_});
    if (has_bias_) out.push_back({prefix + ".b", &b_, &gb_});
  }

 private:
  int cin_, cout_, k_, s_, p_;
  bool has_bias_;
  Tensor<T> w_, gw_, b_, gb_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel. Training mode normalizes by
// biased batch statistics and folds them into running averages; evaluation
// mode uses the running averages only. Well defined down to 1x1 spatial
// extent as long as the batch carries more than one sample.
// ---------------------------------------------------------------------------

template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1)
      : c_(channels), eps_(eps), momentum_(momentum), gamma_({channels}), beta_({channels}),
        ggamma_({channels}), gbeta_({channels}), run_mean_({channels}), run_var_({channels}) {
    gamma_.fill(T(1));
    run_var_.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.ndim() != 4 || x.dim(1) != c_) throw ShapeError("batchnorm channel mismatch");
    const std::int64_t N = x.dim(0), HW = x.dim(2) * x.dim(3);
    const std::int64_t M = N * HW;
    Tensor<T> y(x.shape());
    if (training_) {
      xhat_ = Tensor<T>(x.shape());
      inv_std_.assign(static_cast<std::size_t>(c_), T(0));
      m_ = M;
      parallel_for(c_, [&](std::int64_t c) {
        double sum = 0, sq = 0;
        for (std::int64_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * c_ + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i) {
            sum += static_cast<double>(p[i]);
            sq += static_cast<double>(p[i]) * static_cast<double>(p[i]);
          }
        }
        const double mean = sum / static_cast<double>(M);
        const double var = std::max(0.0, sq / static_cast<double>(M) - mean * mean);
        const T istd = static_cast<T>(1.0 / std::sqrt(var + eps_));
        inv_std_[static_cast<std::size_t>(c)] = istd;
        for (std::int64_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * c_ + c) * HW;
          T* xh = xhat_.data() + (n * c_ + c) * HW;
          T* out = y.data() + (n * c_ + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i) {
            xh[i] = (p[i] - static_cast<T>(mean)) * istd;
            out[i] = gamma_[c] * xh[i] + beta_[c];
          }
        }
        run_mean_[c] = static_cast<T>((1.0 - momentum_) * run_mean_[c] + momentum_ * mean);
        run_var_[c] = static_cast<T>((1.0 - momentum_) * run_var_[c] + momentum_ * var);
      });
    } else {
      parallel_for(c_, [&](std::int64_t c) {
        const T istd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(run_var_[c]) + eps_));
        for (std::int64_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * c_ + c) * HW;
          T* out = y.data() + (n * c_ + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i)
            out[i] = gamma_[c] * (p[i] - run_mean_[c]) * istd + beta_[c];
        }
      });
      eval_x_ = x;  // only needed if backward is called in eval mode
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const std::int64_t N = dy.dim(0), HW = dy.dim(2) * dy.dim(3);
    Tensor<T> dx(dy.shape());
    if (training_) {
      parallel_for(c_, [&](std::int64_t c) {
        double sum_dy = 0, sum_dy_xh = 0;
        for (std::int64_t n = 0; n < N; ++n) {
          const T* d = dy.data() + (n * c_ + c) * HW;
          const T* xh = xhat_.data() + (n * c_ + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i) {
            sum_dy += static_cast<double>(d[i]);
            sum_dy_xh += static_cast<double>(d[i]) * static_cast<double>(xh[i]);
          }
        }
        ggamma_[c] += static_cast<T>(sum_dy_xh);
        gbeta_[c] += static_cast<T>(sum_dy);
        const T istd = inv_std_[static_cast<std::size_t>(c)];
        const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(m_));
        const T mean_dy_xh = static_cast<T>(sum_dy_xh / static_cast<double>(m_));
        for (std::int64_t n = 0; n < N; ++n) {
          const T* d = dy.data() + (n * c_ + c) * HW;
          const T* xh = xhat_.data() + (n * c_ + c) * HW;
          T* out = dx.data() + (n * c_ + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i)
            out[i] = gamma_[c] * istd * (d[i] - mean_dy - xh[i] * mean_dy_xh);
        }
      });
    } else {
      parallel_for(c_, [&](std::int64_t c) {
        const T istd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(run_var_[c]) + eps_));
        double sum_dy = 0, sum_dy_xh = 0;
        for (std::int64_t n = 0; n < N; ++n) {
          const T* d = dy.data() + (n * c_ + c) * HW;
          const T* p = eval_x_.data() + (n * c_ + c) * HW;
          T* out = dx.data() + (n * c_ + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i) {
            sum_dy += static_cast<double>(d[i]);
            sum_dy_xh += static_cast<double>(d[i]) * static_cast<double>((p[i] - run_mean_[c]) * istd);
            out[i] = d[i] * gamma_[c] * istd;
          }
        }
        ggamma_[c] += static_cast<T>(sum_dy_xh);
        gbeta_[c] += static_cast<T>(sum_dy);
      });
    }
    return dx;
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + ".gamma", &gamma_, &ggamma_});
    out.push_back({prefix + ".beta", &beta_, &gbeta_});
  }

  void buffers(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + ".run_mean", &run_mean_, nullptr});
    out.push_back({prefix + ".run_var", &run_var_, nullptr});
  }

  void set_training(bool on) override { training_ = on; }

 private:
  int c_;
  double eps_, momentum_;
  bool training_ = true;
  Tensor<T> gamma_, beta_, ggamma_, gbeta_, run_mean_, run_var_;
  Tensor<T> xhat_, eval_x_;
  std::vector<T> inv_std_;
  std::int64_t m_ = 0;
};

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

template <typename T>
class LeakyReLU final : public Layer<T> {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(static_cast<T>(slope)) {}
  Tensor<T> forward(const Tensor<T>& x) override {
    x_ = x;
    Tensor<T> y(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape());
    for (std::int64_t i = 0; i < dy.numel(); ++i)
      dx[i] = x_[i] > T(0) ? dy[i] : slope_ * dy[i];
    return dx;
  }

 private:
  T slope_;
  Tensor<T> x_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    x_ = x;
    Tensor<T> y(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape());
    for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : T(0);
    return dx;
  }

 private:
  Tensor<T> x_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    y_ = Tensor<T>(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i)
      y_[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape());
    for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * y_[i] * (T(1) - y_[i]);
    return dx;
  }

 private:
  Tensor<T> y_;
};

// (tanh(x)+1)/2: bounded output mapped onto [0,1] for image-valued heads.
template <typename T>
class UnitTanh final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    y_ = Tensor<T>(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i)
      y_[i] = static_cast<T>(0.5 * (std::tanh(static_cast<double>(x[i])) + 1.0));
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape());
    for (std::int64_t i = 0; i < dy.numel(); ++i) {
      const T th = T(2) * y_[i] - T(1);
      dx[i] = dy[i] * T(0.5) * (T(1) - th * th);
    }
    return dx;
  }

 private:
  Tensor<T> y_;
};

// ---------------------------------------------------------------------------
// Pooling and reductions
// ---------------------------------------------------------------------------

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(int kernel, int stride, int pad = 0) : k_(kernel), s_(stride), p_(pad) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    const int N = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1));
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const int Ho = conv_out_extent(H, k_, s_, p_), Wo = conv_out_extent(W, k_, s_, p_);
    in_shape_ = x.shape();
    Tensor<T> y({N, C, Ho, Wo});
    argmax_.assign(static_cast<std::size_t>(y.numel()), -1);
    parallel_for(static_cast<std::int64_t>(N) * C, [&](std::int64_t nc) {
      const T* plane = x.data() + nc * H * W;
      T* out = y.data() + nc * Ho * Wo;
      std::int64_t* arg = argmax_.data() + nc * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          T best = T(0);
          std::int64_t best_idx = -1;
          for (int ki = 0; ki < k_; ++ki) {
            const int yy = oy * s_ - p_ + ki;
            if (yy < 0 || yy >= H) continue;
            for (int kj = 0; kj < k_; ++kj) {
              const int xx = ox * s_ - p_ + kj;
              if (xx < 0 || xx >= W) continue;
              const T v = plane[yy * W + xx];
              if (best_idx < 0 || v > best) {  // ties keep the first in scan order
                best = v;
                best_idx = yy * W + xx;
              }
            }
          }
          out[oy * Wo + ox] = best_idx < 0 ? T(0) : best;
          arg[oy * Wo + ox] = best_idx;
        }
      }
    });
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    const std::int64_t planes = in_shape_[0] * in_shape_[1];
    const std::int64_t HW = in_shape_[2] * in_shape_[3];
    const std::int64_t out_hw = dy.dim(2) * dy.dim(3);
    parallel_for(planes, [&](std::int64_t nc) {
      const T* d = dy.data() + nc * out_hw;
      const std::int64_t* arg = argmax_.data() + nc * out_hw;
      T* out = dx.data() + nc * HW;
      for (std::int64_t i = 0; i < out_hw; ++i)
        if (arg[i] >= 0) out[arg[i]] += d[i];
    });
    return dx;
  }

 private:
  int k_, s_, p_;
  std::vector<std::int64_t> in_shape_;
  std::vector<std::int64_t> argmax_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    const std::int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor<T> y({N, C});
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        double sum = 0;
        const T* p = x.data() + (n * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) sum += static_cast<double>(p[i]);
        y[n * C + c] = static_cast<T>(sum / static_cast<double>(HW));
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    const std::int64_t N = in_shape_[0], C = in_shape_[1], HW = in_shape_[2] * in_shape_[3];
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        const T g = dy[n * C + c] / static_cast<T>(HW);
        T* p = dx.data() + (n * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) p[i] = g;
      }
    return dx;
  }

 private:
  std::vector<std::int64_t> in_shape_;
};

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in, int out) : in_(in), out_(out), w_({out, in}), gw_({out, in}), b_({out}),
                            gb_({out}) {}

  // Accepts [N, in] or any [N, ...] flattening to `in` per row.
  Tensor<T> forward(const Tensor<T>& x) override {
    const std::int64_t N = x.dim(0);
    if (x.numel() != N * in_) throw ShapeError("linear input does not flatten to expected width");
    x_ = x;
    x_.reshape({N, in_});
    Tensor<T> y({N, out_});
    MapC<T> xm(x_.data(), N, in_);
    MapC<T> wm(w_.data(), out_, in_);
    MapM<T> ym(y.data(), N, out_);
    ym.noalias() = xm * wm.transpose();
    for (std::int64_t n = 0; n < N; ++n)
      for (int o = 0; o < out_; ++o) y[n * out_ + o] += b_[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const std::int64_t N = x_.dim(0);
    MapC<T> dym(dy.data(), N, out_);
    MapC<T> xm(x_.data(), N, in_);
    MapC<T> wm(w_.data(), out_, in_);
    MapM<T>(gw_.data(), out_, in_).noalias() += dym.transpose() * xm;
    for (int o = 0; o < out_; ++o) {
      double acc = 0;
      for (std::int64_t n = 0; n < N; ++n) acc += static_cast<double>(dy[n * out_ + o]);
      gb_[o] += static_cast<T>(acc);
    }
    Tensor<T> dx({N, in_});
    MapM<T>(dx.data(), N, in_).noalias() = dym * wm;
    return dx;
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
    out.push_back({prefix + ".w", &w_, &gw_});
    out.push_back({prefix + ".b", &b_, &gb_});
  }

 private:
  std::int64_t in_;
  int out_;
  Tensor<T> w_, gw_, b_, gb_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// Channel concat / split used by skip connections
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat operands disagree outside the channel axis");
  const std::int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
  Tensor<T> y({N, Ca + Cb, a.dim(2), a.dim(3)});
  for (std::int64_t n = 0; n < N; ++n) {
    std::copy(a.data() + n * Ca * HW, a.data() + (n + 1) * Ca * HW,
              y.data() + n * (Ca + Cb) * HW);
    std::copy(b.data() + n * Cb * HW, b.data() + (n + 1) * Cb * HW,
              y.data() + (n * (Ca + Cb) + Ca) * HW);
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& y, std::int64_t ca) {
  const std::int64_t N = y.dim(0), C = y.dim(1), HW = y.dim(2) * y.dim(3);
  Tensor<T> a({N, ca, y.dim(2), y.dim(3)});
  Tensor<T> b({N, C - ca, y.dim(2), y.dim(3)});
  for (std::int64_t n = 0; n < N; ++n) {
    std::copy(y.data() + n * C * HW, y.data() + (n * C + ca) * HW, a.data() + n * ca * HW);
    std::copy(y.data() + (n * C + ca) * HW, y.data() + (n + 1) * C * HW,
              b.data() + n * (C - ca) * HW);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace dehaze::nn
