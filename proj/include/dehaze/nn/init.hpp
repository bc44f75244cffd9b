#pragma once

#include <string>
#include <vector>

#include "dehaze/nn/layers.hpp"
#include "dehaze/rng.hpp"
#include "dehaze/tensor.hpp"

namespace dehaze::nn {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                suffix) == 0;
}

// Deterministic initialization: weights ~ N(0, 0.02), biases and shift terms
// zero, scale terms one. Each tensor gets its own stream derived from the
// network seed and its registration ordinal, so layouts can be traversed in
// parallel or re-created piecemeal without changing a single bit.
template <typename T>
void init_parameters(std::vector<ParamRef<T>>& params, std::uint64_t seed,
                     double weight_stddev = 0.02) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& v = *params[i].value;
    if (ends_with(params[i].name, ".gamma")) {
      v.fill(T(1));
    } else if (ends_with(params[i].name, ".beta") || ends_with(params[i].name, ".b")) {
      v.fill(T(0));
    } else {
      auto eng = rng::engine(rng::derive(seed, i + 1));
      for (std::int64_t j = 0; j < v.numel(); ++j)
        v[j] = static_cast<T>(rng::normal(eng, 0.0, weight_stddev));
    }
    if (params[i].grad) params[i].grad->fill(T(0));
  }
}

template <typename T>
void zero_grads(std::vector<ParamRef<T>>& params) {
  for (auto& p : params)
    if (p.grad) p.grad->fill(T(0));
}

// FNV-1a over the raw parameter bytes; order-sensitive. Used by tests and the
// trainer to prove that frozen parameter groups did not move.
template <typename T>
std::uint64_t param_checksum(const std::vector<ParamRef<T>>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p.value->data());
    const std::size_t n = static_cast<std::size_t>(p.value->numel()) * sizeof(T);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace dehaze::nn
