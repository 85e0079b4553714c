#pragma once

// Independent reference computations used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "pbcnn/nn_ops.hpp"
#include "pbcnn/tensor.hpp"

namespace pbcnn::testing {

/// Direct nested-loop cross-correlation. Accumulates in the tensor's own type,
/// kernel row-major, one output element at a time.
template <typename T>
BasicTensor<T> naive_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const ConvSpec& s) {
  const std::size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const std::size_t oh = (h + 2 * s.padding - s.kernel_size) / s.stride + 1;
  const std::size_t ow = (wd + 2 * s.padding - s.kernel_size) / s.stride + 1;
  BasicTensor<T> out({n, s.out_channels, oh, ow});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          T acc = T(0);
          for (std::size_t c = 0; c < s.in_channels; ++c) {
            for (std::size_t ki = 0; ki < s.kernel_size; ++ki) {
              for (std::size_t kj = 0; kj < s.kernel_size; ++kj) {
                const auto r = static_cast<long>(i * s.stride + ki) - static_cast<long>(s.padding);
                const auto q = static_cast<long>(j * s.stride + kj) - static_cast<long>(s.padding);
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(wd)) continue;
                acc += x.at(b, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)) * w.at(o, c, ki, kj);
              }
            }
          }
          out.at(b, o, i, j) = acc;
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  BasicTensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

/// Small integers, so every product and partial sum is exact in float.
inline Tensor integer_tensor(const Shape& shape, std::mt19937_64& rng, int lo = -4, int hi = 4) {
  std::uniform_int_distribution<int> dist(lo, hi);
  Tensor t(shape);
  for (auto& v : t.values()) v = static_cast<float>(dist(rng));
  return t;
}

/// Central difference of `f` with respect to *slot.
inline double central_difference(double* slot, const std::function<double()>& f, double h) {
  const double saved = *slot;
  *slot = saved + h;
  const double plus = f();
  *slot = saved - h;
  const double minus = f();
  *slot = saved;
  return (plus - minus) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|), or the plain difference when both are below `floor`.
inline double gradient_error(double analytic, double numeric, double floor = 1e-6) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double diff = std::abs(analytic - numeric);
  if (scale < floor) return diff <= floor ? 0.0 : diff;
  return diff / scale;
}

/// sum(g ⊙ y) in double.
template <typename T>
double weighted_sum(const BasicTensor<T>& g, const BasicTensor<T>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(g[i]) * static_cast<double>(y[i]);
  return s;
}

}  // namespace pbcnn::testing
