#include "pbcnn/nn_ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace pbcnn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_rank(const char* op, const Shape& shape, std::size_t rank) {
  if (shape.size() != rank) throw ShapeError(op, "rank", rank, shape.size());
}

void require_dim(const char* op, const char* name, std::size_t expected, std::size_t actual) {
  if (expected != actual) throw ShapeError(op, name, expected, actual);
}

void check_conv_operands(const char* op, const Shape& input, const Shape& weight, const ConvSpec& spec) {
  spec.validate();
  require_rank(op, input, 4);
  require_rank(op, weight, 4);
  require_dim(op, "input.channels", spec.in_channels, input[1]);
  require_dim(op, "weight.out_channels", spec.out_channels, weight[0]);
  require_dim(op, "weight.in_channels", spec.in_channels, weight[1]);
  require_dim(op, "weight.kernel_h", spec.kernel_size, weight[2]);
  require_dim(op, "weight.kernel_w", spec.kernel_size, weight[3]);
  spec.output_size(input[2]);
  spec.output_size(input[3]);
}

// Rows index (c, kh, kw); columns index (n, oh, ow).
// Output columns [lo, hi) whose kernel tap kw lands inside the input row.
std::pair<std::size_t, std::size_t> valid_columns(const ConvSpec& spec, std::size_t kw, std::size_t in_w,
                                                  std::size_t out_w) {
  const auto s = static_cast<std::ptrdiff_t>(spec.stride);
  const auto offset = static_cast<std::ptrdiff_t>(kw) - static_cast<std::ptrdiff_t>(spec.padding);
  const std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(in_w) - 1 - offset;
  const std::ptrdiff_t hi = last < 0 ? 0 : std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_w), last / s + 1);
  return {static_cast<std::size_t>(std::min(lo, hi)), static_cast<std::size_t>(std::max(hi, std::min(lo, hi)))};
}

template <typename T>
/// Rows of length `row_len` (default n * plane); image first + n starts at column n * image_stride.
void im2col(const BasicTensor<T>& input, const ConvSpec& spec, std::size_t out_h, std::size_t out_w, T* cols,
            std::size_t image_stride = 0, std::size_t first = 0, std::size_t count = 0, std::size_t row_len = 0) {
  const std::size_t channels = input.dim(1);
  const std::size_t n_batch = count ? count : input.dim(0);
  const std::size_t in_h = input.dim(2), in_w = input.dim(3);
  const std::size_t k = spec.kernel_size, s = spec.stride;
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const std::size_t plane = out_h * out_w;
  if (image_stride == 0) image_stride = plane;
  if (row_len == 0) row_len = n_batch * image_stride;

  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t kh = 0; kh < k; ++kh) {
      for (std::size_t kw = 0; kw < k; ++kw) {
        T* row = cols + ((c * k + kh) * k + kw) * row_len;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const T* src = input.data() + ((first + n) * channels + c) * in_h * in_w;
          T* dst = row + n * image_stride;
          std::fill(dst + plane, dst + image_stride, T(0));
          for (std::size_t oh = 0; oh < out_h; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + kh) - pad;
            T* out_row = dst + oh * out_w;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) {
              std::fill(out_row, out_row + out_w, T(0));
              continue;
            }
            const T* in_row = src + ih * in_w;
            const auto [lo, hi] = valid_columns(spec, kw, in_w, out_w);
            std::fill(out_row, out_row + lo, T(0));
            std::fill(out_row + hi, out_row + out_w, T(0));
            if (lo == hi) continue;
            const T* first = in_row + (static_cast<std::ptrdiff_t>(lo * s + kw) - pad);
            if (s == 1) {
              std::copy(first, first + (hi - lo), out_row + lo);
            } else {
              for (std::size_t ow = lo; ow < hi; ++ow) out_row[ow] = first[(ow - lo) * s];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvSpec& spec, std::size_t out_h, std::size_t out_w, BasicTensor<T>& grad_input) {
  const std::size_t n_batch = grad_input.dim(0), channels = grad_input.dim(1);
  const std::size_t in_h = grad_input.dim(2), in_w = grad_input.dim(3);
  const std::size_t k = spec.kernel_size, s = spec.stride;
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const std::size_t plane = out_h * out_w;
  const std::size_t row_len = n_batch * plane;

  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t kh = 0; kh < k; ++kh) {
      for (std::size_t kw = 0; kw < k; ++kw) {
        const T* row = cols + ((c * k + kh) * k + kw) * row_len;
        for (std::size_t n = 0; n < n_batch; ++n) {
          T* dst = grad_input.data() + (n * channels + c) * in_h * in_w;
          const T* src = row + n * plane;
          for (std::size_t oh = 0; oh < out_h; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + kh) - pad;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
            T* in_row = dst + ih * in_w;
            const T* g_row = src + oh * out_w;
            const auto [lo, hi] = valid_columns(spec, kw, in_w, out_w);
            if (lo == hi) continue;
            T* first = in_row + (static_cast<std::ptrdiff_t>(lo * s + kw) - pad);
            for (std::size_t ow = lo; ow < hi; ++ow) first[(ow - lo) * s] += g_row[ow];
          }
        }
      }
    }
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (in_channels == 0) throw ShapeError("ConvSpec", "in_channels", 1, 0);
  if (out_channels == 0) throw ShapeError("ConvSpec", "out_channels", 1, 0);
  if (kernel_size % 2 == 0) throw ShapeError("ConvSpec", "kernel_size(odd)", kernel_size + 1, kernel_size);
  if (stride == 0) throw ShapeError("ConvSpec", "stride", 1, 0);
}

std::size_t ConvSpec::output_size(std::size_t input_size) const {
  if (input_size + 2 * padding < kernel_size) {
    throw ShapeError("ConvSpec", "spatial(input+2*padding>=kernel)", kernel_size, input_size + 2 * padding);
  }
  return (input_size + 2 * padding - kernel_size) / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const ConvSpec& spec) {
  check_conv_operands("conv2d_forward", input.shape(), weight.shape(), spec);
  const std::size_t n_batch = input.dim(0);
  const std::size_t out_h = spec.output_size(input.dim(2)), out_w = spec.output_size(input.dim(3));
  const std::size_t plane = out_h * out_w;
  const std::size_t patch = spec.fan_in();

  // Fixed-shape products over chunks of kConvChunk images, each image's columns
  // padded to a multiple of 8: the GEMM's blocking and kernel path then never
  // depend on the batch size or a row's slot, so rows are batch-independent.
  constexpr std::size_t kConvChunk = 8;
  const std::size_t stride = (plane + 7) / 8 * 8;
  const std::size_t chunk_cols = kConvChunk * stride;
  const std::size_t chunks = (n_batch + kConvChunk - 1) / kConvChunk;
  std::vector<T> cols(patch * chunks * chunk_cols, T(0));
  RowMat<T> result(spec.out_channels, chunk_cols);
  ConstMatMap<T> w(weight.data(), spec.out_channels, patch);
  BasicTensor<T> output({n_batch, spec.out_channels, out_h, out_w});
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    const std::size_t first = ch * kConvChunk;
    const std::size_t count = std::min(kConvChunk, n_batch - first);
    T* chunk = cols.data() + ch * patch * chunk_cols;
    im2col(input, spec, out_h, out_w, chunk, stride, first, count, chunk_cols);
    result.noalias() = w * ConstMatMap<T>(chunk, patch, chunk_cols);
    for (std::size_t n = 0; n < count; ++n) {
      for (std::size_t o = 0; o < spec.out_channels; ++o) {
        const T* src = result.data() + o * chunk_cols + n * stride;
        std::copy(src, src + plane, output.data() + ((first + n) * spec.out_channels + o) * plane);
      }
    }
  }
  return output;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input,
                             const BasicTensor<T>& weight, const ConvSpec& spec, bool need_input_grad,
                             bool need_weight_grad) {
  check_conv_operands("conv2d_backward", input.shape(), weight.shape(), spec);
  const std::size_t n_batch = input.dim(0);
  const std::size_t out_h = spec.output_size(input.dim(2)), out_w = spec.output_size(input.dim(3));
  require_rank("conv2d_backward", grad_output.shape(), 4);
  require_dim("conv2d_backward", "grad_output.batch", n_batch, grad_output.dim(0));
  require_dim("conv2d_backward", "grad_output.channels", spec.out_channels, grad_output.dim(1));
  require_dim("conv2d_backward", "grad_output.height", out_h, grad_output.dim(2));
  require_dim("conv2d_backward", "grad_output.width", out_w, grad_output.dim(3));

  const std::size_t plane = out_h * out_w;
  const std::size_t patch = spec.fan_in();
  const std::size_t cols_n = n_batch * plane;

  RowMat<T> g(spec.out_channels, cols_n);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      const T* src = grad_output.data() + (n * spec.out_channels + o) * plane;
      std::copy(src, src + plane, g.data() + o * cols_n + n * plane);
    }
  }

  ConvGrads<T> grads;
  if (need_weight_grad) {
    std::vector<T> cols(patch * cols_n);
    im2col(input, spec, out_h, out_w, cols.data());
    grads.grad_weight = BasicTensor<T>(spec.weight_shape());
    MatMap<T> gw(grads.grad_weight.data(), spec.out_channels, patch);
    ConstMatMap<T> c(cols.data(), patch, cols_n);
    gw.noalias() = g * c.transpose();
  }
  if (need_input_grad) {
    RowMat<T> grad_cols(patch, cols_n);
    ConstMatMap<T> w(weight.data(), spec.out_channels, patch);
    grad_cols.noalias() = w.transpose() * g;
    grads.grad_input = BasicTensor<T>(input.shape());
    col2im(grad_cols.data(), spec, out_h, out_w, grads.grad_input);
  }
  return grads;
}

template <typename T>
BatchNormResult<T> batchnorm_forward(const BasicTensor<T>& input, BatchNormState<T>& state, bool training,
                                     bool update_running_stats) {
  require_rank("batchnorm_forward", input.shape(), 4);
  const std::size_t n_batch = input.dim(0), channels = input.dim(1);
  require_dim("batchnorm_forward", "channels", state.channels(), channels);
  if (training && n_batch < 2) {
    throw StateError("batchnorm_forward: training mode needs a batch of at least 2, got " +
                     std::to_string(n_batch));
  }
  const std::size_t plane = input.dim(2) * input.dim(3);
  const std::size_t count = n_batch * plane;

  BatchNormResult<T> result;
  result.output = BasicTensor<T>(input.shape());
  result.cache.training = training;
  result.cache.gamma = state.gamma;
  result.cache.inv_std.resize(channels);
  if (training) result.cache.normalized = BasicTensor<T>(input.shape());

  for (std::size_t c = 0; c < channels; ++c) {
    T mean_t;
    T var_t;
    if (training) {
      double sum = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const T* x = input.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += x[i];
      }
      const double mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const T* x = input.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = x[i] - mean;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      mean_t = static_cast<T>(mean);
      var_t = static_cast<T>(var);
      if (update_running_stats) {
        const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
        const T m = state.momentum;
        state.running_mean[c] = (T(1) - m) * state.running_mean[c] + m * mean_t;
        state.running_var[c] = (T(1) - m) * state.running_var[c] + m * static_cast<T>(unbiased);
      }
    } else {
      mean_t = state.running_mean[c];
      var_t = state.running_var[c];
    }

    const T inv_std = T(1) / std::sqrt(var_t + state.epsilon);
    result.cache.inv_std[c] = inv_std;
    const T gamma = state.gamma[c], beta = state.beta[c];
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t offset = (n * channels + c) * plane;
      const T* x = input.data() + offset;
      T* y = result.output.data() + offset;
      T* xh = training ? result.cache.normalized.data() + offset : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T normalized = (x[i] - mean_t) * inv_std;
        if (xh) xh[i] = normalized;
        y[i] = gamma * normalized + beta;
      }
    }
  }
  return result;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& grad_output, const BatchNormCache<T>& cache) {
  if (!cache.training) throw StateError("batchnorm_backward: cache was produced in eval mode");
  if (!grad_output.same_shape(cache.normalized)) {
    require_rank("batchnorm_backward", grad_output.shape(), cache.normalized.rank());
    for (std::size_t i = 0; i < grad_output.rank(); ++i) {
      require_dim("batchnorm_backward", "grad_output", cache.normalized.dim(i), grad_output.dim(i));
    }
  }
  const std::size_t n_batch = grad_output.dim(0), channels = grad_output.dim(1);
  const std::size_t plane = grad_output.dim(2) * grad_output.dim(3);
  const double count = static_cast<double>(n_batch * plane);

  BatchNormGrads<T> grads;
  grads.grad_input = BasicTensor<T>(grad_output.shape());
  grads.grad_gamma = BasicTensor<T>({channels});
  grads.grad_beta = BasicTensor<T>({channels});

  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t offset = (n * channels + c) * plane;
      const T* dy = grad_output.data() + offset;
      const T* xh = cache.normalized.data() + offset;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
      }
    }
    grads.grad_beta[c] = static_cast<T>(sum_dy);
    grads.grad_gamma[c] = static_cast<T>(sum_dy_xh);

    const T scale = static_cast<T>(static_cast<double>(cache.gamma[c]) * cache.inv_std[c] / count);
    const T sum_dy_t = static_cast<T>(sum_dy);
    const T sum_dy_xh_t = static_cast<T>(sum_dy_xh);
    const T count_t = static_cast<T>(count);
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t offset = (n * channels + c) * plane;
      const T* dy = grad_output.data() + offset;
      const T* xh = cache.normalized.data() + offset;
      T* dx = grads.grad_input.data() + offset;
      for (std::size_t i = 0; i < plane; ++i) {
        dx[i] = scale * (count_t * dy[i] - sum_dy_t - xh[i] * sum_dy_xh_t);
      }
    }
  }
  return grads;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input) {
  if (!grad_output.same_shape(input)) throw ShapeError("relu_backward", "numel", input.size(), grad_output.size());
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? grad_output[i] : T(0);
  return out;
}

template <typename T>
BasicTensor<T> affine_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias) {
  require_rank("affine_forward", input.shape(), 2);
  require_rank("affine_forward", weight.shape(), 2);
  require_rank("affine_forward", bias.shape(), 1);
  require_dim("affine_forward", "weight.rows(input features)", input.dim(1), weight.dim(0));
  require_dim("affine_forward", "bias.size(output features)", weight.dim(1), bias.dim(0));
  const std::size_t n = input.dim(0), d = input.dim(1), c = weight.dim(1);

  BasicTensor<T> out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < d; ++k) acc += input.at(i, k) * weight.at(k, j);
      out.at(i, j) = acc + bias[j];
    }
  }
  return out;
}

template <typename T>
AffineGrads<T> affine_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input,
                               const BasicTensor<T>& weight) {
  require_rank("affine_backward", grad_output.shape(), 2);
  require_rank("affine_backward", input.shape(), 2);
  require_rank("affine_backward", weight.shape(), 2);
  require_dim("affine_backward", "weight.rows(input features)", input.dim(1), weight.dim(0));
  require_dim("affine_backward", "grad_output.rows", input.dim(0), grad_output.dim(0));
  require_dim("affine_backward", "grad_output.cols", weight.dim(1), grad_output.dim(1));
  const std::size_t n = input.dim(0), d = input.dim(1), c = weight.dim(1);

  AffineGrads<T> grads;
  grads.grad_input = BasicTensor<T>({n, d});
  grads.grad_weight = BasicTensor<T>({d, c});
  grads.grad_bias = BasicTensor<T>({c});
  ConstMatMap<T> g(grad_output.data(), n, c);
  MatMap<T>(grads.grad_input.data(), n, d).noalias() = g * ConstMatMap<T>(weight.data(), d, c).transpose();
  MatMap<T>(grads.grad_weight.data(), d, c).noalias() = ConstMatMap<T>(input.data(), n, d).transpose() * g;
  for (std::size_t j = 0; j < c; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += grad_output.at(i, j);
    grads.grad_bias[j] = static_cast<T>(sum);
  }
  return grads;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
  require_rank("global_avg_pool", input.shape(), 4);
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  BasicTensor<T> out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    const T* x = input.data() + i * plane;
    double sum = 0.0;
    for (std::size_t p = 0; p < plane; ++p) sum += x[p];
    out[i] = static_cast<T>(sum / static_cast<double>(plane));
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_output, const Shape& input_shape) {
  require_rank("global_avg_pool_backward", input_shape, 4);
  require_rank("global_avg_pool_backward", grad_output.shape(), 2);
  require_dim("global_avg_pool_backward", "batch", input_shape[0], grad_output.dim(0));
  require_dim("global_avg_pool_backward", "channels", input_shape[1], grad_output.dim(1));
  const std::size_t plane = input_shape[2] * input_shape[3];
  BasicTensor<T> out(input_shape);
  const T inv = T(1) / static_cast<T>(plane);
  for (std::size_t i = 0; i < grad_output.size(); ++i) {
    std::fill_n(out.data() + i * plane, plane, grad_output[i] * inv);
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank("softmax", logits.shape(), 2);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  BasicTensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.data() + i * c;
    T* p = out.data() + i * c;
    const T zmax = *std::max_element(z, z + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(z[j] - zmax);
      sum += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] = static_cast<T>(p[j] / sum);
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& grad_probs, const BasicTensor<T>& probs) {
  require_rank("softmax_backward", probs.shape(), 2);
  if (!grad_probs.same_shape(probs)) throw ShapeError("softmax_backward", "numel", probs.size(), grad_probs.size());
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  BasicTensor<T> out(probs.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < c; ++j) dot += static_cast<double>(grad_probs.at(i, j)) * probs.at(i, j);
    for (std::size_t j = 0; j < c; ++j) {
      out.at(i, j) = static_cast<T>(probs.at(i, j) * (grad_probs.at(i, j) - dot));
    }
  }
  return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& target, const BasicTensor<T>& other) {
  if (!target.same_shape(other)) throw ShapeError("add_inplace", "numel", target.size(), other.size());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += other[i];
}

#define PBCNN_INSTANTIATE_OPS(T)                                                                                \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&, const ConvSpec&);       \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                        const ConvSpec&, bool, bool);                                           \
  template BatchNormResult<T> batchnorm_forward(const BasicTensor<T>&, BatchNormState<T>&, bool, bool);       \
  template BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>&, const BatchNormCache<T>&);              \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                         \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> affine_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template AffineGrads<T> affine_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                              \
  template BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>&, const Shape&);                       \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> softmax_backward(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);

PBCNN_INSTANTIATE_OPS(float)
PBCNN_INSTANTIATE_OPS(double)

#undef PBCNN_INSTANTIATE_OPS

}  // namespace pbcnn
