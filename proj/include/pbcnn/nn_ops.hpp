#pragma once

// Deterministic layer primitives. All functions are pure over their inputs
// (batchnorm_forward additionally updates running statistics when asked).
// Every op is instantiated for float (training) and double (gradient checks).

#include <cstddef>
#include <span>

#include "pbcnn/tensor.hpp"

namespace pbcnn {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// Throws ShapeError for even kernels, zero stride or an empty output.
  void validate() const;
  std::size_t output_size(std::size_t input_size) const;
  Shape weight_shape() const { return {out_channels, in_channels, kernel_size, kernel_size}; }
  std::size_t fan_in() const { return in_channels * kernel_size * kernel_size; }
};

/// Bias-free cross-correlation, NCHW input, OIkk weight.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const ConvSpec& spec);

template <typename T>
struct ConvGrads {
  BasicTensor<T> grad_input;   // empty when not requested
  BasicTensor<T> grad_weight;  // empty when not requested
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input,
                             const BasicTensor<T>& weight, const ConvSpec& spec, bool need_input_grad = true,
                             bool need_weight_grad = true);

template <typename T>
struct BatchNormState {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : gamma({channels}, T(1)), beta({channels}), running_mean({channels}), running_var({channels}, T(1)) {}

  std::size_t channels() const { return gamma.size(); }

  template <typename U>
  BatchNormState<U> cast() const {
    BatchNormState<U> out;
    out.gamma = gamma.template cast<U>();
    out.beta = beta.template cast<U>();
    out.running_mean = running_mean.template cast<U>();
    out.running_var = running_var.template cast<U>();
    out.momentum = static_cast<U>(momentum);
    out.epsilon = static_cast<U>(epsilon);
    return out;
  }
};

template <typename T>
struct BatchNormCache {
  bool training = false;
  BasicTensor<T> normalized;  // x_hat
  std::vector<T> inv_std;
  BasicTensor<T> gamma;
};

template <typename T>
struct BatchNormResult {
  BasicTensor<T> output;
  BatchNormCache<T> cache;
};

/// Training mode normalizes with biased batch statistics and, when
/// `update_running_stats` is set, folds them into the running averages
/// (unbiased variance). Eval mode reads only the running statistics.
template <typename T>
BatchNormResult<T> batchnorm_forward(const BasicTensor<T>& input, BatchNormState<T>& state, bool training,
                                     bool update_running_stats = true);

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> grad_input;
  BasicTensor<T> grad_gamma;
  BasicTensor<T> grad_beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& grad_output, const BatchNormCache<T>& cache);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// Subgradient 0 at exactly 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input);

/// input N×D, weight D×C, bias C.
template <typename T>
BasicTensor<T> affine_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
struct AffineGrads {
  BasicTensor<T> grad_input;
  BasicTensor<T> grad_weight;
  BasicTensor<T> grad_bias;
};

template <typename T>
AffineGrads<T> affine_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input,
                               const BasicTensor<T>& weight);

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_output, const Shape& input_shape);

/// Row-wise softmax with max subtraction.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// Vector-Jacobian product of the softmax: p ⊙ (g − Σ g·p) per row.
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& grad_probs, const BasicTensor<T>& probs);

template <typename T>
void add_inplace(BasicTensor<T>& target, const BasicTensor<T>& other);

}  // namespace pbcnn
