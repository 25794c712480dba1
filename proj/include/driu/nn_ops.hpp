#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "driu/tensor.hpp"

// Layer primitives with explicit forward/backward pairs. Every forward returns
// its output together with the cache its backward consumes. All functions are
// pure; nothing here keeps global state.

namespace driu {

/// Stride-1, same-padded square convolution.
struct ConvSpec {
  int out_channels = 1;
  int kernel = 3;  // 1 or 3

  int pad() const noexcept { return (kernel - 1) / 2; }
  void validate() const;
};

enum class ConvAlgorithm { direct, im2col };

template <typename T>
struct ConvCache {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  ConvSpec spec;
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

template <typename T>
std::pair<BasicTensor<T>, ConvCache<T>> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                                       const BasicTensor<T>& bias, const ConvSpec& spec,
                                                       ConvAlgorithm algorithm = ConvAlgorithm::im2col);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& grad_out, const ConvCache<T>& cache);

template <typename T>
struct ReluCache {
  BasicTensor<T> input;
};

template <typename T>
std::pair<BasicTensor<T>, ReluCache<T>> relu(const BasicTensor<T>& input);

// Subgradient at exactly zero is zero.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_out, const ReluCache<T>& cache);

struct PoolCache {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 stride-2 max pooling in ceil mode. Border windows are truncated and
/// ties go to the first element in row-major order.
template <typename T>
std::pair<BasicTensor<T>, PoolCache> maxpool2x2(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& grad_out, const PoolCache& cache);

struct LerpTap {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;  // weight of `hi`
};

struct ResizeCache {
  Shape input_shape;
  std::vector<LerpTap> rows;
  std::vector<LerpTap> cols;
};

// Align-corners source taps for resizing `in` samples to `out` samples.
std::vector<LerpTap> align_corners_taps(int in, int out);

/// Bilinear upsampling with align-corners mapping src = dst*(h-1)/(H-1).
/// Downscaling throws UnsupportedError.
template <typename T>
std::pair<BasicTensor<T>, ResizeCache> bilinear_resize(const BasicTensor<T>& input, int out_height, int out_width);

template <typename T>
BasicTensor<T> bilinear_resize_backward(const BasicTensor<T>& grad_out, const ResizeCache& cache);

struct ConcatCache {
  std::vector<int> channel_counts;
  int height = 0;
  int width = 0;
};

template <typename T>
std::pair<BasicTensor<T>, ConcatCache> concat_channels(std::span<const BasicTensor<T>> inputs);

template <typename T>
std::vector<BasicTensor<T>> concat_backward(const BasicTensor<T>& grad_out, const ConcatCache& cache);

template <typename T>
T sigmoid(T a) noexcept {
  if (a >= T{0}) return T{1} / (T{1} + std::exp(-a));
  const T e = std::exp(a);
  return e / (T{1} + e);
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& activation) {
  BasicTensor<T> out(activation.shape());
  auto src = activation.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = sigmoid(src[i]);
  return out;
}

}  // namespace driu
