#include "driu/nn_ops.hpp"

#include <string>

namespace driu {

void ConvSpec::validate() const {
  if (kernel != 1 && kernel != 3) throw InvalidArgument("conv kernel must be 1 or 3, got " + std::to_string(kernel));
  if (out_channels < 1) throw InvalidArgument("conv out_channels must be >= 1");
}

namespace {

template <typename T>
void check_conv_args(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                     const ConvSpec& spec) {
  spec.validate();
  if (input.rank() != 3) throw ShapeError("conv input must be (C,H,W), got " + shape_to_string(input.shape()));
  const Shape expected_w{spec.out_channels, input.channels(), spec.kernel, spec.kernel};
  if (weights.shape() != expected_w) {
    throw ShapeError("conv weights " + shape_to_string(weights.shape()) + " do not match expected " +
                     shape_to_string(expected_w));
  }
  if (bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("conv bias " + shape_to_string(bias.shape()) + " does not match out_channels " +
                     std::to_string(spec.out_channels));
  }
}

// Unfolds (C,H,W) into a (C*k*k, H*W) patch matrix with zero padding.
template <typename T>
std::vector<T> im2col(const BasicTensor<T>& input, int k) {
  const int channels = input.channels(), height = input.height(), width = input.width();
  const int pad = (k - 1) / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<T> col(static_cast<std::size_t>(channels) * k * k * plane, T{0});
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        T* dst = col.data() + row * plane;
        for (int y = 0; y < height; ++y) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= height) continue;
          for (int x = 0; x < width; ++x) {
            const int ix = x + kx - pad;
            if (ix < 0 || ix >= width) continue;
            dst[static_cast<std::size_t>(y) * width + x] = input.at(c, iy, ix);
          }
        }
      }
    }
  }
  return col;
}

template <typename T>
void col2im(std::span<const T> col, int k, BasicTensor<T>& grad_input) {
  const int channels = grad_input.channels(), height = grad_input.height(), width = grad_input.width();
  const int pad = (k - 1) / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        const T* src = col.data() + row * plane;
        for (int y = 0; y < height; ++y) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= height) continue;
          for (int x = 0; x < width; ++x) {
            const int ix = x + kx - pad;
            if (ix < 0 || ix >= width) continue;
            grad_input.at(c, iy, ix) += src[static_cast<std::size_t>(y) * width + x];
          }
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> conv_direct(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                           const ConvSpec& spec) {
  const int channels = input.channels(), height = input.height(), width = input.width();
  const int k = spec.kernel, pad = spec.pad();
  BasicTensor<T> out(Shape{spec.out_channels, height, width});
  for (int o = 0; o < spec.out_channels; ++o) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        T acc = bias[static_cast<std::size_t>(o)];
        for (int c = 0; c < channels; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = y + ky - pad;
            if (iy < 0 || iy >= height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = x + kx - pad;
              if (ix < 0 || ix >= width) continue;
              acc += weights[((static_cast<std::size_t>(o) * channels + c) * k + ky) * k + kx] * input.at(c, iy, ix);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> conv_im2col(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                           const ConvSpec& spec) {
  const int height = input.height(), width = input.width();
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t rows = static_cast<std::size_t>(input.channels()) * spec.kernel * spec.kernel;
  std::vector<T> unfolded;
  std::span<const T> col;
  if (spec.kernel == 1) {
    col = input.data();
  } else {
    unfolded = im2col(input, spec.kernel);
    col = unfolded;
  }
  BasicTensor<T> out(Shape{spec.out_channels, height, width});
  auto dst_all = out.data();
  auto w = weights.data();
  for (int o = 0; o < spec.out_channels; ++o) {
    T* dst = dst_all.data() + static_cast<std::size_t>(o) * plane;
    std::fill(dst, dst + plane, bias[static_cast<std::size_t>(o)]);
    for (std::size_t r = 0; r < rows; ++r) {
      const T coeff = w[static_cast<std::size_t>(o) * rows + r];
      const T* src = col.data() + r * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] += coeff * src[p];
    }
  }
  return out;
}

}  // namespace

template <typename T>
std::pair<BasicTensor<T>, ConvCache<T>> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                                       const BasicTensor<T>& bias, const ConvSpec& spec,
                                                       ConvAlgorithm algorithm) {
  check_conv_args(input, weights, bias, spec);
  BasicTensor<T> out = algorithm == ConvAlgorithm::direct ? conv_direct(input, weights, bias, spec)
                                                          : conv_im2col(input, weights, bias, spec);
  return {std::move(out), ConvCache<T>{input, weights, spec}};
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& grad_out, const ConvCache<T>& cache) {
  const BasicTensor<T>& input = cache.input;
  const int height = input.height(), width = input.width();
  const int k = cache.spec.kernel;
  const int out_channels = cache.spec.out_channels;
  const Shape expected{out_channels, height, width};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv backward: grad shape " + shape_to_string(grad_out.shape()) + " != forward output " +
                     shape_to_string(expected));
  }
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t rows = static_cast<std::size_t>(input.channels()) * k * k;

  std::vector<T> unfolded;
  std::span<const T> col;
  if (k == 1) {
    col = input.data();
  } else {
    unfolded = im2col(input, k);
    col = unfolded;
  }

  ConvGrads<T> grads{BasicTensor<T>(input.shape()), BasicTensor<T>(cache.weights.shape()),
                     BasicTensor<T>(Shape{out_channels})};
  auto g = grad_out.data();
  auto w = cache.weights.data();
  auto gw = grads.weights.data();
  std::vector<T> grad_col(rows * plane, T{0});

  for (int o = 0; o < out_channels; ++o) {
    const T* go = g.data() + static_cast<std::size_t>(o) * plane;
    T bias_sum{0};
    for (std::size_t p = 0; p < plane; ++p) bias_sum += go[p];
    grads.bias[static_cast<std::size_t>(o)] = bias_sum;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = col.data() + r * plane;
      T acc{0};
      for (std::size_t p = 0; p < plane; ++p) acc += go[p] * src[p];
      gw[static_cast<std::size_t>(o) * rows + r] = acc;
      const T coeff = w[static_cast<std::size_t>(o) * rows + r];
      T* gc = grad_col.data() + r * plane;
      for (std::size_t p = 0; p < plane; ++p) gc[p] += coeff * go[p];
    }
  }

  if (k == 1) {
    std::copy(grad_col.begin(), grad_col.end(), grads.input.data().begin());
  } else {
    col2im<T>(grad_col, k, grads.input);
  }
  return grads;
}

template <typename T>
std::pair<BasicTensor<T>, ReluCache<T>> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
  return {std::move(out), ReluCache<T>{input}};
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_out, const ReluCache<T>& cache) {
  if (grad_out.shape() != cache.input.shape()) {
    throw ShapeError("relu backward: grad shape " + shape_to_string(grad_out.shape()) + " != input " +
                     shape_to_string(cache.input.shape()));
  }
  BasicTensor<T> grad(grad_out.shape());
  auto x = cache.input.data();
  auto g = grad_out.data();
  auto dst = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] > T{0} ? g[i] : T{0};
  return grad;
}

template <typename T>
std::pair<BasicTensor<T>, PoolCache> maxpool2x2(const BasicTensor<T>& input) {
  if (input.rank() != 3) throw ShapeError("maxpool input must be (C,H,W), got " + shape_to_string(input.shape()));
  const int channels = input.channels(), height = input.height(), width = input.width();
  const int out_h = (height + 1) / 2, out_w = (width + 1) / 2;
  BasicTensor<T> out(Shape{channels, out_h, out_w});
  PoolCache cache{input.shape(), out.shape(), std::vector<std::uint32_t>(out.size())};
  std::size_t o = 0;
  for (int c = 0; c < channels; ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox, ++o) {
        const int y_end = std::min(2 * oy + 2, height), x_end = std::min(2 * ox + 2, width);
        std::size_t best = (static_cast<std::size_t>(c) * height + 2 * oy) * width + 2 * ox;
        T best_value = input[best];
        for (int y = 2 * oy; y < y_end; ++y) {
          for (int x = 2 * ox; x < x_end; ++x) {
            const std::size_t idx = (static_cast<std::size_t>(c) * height + y) * width + x;
            if (input[idx] > best_value) {
              best_value = input[idx];
              best = idx;
            }
          }
        }
        out[o] = best_value;
        cache.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& grad_out, const PoolCache& cache) {
  if (grad_out.shape() != cache.output_shape) {
    throw ShapeError("maxpool backward: grad shape " + shape_to_string(grad_out.shape()) + " != output " +
                     shape_to_string(cache.output_shape));
  }
  BasicTensor<T> grad(cache.input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad[cache.argmax[o]] += grad_out[o];
  return grad;
}

std::vector<LerpTap> align_corners_taps(int in, int out) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out));
  for (int d = 0; d < out; ++d) {
    LerpTap& tap = taps[static_cast<std::size_t>(d)];
    if (out == 1 || in == 1) continue;  // constant map onto sample 0
    // Integer numerator keeps the end points exact.
    const double src = static_cast<double>(static_cast<long long>(d) * (in - 1)) / static_cast<double>(out - 1);
    tap.lo = std::min(static_cast<int>(src), in - 1);
    tap.hi = std::min(tap.lo + 1, in - 1);
    tap.frac = src - tap.lo;
  }
  return taps;
}

template <typename T>
std::pair<BasicTensor<T>, ResizeCache> bilinear_resize(const BasicTensor<T>& input, int out_height, int out_width) {
  if (input.rank() != 3) throw ShapeError("resize input must be (C,H,W), got " + shape_to_string(input.shape()));
  const int channels = input.channels(), height = input.height(), width = input.width();
  if (out_height < height || out_width < width) {
    throw UnsupportedError("bilinear_resize supports upsampling only: " + shape_to_string(input.shape()) + " -> (" +
                           std::to_string(out_height) + "," + std::to_string(out_width) + ")");
  }
  ResizeCache cache{input.shape(), align_corners_taps(height, out_height), align_corners_taps(width, out_width)};
  BasicTensor<T> out(Shape{channels, out_height, out_width});
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < out_height; ++y) {
      const LerpTap& ry = cache.rows[static_cast<std::size_t>(y)];
      const T fy = static_cast<T>(ry.frac);
      for (int x = 0; x < out_width; ++x) {
        const LerpTap& rx = cache.cols[static_cast<std::size_t>(x)];
        const T fx = static_cast<T>(rx.frac);
        const T top = input.at(c, ry.lo, rx.lo) * (T{1} - fx) + input.at(c, ry.lo, rx.hi) * fx;
        const T bottom = input.at(c, ry.hi, rx.lo) * (T{1} - fx) + input.at(c, ry.hi, rx.hi) * fx;
        out.at(c, y, x) = top * (T{1} - fy) + bottom * fy;
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
BasicTensor<T> bilinear_resize_backward(const BasicTensor<T>& grad_out, const ResizeCache& cache) {
  const int channels = cache.input_shape[0];
  const int out_height = static_cast<int>(cache.rows.size()), out_width = static_cast<int>(cache.cols.size());
  if (grad_out.shape() != Shape{channels, out_height, out_width}) {
    throw ShapeError("resize backward: unexpected grad shape " + shape_to_string(grad_out.shape()));
  }
  BasicTensor<T> grad(cache.input_shape);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < out_height; ++y) {
      const LerpTap& ry = cache.rows[static_cast<std::size_t>(y)];
      const T fy = static_cast<T>(ry.frac);
      for (int x = 0; x < out_width; ++x) {
        const LerpTap& rx = cache.cols[static_cast<std::size_t>(x)];
        const T fx = static_cast<T>(rx.frac);
        const T g = grad_out.at(c, y, x);
        grad.at(c, ry.lo, rx.lo) += g * (T{1} - fy) * (T{1} - fx);
        grad.at(c, ry.lo, rx.hi) += g * (T{1} - fy) * fx;
        grad.at(c, ry.hi, rx.lo) += g * fy * (T{1} - fx);
        grad.at(c, ry.hi, rx.hi) += g * fy * fx;
      }
    }
  }
  return grad;
}

template <typename T>
std::pair<BasicTensor<T>, ConcatCache> concat_channels(std::span<const BasicTensor<T>> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  ConcatCache cache;
  cache.height = inputs.front().height();
  cache.width = inputs.front().width();
  int total = 0;
  for (const auto& t : inputs) {
    if (t.rank() != 3 || t.height() != cache.height || t.width() != cache.width) {
      throw ShapeError("concat_channels: spatial mismatch, " + shape_to_string(t.shape()) + " vs (" +
                       std::to_string(cache.height) + "," + std::to_string(cache.width) + ")");
    }
    cache.channel_counts.push_back(t.channels());
    total += t.channels();
  }
  BasicTensor<T> out(Shape{total, cache.height, cache.width});
  auto dst = out.data().begin();
  for (const auto& t : inputs) dst = std::copy(t.data().begin(), t.data().end(), dst);
  return {std::move(out), std::move(cache)};
}

template <typename T>
std::vector<BasicTensor<T>> concat_backward(const BasicTensor<T>& grad_out, const ConcatCache& cache) {
  int total = 0;
  for (int c : cache.channel_counts) total += c;
  if (grad_out.shape() != Shape{total, cache.height, cache.width}) {
    throw ShapeError("concat backward: unexpected grad shape " + shape_to_string(grad_out.shape()));
  }
  std::vector<BasicTensor<T>> parts;
  parts.reserve(cache.channel_counts.size());
  auto src = grad_out.data().begin();
  for (int c : cache.channel_counts) {
    BasicTensor<T> part(Shape{c, cache.height, cache.width});
    std::copy(src, src + static_cast<std::ptrdiff_t>(part.size()), part.data().begin());
    src += static_cast<std::ptrdiff_t>(part.size());
    parts.push_back(std::move(part));
  }
  return parts;
}

#define DRIU_INSTANTIATE_OPS(T)                                                                                  \
  template std::pair<BasicTensor<T>, ConvCache<T>> conv2d_forward<T>(const BasicTensor<T>&, const BasicTensor<T>&, \
                                                                     const BasicTensor<T>&, const ConvSpec&,       \
                                                                     ConvAlgorithm);                               \
  template ConvGrads<T> conv2d_backward<T>(const BasicTensor<T>&, const ConvCache<T>&);                          \
  template std::pair<BasicTensor<T>, ReluCache<T>> relu<T>(const BasicTensor<T>&);                               \
  template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const ReluCache<T>&);                          \
  template std::pair<BasicTensor<T>, PoolCache> maxpool2x2<T>(const BasicTensor<T>&);                            \
  template BasicTensor<T> maxpool2x2_backward<T>(const BasicTensor<T>&, const PoolCache&);                       \
  template std::pair<BasicTensor<T>, ResizeCache> bilinear_resize<T>(const BasicTensor<T>&, int, int);           \
  template BasicTensor<T> bilinear_resize_backward<T>(const BasicTensor<T>&, const ResizeCache&);                \
  template std::pair<BasicTensor<T>, ConcatCache> concat_channels<T>(std::span<const BasicTensor<T>>);           \
  template std::vector<BasicTensor<T>> concat_backward<T>(const BasicTensor<T>&, const ConcatCache&);

DRIU_INSTANTIATE_OPS(float)
DRIU_INSTANTIATE_OPS(double)

#undef DRIU_INSTANTIATE_OPS

}  // namespace driu
