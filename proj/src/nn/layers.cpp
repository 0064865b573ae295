#include "pvcrack/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace pvcrack::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require_rank(const Shape& s, int rank, const char* what) {
  if (static_cast<int>(s.size()) != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(s));
}

struct ConvDims {
  int h, w, c, k, out_c, oh, ow, stride, pad;
  long rows() const { return static_cast<long>(oh) * ow; }
  long cols() const { return static_cast<long>(k) * k * c; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
ConvDims conv_dims(const BasicTensor<T>& input, const BasicTensor<T>& weights, int stride,
                   int padding) {
  require_rank(input.shape(), 3, "conv2d input");
  require_rank(weights.shape(), 4, "conv2d weights");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  if (weights.dim(0) != weights.dim(1)) throw ShapeError("conv2d: kernel must be square");
  if (weights.dim(2) != input.dim(2))
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(2)) +
                     " channels, weights expect " + std::to_string(weights.dim(2)));
  ConvDims d{};
  d.h = input.dim(0);
  d.w = input.dim(1);
  d.c = input.dim(2);
  d.k = weights.dim(0);
  d.out_c = weights.dim(3);
  d.stride = stride;
  d.pad = padding;
  d.oh = conv_out_extent(d.h, d.k, stride, padding);
  d.ow = conv_out_extent(d.w, d.k, stride, padding);
  return d;
}

// Within one kernel row the k taps of an HWC input are k*c contiguous
// values, so interior pixels copy a single run per kernel row.
template <typename T>
void im2col(const T* in, const ConvDims& d, T* col) {
  const long K = d.cols();
  const int run = d.k * d.c;
  for (int oy = 0; oy < d.oh; ++oy) {
    for (int ky = 0; ky < d.k; ++ky) {
      const int iy = oy * d.stride - d.pad + ky;
      T* base = col + static_cast<long>(oy) * d.ow * K + static_cast<long>(ky) * run;
      if (iy < 0 || iy >= d.h) {
        for (int ox = 0; ox < d.ow; ++ox) std::fill_n(base + ox * K, run, T{0});
        continue;
      }
      const T* src_row = in + static_cast<long>(iy) * d.w * d.c;
      for (int ox = 0; ox < d.ow; ++ox) {
        T* dst = base + ox * K;
        const int ix0 = ox * d.stride - d.pad;
        if (ix0 >= 0 && ix0 + d.k <= d.w) {
          const T* src = src_row + static_cast<long>(ix0) * d.c;
          for (int i = 0; i < run; ++i) dst[i] = src[i];
          continue;
        }
        for (int kx = 0; kx < d.k; ++kx) {
          const int ix = ix0 + kx;
          T* seg = dst + kx * d.c;
          if (ix < 0 || ix >= d.w) {
            std::fill_n(seg, d.c, T{0});
          } else {
            const T* src = src_row + static_cast<long>(ix) * d.c;
            for (int ch = 0; ch < d.c; ++ch) seg[ch] = src[ch];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* in) {
  const long K = d.cols();
  const int run = d.k * d.c;
  for (int oy = 0; oy < d.oh; ++oy) {
    for (int ky = 0; ky < d.k; ++ky) {
      const int iy = oy * d.stride - d.pad + ky;
      if (iy < 0 || iy >= d.h) continue;
      const T* base = col + static_cast<long>(oy) * d.ow * K + static_cast<long>(ky) * run;
      T* dst_row = in + static_cast<long>(iy) * d.w * d.c;
      for (int ox = 0; ox < d.ow; ++ox) {
        const T* src = base + ox * K;
        const int ix0 = ox * d.stride - d.pad;
        if (ix0 >= 0 && ix0 + d.k <= d.w) {
          T* dst = dst_row + static_cast<long>(ix0) * d.c;
          for (int i = 0; i < run; ++i) dst[i] += src[i];
          continue;
        }
        for (int kx = 0; kx < d.k; ++kx) {
          const int ix = ix0 + kx;
          if (ix < 0 || ix >= d.w) continue;
          T* dst = dst_row + static_cast<long>(ix) * d.c;
          const T* seg = src + kx * d.c;
          for (int ch = 0; ch < d.c; ++ch) dst[ch] += seg[ch];
        }
      }
    }
  }
}

template <typename T>
int argmax_index(const BasicTensor<T>& t) {
  int best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

int conv_out_extent(int in, int kernel, int stride, int padding) {
  if (stride < 1) throw ShapeError("stride must be >= 1");
  const int span = in + 2 * padding - kernel;
  if (span < 0)
    throw ShapeError("kernel " + std::to_string(kernel) + " does not fit extent " +
                     std::to_string(in) + " with padding " + std::to_string(padding));
  return span / stride + 1;
}

template <typename T>
void conv2d_into(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                 const BasicTensor<T>& bias, int stride, int padding, BasicTensor<T>& out,
                 AlignedVector<T>& col) {
  const ConvDims d = conv_dims(input, weights, stride, padding);
  if (bias.size() != static_cast<std::size_t>(d.out_c))
    throw ShapeError("conv2d: bias length does not match out channels");

  out.resize({d.oh, d.ow, d.out_c});
  MapMat<T> y(out.data(), d.rows(), d.out_c);
  ConstMapMat<T> w(weights.data(), d.cols(), d.out_c);

  if (d.pointwise()) {
    ConstMapMat<T> x(input.data(), d.rows(), d.cols());
    y.noalias() = x * w;
  } else {
    col.resize(static_cast<std::size_t>(d.rows() * d.cols()));
    im2col(input.data(), d, col.data());
    ConstMapMat<T> x(col.data(), d.rows(), d.cols());
    y.noalias() = x * w;
  }
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), d.out_c);
  y.rowwise() += b;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                      const BasicTensor<T>& bias, int stride, int padding,
                      AlignedVector<T>* col) {
  BasicTensor<T> out;
  AlignedVector<T> local;
  conv2d_into(input, weights, bias, stride, padding, out, col ? *col : local);
  return out;
}

template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights, int stride,
                     int padding, const BasicTensor<T>& out_grad,
                     BasicTensor<T>& weight_grad, BasicTensor<T>& bias_grad,
                     BasicTensor<T>* input_grad, const AlignedVector<T>* col,
                     AlignedVector<T>* scratch) {
  const ConvDims d = conv_dims(input, weights, stride, padding);
  if (out_grad.shape() != Shape{d.oh, d.ow, d.out_c})
    throw ShapeError("conv2d_backward: out_grad shape " + shape_str(out_grad.shape()));
  if (weight_grad.shape() != weights.shape() ||
      bias_grad.size() != static_cast<std::size_t>(d.out_c))
    throw ShapeError("conv2d_backward: gradient buffers do not match parameters");

  ConstMapMat<T> dy(out_grad.data(), d.rows(), d.out_c);
  ConstMapMat<T> w(weights.data(), d.cols(), d.out_c);
  MapMat<T> dw(weight_grad.data(), d.cols(), d.out_c);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_grad.data(), d.out_c);
  db += dy.colwise().sum();

  if (d.pointwise()) {
    ConstMapMat<T> x(input.data(), d.rows(), d.cols());
    dw.noalias() += x.transpose() * dy;
    if (input_grad) {
      input_grad->resize(input.shape());
      MapMat<T> dx(input_grad->data(), d.rows(), d.cols());
      dx.noalias() = dy * w.transpose();
    }
    return;
  }

  const std::size_t n = static_cast<std::size_t>(d.rows() * d.cols());
  AlignedVector<T> local;
  const T* colp = nullptr;
  if (col && col->size() == n) {
    colp = col->data();
  } else {
    local.resize(n);
    im2col(input.data(), d, local.data());
    colp = local.data();
  }
  ConstMapMat<T> x(colp, d.rows(), d.cols());
  dw.noalias() += x.transpose() * dy;

  if (input_grad) {
    AlignedVector<T> local_dcol;
    AlignedVector<T>& dcol = scratch ? *scratch : local_dcol;
    dcol.resize(n);
    MapMat<T> dc(dcol.data(), d.rows(), d.cols());
    dc.noalias() = dy * w.transpose();
    input_grad->resize(input.shape(), true);
    col2im_add(dcol.data(), d, input_grad->data());
  }
}

template <typename T>
LayerGrad<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             int stride, int padding, const BasicTensor<T>& out_grad) {
  LayerGrad<T> g;
  g.param_grads.emplace_back(weights.shape());
  g.param_grads.emplace_back(Shape{weights.dim(3)});
  conv2d_backward(input, weights, stride, padding, out_grad, g.param_grads[0],
                  g.param_grads[1], &g.input_grad);
  return g;
}

template <typename T>
void maxpool2d_into(const BasicTensor<T>& input, int window, int stride, int padding,
                    BasicTensor<T>& out, std::vector<std::int32_t>* argmax) {
  require_rank(input.shape(), 3, "maxpool2d input");
  if (window < 1 || stride < 1) throw ShapeError("maxpool2d: window and stride must be >= 1");
  if (padding < 0 || padding >= window)
    throw ShapeError("maxpool2d: padding must be in [0, window)");
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (window > h + 2 * padding || window > w + 2 * padding)
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " larger than input " +
                     shape_str(input.shape()));
  const int oh = conv_out_extent(h, window, stride, padding);
  const int ow = conv_out_extent(w, window, stride, padding);
  out.resize({oh, ow, c});
  if (argmax) argmax->assign(out.size(), -1);

  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int ch = 0; ch < c; ++ch) {
        T best = -std::numeric_limits<T>::infinity();
        std::int32_t best_idx = -1;
        for (int ky = 0; ky < window; ++ky) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < window; ++kx) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            const std::int32_t idx = (iy * w + ix) * c + ch;
            const T v = input[static_cast<std::size_t>(idx)];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(oy) * ow + ox) * c + ch;
        out[o] = best;
        if (argmax) (*argmax)[o] = best_idx;
      }
    }
  }
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input, int window, int stride, int padding,
                         std::vector<std::int32_t>* argmax) {
  BasicTensor<T> out;
  maxpool2d_into(input, window, stride, padding, out, argmax);
  return out;
}

template <typename T>
void maxpool2d_backward_into(const Shape& input_shape, std::span<const std::int32_t> argmax,
                             const BasicTensor<T>& out_grad, BasicTensor<T>& input_grad) {
  if (argmax.size() != out_grad.size())
    throw ShapeError("maxpool2d_backward: argmax length does not match out_grad");
  input_grad.resize(input_shape, true);
  for (std::size_t i = 0; i < argmax.size(); ++i)
    input_grad[static_cast<std::size_t>(argmax[i])] += out_grad[i];
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const Shape& input_shape, std::span<const std::int32_t> argmax,
                                  const BasicTensor<T>& out_grad) {
  BasicTensor<T> g;
  maxpool2d_backward_into(input_shape, argmax, out_grad, g);
  return g;
}

template <typename T>
void dense_into(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                const BasicTensor<T>& bias, BasicTensor<T>& out) {
  require_rank(weights.shape(), 2, "dense weights");
  const int in = weights.dim(0), out_n = weights.dim(1);
  if (input.size() != static_cast<std::size_t>(in))
    throw ShapeError("dense: input length " + std::to_string(input.size()) +
                     " does not match weight rows " + std::to_string(in));
  if (bias.size() != static_cast<std::size_t>(out_n))
    throw ShapeError("dense: bias length does not match weight columns");
  out.resize({out_n});
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> x(input.data(), in);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), out_n);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> y(out.data(), out_n);
  ConstMapMat<T> w(weights.data(), in, out_n);
  y.noalias() = x * w;
  y += b;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias) {
  BasicTensor<T> out;
  dense_into(input, weights, bias, out);
  return out;
}

template <typename T>
void dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                    const BasicTensor<T>& out_grad, BasicTensor<T>& weight_grad,
                    BasicTensor<T>& bias_grad, BasicTensor<T>* input_grad) {
  const int in = weights.dim(0), out_n = weights.dim(1);
  if (input.size() != static_cast<std::size_t>(in) ||
      out_grad.size() != static_cast<std::size_t>(out_n))
    throw ShapeError("dense_backward: operand lengths do not match weights");
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> x(input.data(), in);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> dy(out_grad.data(), out_n);
  MapMat<T> dw(weight_grad.data(), in, out_n);
  dw.noalias() += x * dy;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_grad.data(), out_n);
  db += dy;
  if (input_grad) {
    input_grad->resize(input.shape());
    ConstMapMat<T> w(weights.data(), in, out_n);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dx(input_grad->data(), in);
    dx.noalias() = w * dy.transpose();
  }
}

template <typename T>
LayerGrad<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                            const BasicTensor<T>& out_grad) {
  LayerGrad<T> g;
  g.param_grads.emplace_back(weights.shape());
  g.param_grads.emplace_back(Shape{weights.dim(1)});
  dense_backward(input, weights, out_grad, g.param_grads[0], g.param_grads[1], &g.input_grad);
  return g;
}

template <typename T>
void relu_into(const BasicTensor<T>& input, BasicTensor<T>& out) {
  out.resize(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out;
  relu_into(input, out);
  return out;
}

template <typename T>
void relu_backward_into(const BasicTensor<T>& output, const BasicTensor<T>& out_grad,
                        BasicTensor<T>& input_grad) {
  if (output.size() != out_grad.size()) throw ShapeError("relu_backward: size mismatch");
  input_grad.resize(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i)
    input_grad[i] = output[i] > T{0} ? out_grad[i] : T{0};
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output, const BasicTensor<T>& out_grad) {
  BasicTensor<T> g;
  relu_backward_into(output, out_grad, g);
  return g;
}

template <typename T>
void global_avg_pool_into(const BasicTensor<T>& input, BasicTensor<T>& out) {
  require_rank(input.shape(), 3, "global_avg_pool input");
  const int c = input.dim(2);
  const std::size_t plane = static_cast<std::size_t>(input.dim(0)) * input.dim(1);
  if (plane == 0) throw ShapeError("global_avg_pool: empty plane");
  out.resize({c}, true);
  for (std::size_t p = 0; p < plane; ++p)
    for (int ch = 0; ch < c; ++ch) out[static_cast<std::size_t>(ch)] += input[p * c + ch];
  for (auto& v : out.values()) v /= static_cast<T>(plane);
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
  BasicTensor<T> out;
  global_avg_pool_into(input, out);
  return out;
}

template <typename T>
void global_avg_pool_backward_into(const Shape& input_shape, const BasicTensor<T>& out_grad,
                                   BasicTensor<T>& input_grad) {
  require_rank(input_shape, 3, "global_avg_pool_backward");
  const int c = input_shape[2];
  if (out_grad.size() != static_cast<std::size_t>(c))
    throw ShapeError("global_avg_pool_backward: gradient length mismatch");
  const std::size_t plane = static_cast<std::size_t>(input_shape[0]) * input_shape[1];
  input_grad.resize(input_shape);
  const T inv = T{1} / static_cast<T>(plane);
  for (std::size_t p = 0; p < plane; ++p)
    for (int ch = 0; ch < c; ++ch)
      input_grad[p * c + ch] = out_grad[static_cast<std::size_t>(ch)] * inv;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& input_shape,
                                        const BasicTensor<T>& out_grad) {
  BasicTensor<T> g;
  global_avg_pool_backward_into(input_shape, out_grad, g);
  return g;
}

template <typename T>
void concat_channels_into(std::span<const BasicTensor<T>* const> parts, BasicTensor<T>& out) {
  if (parts.size() < 2) throw ShapeError("concat_channels: needs at least two operands");
  const BasicTensor<T>& first = *parts[0];
  const int h = first.rank() == 3 ? first.dim(0) : -1;
  const int w = first.rank() == 3 ? first.dim(1) : -1;
  int total = 0;
  for (const auto* p : parts) {
    if (p->rank() != 3 || p->dim(0) != h || p->dim(1) != w)
      throw ShapeError("concat_channels: spatial mismatch " + shape_str(first.shape()) +
                       " vs " + shape_str(p->shape()));
    total += p->dim(2);
  }
  out.resize({h, w, total});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t px = 0; px < plane; ++px) {
    T* dst = out.data() + px * total;
    for (const auto* p : parts) {
      const int c = p->dim(2);
      std::copy_n(p->data() + px * c, c, dst);
      dst += c;
    }
  }
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
  std::vector<const BasicTensor<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  BasicTensor<T> out;
  concat_channels_into<T>(ptrs, out);
  return out;
}

// Each part must already carry its (h, w, c_i) shape.
template <typename T>
void split_channels_into(const BasicTensor<T>& out_grad, std::span<BasicTensor<T>* const> parts) {
  require_rank(out_grad.shape(), 3, "split_channels");
  const int h = out_grad.dim(0), w = out_grad.dim(1), total = out_grad.dim(2);
  int sum = 0;
  for (auto* p : parts) {
    if (p->rank() != 3 || p->dim(0) != h || p->dim(1) != w)
      throw ShapeError("split_channels: part shape " + shape_str(p->shape()));
    sum += p->dim(2);
  }
  if (sum != total) throw ShapeError("split_channels: widths do not sum to channel count");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t px = 0; px < plane; ++px) {
    const T* src = out_grad.data() + px * total;
    for (auto* p : parts) {
      const int c = p->dim(2);
      std::copy_n(src, c, p->data() + px * c);
      src += c;
    }
  }
}

template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& out_grad,
                                           std::span<const int> widths) {
  require_rank(out_grad.shape(), 3, "split_channels");
  std::vector<BasicTensor<T>> parts;
  for (int c : widths) {
    if (c < 0) throw ShapeError("split_channels: negative width");
    parts.emplace_back(Shape{out_grad.dim(0), out_grad.dim(1), c});
  }
  std::vector<BasicTensor<T>*> ptrs;
  for (auto& p : parts) ptrs.push_back(&p);
  split_channels_into<T>(out_grad, ptrs);
  return parts;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  BasicTensor<T> out = logits;
  if (out.empty()) return out;
  const T m = *std::max_element(out.values().begin(), out.values().end());
  T sum{0};
  for (auto& v : out.values()) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : out.values()) v /= sum;
  return out;
}

template <typename T>
LossResult<T> cross_entropy(const BasicTensor<T>& logits, int target_class) {
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= logits.size())
    throw ParamError("cross_entropy: target class " + std::to_string(target_class) +
                     " out of range");
  for (T v : logits.values())
    if (!std::isfinite(v)) throw NumericError("cross_entropy: non-finite logit");
  const T m = logits[static_cast<std::size_t>(argmax_index(logits))];
  T sum{0};
  for (T v : logits.values()) sum += std::exp(v - m);
  const T lse = m + std::log(sum);
  LossResult<T> r{lse - logits[static_cast<std::size_t>(target_class)], softmax(logits)};
  r.logit_grad[static_cast<std::size_t>(target_class)] -= T{1};
  return r;
}

#define PVCRACK_INSTANTIATE_LAYERS(T)                                                        \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                 const BasicTensor<T>&, int, int, AlignedVector<T>*);       \
  template void conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, int, int,     \
                                const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,    \
                                BasicTensor<T>*, const AlignedVector<T>*, AlignedVector<T>*); \
  template LayerGrad<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, int,  \
                                        int, const BasicTensor<T>&);                        \
  template BasicTensor<T> maxpool2d(const BasicTensor<T>&, int, int, int,                   \
                                    std::vector<std::int32_t>*);                            \
  template BasicTensor<T> maxpool2d_backward(const Shape&, std::span<const std::int32_t>,   \
                                             const BasicTensor<T>&);                        \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                const BasicTensor<T>&);                                     \
  template void dense_backward(const BasicTensor<T>&, const BasicTensor<T>&,                \
                               const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,     \
                               BasicTensor<T>*);                                            \
  template LayerGrad<T> dense_backward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                       const BasicTensor<T>&);                              \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                      \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                           \
  template BasicTensor<T> global_avg_pool_backward(const Shape&, const BasicTensor<T>&);    \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>>);                 \
  template std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>&,                \
                                                      std::span<const int>);                \
  template void conv2d_into(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                            const BasicTensor<T>&, int, int, BasicTensor<T>&,               \
                            AlignedVector<T>&);                                             \
  template void maxpool2d_into(const BasicTensor<T>&, int, int, int, BasicTensor<T>&,       \
                               std::vector<std::int32_t>*);                                 \
  template void maxpool2d_backward_into(const Shape&, std::span<const std::int32_t>,        \
                                        const BasicTensor<T>&, BasicTensor<T>&);            \
  template void dense_into(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                           const BasicTensor<T>&, BasicTensor<T>&);                         \
  template void relu_into(const BasicTensor<T>&, BasicTensor<T>&);                          \
  template void relu_backward_into(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                   BasicTensor<T>&);                                        \
  template void global_avg_pool_into(const BasicTensor<T>&, BasicTensor<T>&);               \
  template void global_avg_pool_backward_into(const Shape&, const BasicTensor<T>&,          \
                                              BasicTensor<T>&);                             \
  template void concat_channels_into(std::span<const BasicTensor<T>* const>,                \
                                     BasicTensor<T>&);                                      \
  template void split_channels_into(const BasicTensor<T>&, std::span<BasicTensor<T>* const>); \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                   \
  template LossResult<T> cross_entropy(const BasicTensor<T>&, int);

PVCRACK_INSTANTIATE_LAYERS(float)
PVCRACK_INSTANTIATE_LAYERS(double)

}  // namespace pvcrack::nn
