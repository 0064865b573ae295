#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pvcrack/nn/tensor.hpp"

namespace pvcrack::nn {

// floor((in + 2*padding - kernel) / stride) + 1, or ShapeError when that is
// not positive.
int conv_out_extent(int in, int kernel, int stride, int padding);

template <typename T>
struct LayerGrad {
  BasicTensor<T> input_grad;
  std::vector<BasicTensor<T>> param_grads;
};

// The *_into variants write into caller-owned buffers, reusing their
// allocations; the value-returning forms wrap them.

// Cross-correlation over an (h, w, c) input with (k, k, in, out) weights.
// col receives the im2col matrix so a later backward call can skip
// rebuilding it.
template <typename T>
void conv2d_into(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                 const BasicTensor<T>& bias, int stride, int padding, BasicTensor<T>& out,
                 AlignedVector<T>& col);

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                      const BasicTensor<T>& bias, int stride, int padding,
                      AlignedVector<T>* col = nullptr);

// Accumulates (+=) into weight_grad and bias_grad; writes input_grad when
// non-null. col may be the buffer filled by the forward call; scratch holds
// the column-space input gradient between calls.
template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     int stride, int padding, const BasicTensor<T>& out_grad,
                     BasicTensor<T>& weight_grad, BasicTensor<T>& bias_grad,
                     BasicTensor<T>* input_grad, const AlignedVector<T>* col = nullptr,
                     AlignedVector<T>* scratch = nullptr);

template <typename T>
LayerGrad<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             int stride, int padding, const BasicTensor<T>& out_grad);

// Channel-wise max over window x window patches. Padded cells never win.
// argmax (optional) receives the flat input index chosen for each output;
// ties go to the first position in row-major window order.
template <typename T>
void maxpool2d_into(const BasicTensor<T>& input, int window, int stride, int padding,
                    BasicTensor<T>& out, std::vector<std::int32_t>* argmax);

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input, int window, int stride,
                         int padding = 0, std::vector<std::int32_t>* argmax = nullptr);

template <typename T>
void maxpool2d_backward_into(const Shape& input_shape, std::span<const std::int32_t> argmax,
                             const BasicTensor<T>& out_grad, BasicTensor<T>& input_grad);

template <typename T>
BasicTensor<T> maxpool2d_backward(const Shape& input_shape,
                                  std::span<const std::int32_t> argmax,
                                  const BasicTensor<T>& out_grad);

// y = W^T x + b with W shaped (in, out). input is read as a flat vector.
template <typename T>
void dense_into(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                const BasicTensor<T>& bias, BasicTensor<T>& out);

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias);

template <typename T>
void dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                    const BasicTensor<T>& out_grad, BasicTensor<T>& weight_grad,
                    BasicTensor<T>& bias_grad, BasicTensor<T>* input_grad);

template <typename T>
LayerGrad<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                            const BasicTensor<T>& out_grad);

template <typename T>
void relu_into(const BasicTensor<T>& input, BasicTensor<T>& out);
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// Gradient through ReLU given the forward output.
template <typename T>
void relu_backward_into(const BasicTensor<T>& output, const BasicTensor<T>& out_grad,
                        BasicTensor<T>& input_grad);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output, const BasicTensor<T>& out_grad);

// (h, w, c) -> (c), the mean of each channel plane.
template <typename T>
void global_avg_pool_into(const BasicTensor<T>& input, BasicTensor<T>& out);
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <typename T>
void global_avg_pool_backward_into(const Shape& input_shape, const BasicTensor<T>& out_grad,
                                   BasicTensor<T>& input_grad);
template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& input_shape,
                                        const BasicTensor<T>& out_grad);

// Stacks (h, w, c_i) operands along the channel axis.
template <typename T>
void concat_channels_into(std::span<const BasicTensor<T>* const> parts, BasicTensor<T>& out);
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts);

// Inverse of concat_channels for gradients: slices out_grad by channel widths.
template <typename T>
void split_channels_into(const BasicTensor<T>& out_grad, std::span<BasicTensor<T>* const> parts);
template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& out_grad,
                                           std::span<const int> widths);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <typename T>
struct LossResult {
  T loss;
  BasicTensor<T> logit_grad;
};

// -log softmax(logits)[target] via log-sum-exp, plus softmax - onehot.
template <typename T>
LossResult<T> cross_entropy(const BasicTensor<T>& logits, int target_class);

}  // namespace pvcrack::nn
