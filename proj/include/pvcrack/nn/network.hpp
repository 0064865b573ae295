#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pvcrack/nn/tensor.hpp"

namespace pvcrack::nn {

// Opcode values double as the on-disk layer opcodes of the model blob.
enum class LayerOp : std::uint8_t {
  Conv = 1,
  ReLU = 2,
  MaxPool = 3,
  GlobalAvgPool = 4,
  Dense = 5,
  Flatten = 6,
  InceptionConcat = 7,
};

const char* layer_op_name(LayerOp op);

// One node of a static feed-forward graph. Field use per op:
//   Conv            kernel, stride, padding, in_ch, out_ch
//   MaxPool         kernel (window), stride, padding
//   Dense           in_ch (input length), out_ch
//   InceptionConcat in_ch, out_ch (sum of branch widths), branches
// Other ops ignore the numeric fields.
struct LayerSpec {
  LayerOp op = LayerOp::ReLU;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  int in_ch = 0;
  int out_ch = 0;
  std::vector<std::vector<LayerSpec>> branches;

  static LayerSpec conv(int in_ch, int out_ch, int kernel, int stride = 1, int padding = 0);
  static LayerSpec relu();
  static LayerSpec maxpool(int window, int stride, int padding = 0);
  static LayerSpec global_avg_pool();
  static LayerSpec dense(int in, int out);
  static LayerSpec flatten();
  static LayerSpec inception(int in_ch, std::vector<std::vector<LayerSpec>> branches);

  bool has_params() const { return op == LayerOp::Conv || op == LayerOp::Dense; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Output shape of one layer, or ShapeError describing the mismatch.
Shape infer_shape(const LayerSpec& layer, const Shape& input);

// Shapes of the parameter tensors of a layer sequence in execution order
// (weights then bias for each Conv/Dense, Inception branches in order).
std::vector<Shape> param_shapes(std::span<const LayerSpec> layers);

// Number of nodes (one activation tensor each) in execution order. An
// Inception block contributes its inner nodes followed by the concat node.
int count_nodes(std::span<const LayerSpec> layers);

// Number of parameter tensors a single layer owns (Inception counts its
// branches).
std::size_t param_tensor_count(const LayerSpec& layer);

// Per-node state kept between forward and backward. Buffers are reused when
// the same trace is passed again for a graph of the same structure.
template <typename T>
struct NodeTrace {
  int node_id = 0;
  std::size_t param_index = 0;  // index of this node's first parameter tensor
  BasicTensor<T> output;
  AlignedVector<T> col;
  std::vector<std::int32_t> argmax;
  std::vector<std::vector<NodeTrace>> branches;
  // Backward scratch: gradient w.r.t. this node's input, column-space
  // gradient, per-branch output gradients and sinks for frozen parameters.
  BasicTensor<T> grad;
  AlignedVector<T> dcol;
  std::vector<BasicTensor<T>> parts;
  BasicTensor<T> frozen_w, frozen_b;
};

template <typename T>
using ActivationObserver = std::function<void(int node_id, const BasicTensor<T>& output)>;

// Runs the graph. trace (optional) keeps what backward needs and is reused
// across calls; observer
// (optional) sees every node output in execution order.
template <typename T>
BasicTensor<T> forward(std::span<const LayerSpec> layers, std::span<const BasicTensor<T>> params,
                       const BasicTensor<T>& input, std::vector<NodeTrace<T>>* trace = nullptr,
                       const ActivationObserver<T>* observer = nullptr);

// Accumulates (+=) parameter gradients for parameter tensors with index >=
// trainable_from; frozen ones are left untouched. Writes input_grad when
// non-null.
template <typename T>
void backward(std::span<const LayerSpec> layers, std::span<const BasicTensor<T>> params,
              const BasicTensor<T>& input, std::vector<NodeTrace<T>>& trace,
              const BasicTensor<T>& out_grad, std::span<BasicTensor<T>> grads,
              BasicTensor<T>* input_grad = nullptr, std::size_t trainable_from = 0);

}  // namespace pvcrack::nn
