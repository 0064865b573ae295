#include "pvcrack/nn/network.hpp"

#include <algorithm>

#include "pvcrack/nn/layers.hpp"

namespace pvcrack::nn {

const char* layer_op_name(LayerOp op) {
  switch (op) {
    case LayerOp::Conv: return "conv";
    case LayerOp::ReLU: return "relu";
    case LayerOp::MaxPool: return "maxpool";
    case LayerOp::GlobalAvgPool: return "gap";
    case LayerOp::Dense: return "dense";
    case LayerOp::Flatten: return "flatten";
    case LayerOp::InceptionConcat: return "inception";
  }
  return "?";
}

LayerSpec LayerSpec::conv(int in_ch, int out_ch, int kernel, int stride, int padding) {
  LayerSpec l;
  l.op = LayerOp::Conv;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::maxpool(int window, int stride, int padding) {
  LayerSpec l;
  l.op = LayerOp::MaxPool;
  l.kernel = window;
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::global_avg_pool() {
  LayerSpec l;
  l.op = LayerOp::GlobalAvgPool;
  return l;
}

LayerSpec LayerSpec::dense(int in, int out) {
  LayerSpec l;
  l.op = LayerOp::Dense;
  l.in_ch = in;
  l.out_ch = out;
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.op = LayerOp::Flatten;
  return l;
}

LayerSpec LayerSpec::inception(int in_ch, std::vector<std::vector<LayerSpec>> branches) {
  LayerSpec l;
  l.op = LayerOp::InceptionConcat;
  l.in_ch = in_ch;
  l.branches = std::move(branches);
  return l;
}

namespace {

Shape infer_sequence(std::span<const LayerSpec> layers, Shape s) {
  for (const auto& l : layers) s = infer_shape(l, s);
  return s;
}

void require_spatial(const LayerSpec& l, const Shape& in) {
  if (in.size() != 3)
    throw ShapeError(std::string(layer_op_name(l.op)) + " expects an (h, w, c) input, got " +
                     shape_str(in));
}

}  // namespace

Shape infer_shape(const LayerSpec& l, const Shape& in) {
  const std::string name = layer_op_name(l.op);
  switch (l.op) {
    case LayerOp::Conv: {
      require_spatial(l, in);
      if (l.in_ch < 1 || l.out_ch < 1 || l.kernel < 1)
        throw ShapeError("conv: channel counts and kernel must be >= 1");
      if (in[2] != l.in_ch)
        throw ShapeError("conv: input has " + std::to_string(in[2]) + " channels, layer expects " +
                         std::to_string(l.in_ch));
      return {conv_out_extent(in[0], l.kernel, l.stride, l.padding),
              conv_out_extent(in[1], l.kernel, l.stride, l.padding), l.out_ch};
    }
    case LayerOp::ReLU:
      return in;
    case LayerOp::MaxPool: {
      require_spatial(l, in);
      if (l.kernel < 1 || l.padding < 0 || l.padding >= l.kernel)
        throw ShapeError("maxpool: invalid window/padding");
      if (l.kernel > in[0] + 2 * l.padding || l.kernel > in[1] + 2 * l.padding)
        throw ShapeError("maxpool: window " + std::to_string(l.kernel) + " larger than input " +
                         shape_str(in));
      return {conv_out_extent(in[0], l.kernel, l.stride, l.padding),
              conv_out_extent(in[1], l.kernel, l.stride, l.padding), in[2]};
    }
    case LayerOp::GlobalAvgPool:
      require_spatial(l, in);
      return {in[2]};
    case LayerOp::Dense: {
      if (in.size() != 1)
        throw ShapeError("dense expects a flat input (add flatten or gap), got " + shape_str(in));
      if (l.in_ch < 1 || l.out_ch < 1) throw ShapeError("dense: widths must be >= 1");
      if (in[0] != l.in_ch)
        throw ShapeError("dense: input length " + std::to_string(in[0]) +
                         " does not match declared " + std::to_string(l.in_ch));
      return {l.out_ch};
    }
    case LayerOp::Flatten:
      return {static_cast<int>(shape_size(in))};
    case LayerOp::InceptionConcat: {
      require_spatial(l, in);
      if (in[2] != l.in_ch)
        throw ShapeError("inception: input has " + std::to_string(in[2]) +
                         " channels, block expects " + std::to_string(l.in_ch));
      if (l.branches.size() < 2) throw ShapeError("inception: needs at least two branches");
      int channels = 0;
      Shape first;
      for (std::size_t b = 0; b < l.branches.size(); ++b) {
        const Shape out = infer_sequence(l.branches[b], in);
        if (out.size() != 3) throw ShapeError("inception: branch output is not spatial");
        if (b == 0) first = out;
        if (out[0] != first[0] || out[1] != first[1])
          throw ShapeError("inception: branch " + std::to_string(b) + " ends at " +
                           shape_str(out) + ", branch 0 at " + shape_str(first));
        channels += out[2];
      }
      if (l.out_ch != 0 && l.out_ch != channels)
        throw ShapeError("inception: declared " + std::to_string(l.out_ch) +
                         " output channels, branches give " + std::to_string(channels));
      return {first[0], first[1], channels};
    }
  }
  throw ShapeError("unknown layer op " + name);
}

std::vector<Shape> param_shapes(std::span<const LayerSpec> layers) {
  std::vector<Shape> out;
  for (const auto& l : layers) {
    if (l.op == LayerOp::Conv) {
      out.push_back({l.kernel, l.kernel, l.in_ch, l.out_ch});
      out.push_back({l.out_ch});
    } else if (l.op == LayerOp::Dense) {
      out.push_back({l.in_ch, l.out_ch});
      out.push_back({l.out_ch});
    } else if (l.op == LayerOp::InceptionConcat) {
      for (const auto& b : l.branches) {
        auto inner = param_shapes(b);
        out.insert(out.end(), inner.begin(), inner.end());
      }
    }
  }
  return out;
}

int count_nodes(std::span<const LayerSpec> layers) {
  int n = 0;
  for (const auto& l : layers) {
    ++n;
    for (const auto& b : l.branches) n += count_nodes(b);
  }
  return n;
}

std::size_t param_tensor_count(const LayerSpec& l) {
  if (l.has_params()) return 2;
  std::size_t n = 0;
  for (const auto& b : l.branches)
    for (const auto& inner : b) n += param_tensor_count(inner);
  return n;
}

namespace {

template <typename T>
struct Walker {
  std::span<const BasicTensor<T>> params;
  const ActivationObserver<T>* observer;
  int node = 0;
  std::size_t param = 0;

  const BasicTensor<T>& take_param() {
    if (param >= params.size()) throw ShapeError("forward: not enough parameter tensors");
    return params[param++];
  }

  // Returns the final node output, which lives in trace (or input when the
  // sequence is empty).
  const BasicTensor<T>& run(std::span<const LayerSpec> layers, const BasicTensor<T>& input,
                            std::vector<NodeTrace<T>>& trace) {
    if (trace.size() != layers.size()) trace.resize(layers.size());
    const BasicTensor<T>* cur = &input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      NodeTrace<T>& nt = trace[i];
      nt.param_index = param;
      BasicTensor<T>& out = nt.output;
      switch (l.op) {
        case LayerOp::Conv: {
          const auto& w = take_param();
          const auto& b = take_param();
          conv2d_into(*cur, w, b, l.stride, l.padding, out, nt.col);
          break;
        }
        case LayerOp::ReLU:
          relu_into(*cur, out);
          break;
        case LayerOp::MaxPool:
          maxpool2d_into(*cur, l.kernel, l.stride, l.padding, out, &nt.argmax);
          break;
        case LayerOp::GlobalAvgPool:
          global_avg_pool_into(*cur, out);
          break;
        case LayerOp::Dense: {
          const auto& w = take_param();
          const auto& b = take_param();
          if (cur->rank() != 1) throw ShapeError("dense expects a flat input");
          dense_into(*cur, w, b, out);
          break;
        }
        case LayerOp::Flatten:
          out.resize({static_cast<int>(cur->size())});
          std::copy(cur->values().begin(), cur->values().end(), out.values().begin());
          break;
        case LayerOp::InceptionConcat: {
          if (nt.branches.size() != l.branches.size()) nt.branches.resize(l.branches.size());
          std::vector<const BasicTensor<T>*> parts;
          parts.reserve(l.branches.size());
          for (std::size_t b = 0; b < l.branches.size(); ++b)
            parts.push_back(&run(l.branches[b], *cur, nt.branches[b]));
          concat_channels_into<T>(parts, out);
          break;
        }
      }
      nt.node_id = node++;
      if (observer && *observer) (*observer)(nt.node_id, out);
      cur = &out;
    }
    return *cur;
  }
};

template <typename T>
struct BackWalker {
  std::span<const BasicTensor<T>> params;
  std::span<BasicTensor<T>> grads;
  std::size_t trainable_from;

  bool trainable(const LayerSpec& l, const NodeTrace<T>& nt) const {
    const std::size_t n = param_tensor_count(l);
    return n > 0 && nt.param_index + n > trainable_from;
  }

  // Walks the sequence in reverse. Returns the gradient w.r.t. input when
  // want_input_grad is set, else nullptr.
  const BasicTensor<T>* run(std::span<const LayerSpec> layers, const BasicTensor<T>& input,
                            std::vector<NodeTrace<T>>& trace, const BasicTensor<T>& out_grad,
                            bool want_input_grad) {
    if (trace.size() != layers.size()) throw ShapeError("backward: trace does not match graph");
    // last index whose layers below still need a gradient
    std::vector<char> below(layers.size() + 1, 0);
    below[0] = want_input_grad;
    for (std::size_t i = 0; i < layers.size(); ++i)
      below[i + 1] = below[i] || trainable(layers[i], trace[i]);

    const BasicTensor<T>* dout = &out_grad;
    for (std::size_t idx = layers.size(); idx-- > 0;) {
      const LayerSpec& l = layers[idx];
      NodeTrace<T>& nt = trace[idx];
      const BasicTensor<T>& in = idx == 0 ? input : trace[idx - 1].output;
      const bool need_dx = below[idx];
      if (!need_dx && !trainable(l, nt)) return nullptr;

      BasicTensor<T>& dx = nt.grad;
      switch (l.op) {
        case LayerOp::Conv:
        case LayerOp::Dense: {
          const std::size_t p = nt.param_index;
          const bool train = p >= trainable_from;
          if (!train && !need_dx) break;
          BasicTensor<T>* gw = &grads[p];
          BasicTensor<T>* gb = &grads[p + 1];
          if (!train) {
            nt.frozen_w.resize(params[p].shape(), true);
            nt.frozen_b.resize(params[p + 1].shape(), true);
            gw = &nt.frozen_w;
            gb = &nt.frozen_b;
          }
          if (l.op == LayerOp::Conv)
            conv2d_backward(in, params[p], l.stride, l.padding, *dout, *gw, *gb,
                            need_dx ? &dx : nullptr, &nt.col, &nt.dcol);
          else
            dense_backward(in, params[p], *dout, *gw, *gb, need_dx ? &dx : nullptr);
          break;
        }
        case LayerOp::ReLU:
          relu_backward_into(nt.output, *dout, dx);
          break;
        case LayerOp::MaxPool:
          maxpool2d_backward_into<T>(in.shape(), nt.argmax, *dout, dx);
          break;
        case LayerOp::GlobalAvgPool:
          global_avg_pool_backward_into(in.shape(), *dout, dx);
          break;
        case LayerOp::Flatten:
          dx.resize(in.shape());
          std::copy(dout->values().begin(), dout->values().end(), dx.values().begin());
          break;
        case LayerOp::InceptionConcat: {
          const std::size_t nb = l.branches.size();
          nt.parts.resize(nb);
          std::vector<BasicTensor<T>*> ptrs;
          for (std::size_t b = 0; b < nb; ++b) {
            const BasicTensor<T>& bo =
                nt.branches[b].empty() ? in : nt.branches[b].back().output;
            nt.parts[b].resize(bo.shape());
            ptrs.push_back(&nt.parts[b]);
          }
          split_channels_into<T>(*dout, ptrs);
          if (need_dx) dx.resize(in.shape(), true);
          for (std::size_t b = 0; b < nb; ++b) {
            const BasicTensor<T>* bdx =
                nt.branches[b].empty()
                    ? &nt.parts[b]
                    : run(l.branches[b], in, nt.branches[b], nt.parts[b], need_dx);
            if (need_dx)
              for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += (*bdx)[i];
          }
          break;
        }
      }
      if (!need_dx) return nullptr;
      dout = &dx;
    }
    return want_input_grad ? dout : nullptr;
  }
};

}  // namespace

template <typename T>
BasicTensor<T> forward(std::span<const LayerSpec> layers, std::span<const BasicTensor<T>> params,
                       const BasicTensor<T>& input, std::vector<NodeTrace<T>>* trace,
                       const ActivationObserver<T>* observer) {
  Walker<T> w{params, observer};
  std::vector<NodeTrace<T>> local;
  BasicTensor<T> out = w.run(layers, input, trace ? *trace : local);
  if (w.param != params.size())
    throw ShapeError("forward: " + std::to_string(params.size()) + " parameter tensors given, " +
                     std::to_string(w.param) + " used");
  return out;
}

template <typename T>
void backward(std::span<const LayerSpec> layers, std::span<const BasicTensor<T>> params,
              const BasicTensor<T>& input, std::vector<NodeTrace<T>>& trace,
              const BasicTensor<T>& out_grad, std::span<BasicTensor<T>> grads,
              BasicTensor<T>* input_grad, std::size_t trainable_from) {
  if (grads.size() != params.size()) throw ShapeError("backward: gradient count mismatch");
  BackWalker<T> bw{params, grads, trainable_from};
  const BasicTensor<T>* g = bw.run(layers, input, trace, out_grad, input_grad != nullptr);
  if (input_grad && g) *input_grad = *g;
}

#define PVCRACK_INSTANTIATE_NETWORK(T)                                                         \
  template BasicTensor<T> forward(std::span<const LayerSpec>, std::span<const BasicTensor<T>>, \
                                  const BasicTensor<T>&, std::vector<NodeTrace<T>>*,           \
                                  const ActivationObserver<T>*);                               \
  template void backward(std::span<const LayerSpec>, std::span<const BasicTensor<T>>,          \
                         const BasicTensor<T>&, std::vector<NodeTrace<T>>&,                    \
                         const BasicTensor<T>&, std::span<BasicTensor<T>>, BasicTensor<T>*,    \
                         std::size_t);

PVCRACK_INSTANTIATE_NETWORK(float)
PVCRACK_INSTANTIATE_NETWORK(double)

}  // namespace pvcrack::nn
