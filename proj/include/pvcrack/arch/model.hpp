#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvcrack/format.hpp"
#include "pvcrack/nn/network.hpp"

namespace pvcrack::arch {

using nn::LayerOp;
using nn::LayerSpec;

struct ModelSpec {
  int input_side = 96;
  int input_channels = 1;
  std::vector<LayerSpec> layers;
  int num_classes = 2;

  nn::Shape input_shape() const { return {input_side, input_side, input_channels}; }
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// A spec plus its fp32 parameters (execution order, weights then bias).
struct Model {
  ModelSpec spec;
  std::vector<nn::Tensor> params;
};

// Output shape after each top-level layer. SpecError names the failing layer.
std::vector<nn::Shape> propagate_shapes(const ModelSpec& spec);

// Shape propagation plus the logits contract; throws SpecError.
void validate(const ModelSpec& spec);

std::size_t param_count(const ModelSpec& spec);

// [conv3x3 in->out, relu, conv3x3 out->out, relu, maxpool 2/2]
std::vector<LayerSpec> make_vgg_block(int in_ch, int out_ch);

// Four parallel branches, each ending in ReLU, concatenated on channels:
//   1x1 b1 | 1x1 b3_reduce -> 3x3 b3 | 1x1 b5_reduce -> 5x5 b5
//   | maxpool 3/1 pad 1 -> 1x1 pool_proj
LayerSpec make_inception_block(int in_ch, int b1, int b3_reduce, int b3, int b5_reduce, int b5,
                               int pool_proj);

// He-uniform weights in +-sqrt(6 / fan_in), zero biases.
Model build_model(const ModelSpec& spec, std::uint64_t seed);

// Three VGG blocks (1->8->16->32), global average pool, dense 32->32, relu,
// dense 32->num_classes.
ModelSpec reference_model_1(int input_side = 96);
// VGG (1->8), Inception (8; 4,4,8, 2,4, 4), VGG (20->32), same head.
ModelSpec reference_model_2(int input_side = 96);

// Index of the first parameter tensor of each top-level parameterized layer
// (Conv, Dense, Inception), followed by the total tensor count.
std::vector<std::size_t> param_unit_starts(const ModelSpec& spec);

// First trainable parameter tensor when the leading freeze_prefix
// parameterized layers are frozen. ParamError if freeze_prefix is too large.
std::size_t first_trainable_param(const ModelSpec& spec, int freeze_prefix);

int parameterized_layer_count(const ModelSpec& spec);

// Line-oriented text form:
//   model input_side=96 input_channels=1 num_classes=2
//   conv in=1 out=8 k=3 stride=1 pad=1
//   inception in=8
//   branch
//   ...
//   end
std::string format_spec(const ModelSpec& spec);
ModelSpec parse_spec(const std::string& text);
ModelSpec load_spec_file(const std::string& path);
void save_spec_file(const ModelSpec& spec, const std::string& path);

// Empty when the spec fits the blob record fields (u8 kernel/stride/padding,
// u16 channels and input side, u8 class count, no nested Inception), else a
// description of the first field that does not.
std::string blob_format_violation(const ModelSpec& spec);

struct SizeEstimate {
  std::size_t param_count = 0;
  std::size_t bytes_fp32 = 0;
  std::size_t bytes_fp16 = 0;
  std::size_t bytes_int8 = 0;
};

// Exact serialized blob length per scheme, from the spec alone.
std::size_t blob_bytes(const ModelSpec& spec, format::Scheme scheme);
SizeEstimate estimate_size(const ModelSpec& spec);

}  // namespace pvcrack::arch
