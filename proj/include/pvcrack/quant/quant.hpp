#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pvcrack/arch/model.hpp"
#include "pvcrack/format.hpp"

namespace pvcrack::quant {

class QuantError : public Error {
 public:
  using Error::Error;
};

// real = scale * (q - zero_point)
struct QuantParams {
  float scale = 1.0f;
  std::int32_t zero_point = 0;
  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

inline QuantParams input_params() { return {format::kInputScale, format::kInputZeroPoint}; }

// Asymmetric int8 grid over [lo, hi] (which must contain 0). A [0, 0] range
// widens to [0, 1e-5]. QuantError when the range is not finite.
QuantParams choose_activation_params(float lo, float hi);

// Round half away from zero, saturated to [lo, hi].
std::int32_t round_saturate(double v, std::int32_t lo, std::int32_t hi);

std::int8_t quantize_value(float r, QuantParams p);
float dequantize_value(std::int32_t q, QuantParams p);

// Fixed-point form of a real multiplier in (0, 1):
//   real ~= multiplier * 2^-(31 + shift), multiplier in [2^30, 2^31).
struct Requant {
  std::int32_t multiplier = 0;
  std::uint8_t shift = 0;
  friend bool operator==(const Requant&, const Requant&) = default;
};

// QuantError unless 0 < real < 1.
Requant make_requant(double real);

// round_half_away(acc * multiplier * 2^-(31 + shift)); 0 when the total
// shift exceeds 62.
std::int32_t apply_requant(std::int32_t acc, Requant r);

struct Range {
  float min = 0.0f;
  float max = 0.0f;
  long count = 0;  // samples observed
};

// One entry per graph node in execution order (see nn::forward).
struct ActivationRanges {
  std::vector<Range> nodes;
};

// Training-fold images used for calibration unless configured otherwise.
inline constexpr int kDefaultCalibrationSamples = 100;
inline constexpr double kDefaultSampleQuantile = 0.95;

// Float forward passes over calib. Each node's range runs from the
// (1 - q) quantile of the per-sample minima to the q quantile of the
// per-sample maxima (nearest rank), widened to include 0. q = 1 is plain
// min/max over the set; q < 1 lets a few extreme images saturate instead of
// coarsening the grid for all others. QuantError on an empty set or q
// outside (0, 1].
ActivationRanges calibrate(const arch::Model& model, const std::vector<nn::Tensor>& calib,
                           double sample_quantile = kDefaultSampleQuantile);

// Merge of two calibrations of the same model (element-wise min/max).
ActivationRanges merge_ranges(const ActivationRanges& a, const ActivationRanges& b);

// Fraction of node activations of samples that fall inside ranges.
double range_coverage(const arch::Model& model, const ActivationRanges& ranges,
                      const std::vector<nn::Tensor>& samples);

// One quantized layer. spec carries the op fields; Inception children live
// in branches (spec.branches is left empty).
struct QLayer {
  nn::LayerSpec spec;
  std::vector<std::int8_t> weights;  // Conv/Dense, same layout as the float tensor
  std::vector<std::int32_t> bias;
  float weight_scale = 0.0f;
  QuantParams output;  // grid of this node's output tensor
  Requant requant;     // Conv/Dense/GlobalAvgPool only
  std::vector<std::vector<QLayer>> branches;

  friend bool operator==(const QLayer&, const QLayer&) = default;
};

struct QModel {
  arch::ModelSpec spec;
  QuantParams input = input_params();
  std::vector<QLayer> layers;
};

// Per-tensor symmetric int8 weights, int32 biases at S_in*S_w, asymmetric
// activations. A Conv/Dense directly followed by ReLU takes the post-ReLU
// grid; Inception branches requantize straight onto the concat grid. When
// a requantization multiplier would reach 1 the output scale is raised just
// enough to keep it below 1.
QModel quantize_int8(const arch::Model& model, const ActivationRanges& ranges);

// Parameters rounded to IEEE half precision (nearest, ties to even).
struct HModel {
  arch::ModelSpec spec;
  std::vector<std::vector<std::uint16_t>> params;  // bit patterns, execution order
  long saturated = 0;  // values clipped to +-65504
};

std::uint16_t float_to_half(float v, bool* saturated = nullptr);
float half_to_float(std::uint16_t h);

HModel quantize_fp16(const arch::Model& model);
arch::Model dequantize_fp16(const HModel& hm);

struct SimResult {
  nn::Tensor logits;  // dequantized
  std::vector<std::int8_t> logits_q;
  int predicted = 0;  // argmax, first index on ties
  // int8 output of every node, execution order
  std::vector<std::vector<std::int8_t>> activations;
};

// Input quantization onto the fixed input grid.
std::vector<std::int8_t> quantize_input(const nn::Tensor& input);

// Host reference of the integer-only engine arithmetic.
SimResult simulate_quant_infer(const QModel& qm, const nn::Tensor& input,
                               bool keep_activations = false);

struct LabeledTensor {
  nn::Tensor input;
  int label = 0;
};

struct QuantErrorReport {
  std::size_t samples = 0;
  double accuracy_float = 0.0;
  double accuracy_int8 = 0.0;
  double accuracy_delta = 0.0;  // int8 - float
  double agreement_rate = 0.0;
  double max_logit_dev = 0.0;
  double mean_logit_dev = 0.0;
};

QuantErrorReport quant_error_stats(const arch::Model& model, const QModel& qm,
                                   const std::vector<LabeledTensor>& samples);

// UTF-8 key=value report with accuracy, agreement and blob sizes per scheme.
std::string format_quant_report(const QuantErrorReport& r, const arch::SizeEstimate& sizes);
void write_quant_report(const std::filesystem::path& path, const QuantErrorReport& r,
                        const arch::SizeEstimate& sizes);

}  // namespace pvcrack::quant
