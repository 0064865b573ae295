#include <doctest.h>

#include <cmath>

#include "pvcrack/arch/model.hpp"
#include "pvcrack/engine/blob.hpp"
#include "pvcrack/quant/quant.hpp"

using namespace pvcrack;
using namespace pvcrack::quant;

namespace {

std::vector<nn::Tensor> random_inputs(int n, int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<nn::Tensor> out;
  for (int i = 0; i < n; ++i) {
    nn::Tensor t({side, side, 1});
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST_CASE("rounding and grids") {
  CHECK(round_saturate(2.5, -128, 127) == 3);
  CHECK(round_saturate(-2.5, -128, 127) == -3);
  CHECK(round_saturate(1e9, -128, 127) == 127);
  CHECK(round_saturate(-1e9, -128, 127) == -128);

  const auto p = choose_activation_params(-1.0f, 3.0f);
  CHECK(p.scale > 0.0f);
  CHECK(p.zero_point >= -128);
  CHECK(p.zero_point <= 127);
  CHECK(dequantize_value(p.zero_point, p) == 0.0f);
  CHECK(quantize_value(0.0f, p) == p.zero_point);
  for (float r = -1.0f; r <= 3.0f; r += 0.01f) {
    const float back = dequantize_value(quantize_value(r, p), p);
    CHECK(std::abs(back - r) <= p.scale / 2 + 1e-6f);
  }
  const auto z = choose_activation_params(0.0f, 0.0f);
  CHECK(z.scale == doctest::Approx(1e-5f / 255.0f));
  CHECK(z.zero_point == -128);
  CHECK_THROWS_AS(choose_activation_params(0.0f, INFINITY), QuantError);
}

TEST_CASE("requantization multipliers") {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double real = std::pow(10.0, rng.uniform(-9.0, -0.0001));
    const auto r = make_requant(real);
    CHECK(r.multiplier >= (1 << 30));
    const double approx = static_cast<double>(r.multiplier) * std::ldexp(1.0, -31 - r.shift);
    CHECK(std::abs(approx - real) / real <= std::ldexp(1.0, -24));
  }
  CHECK_THROWS_AS(make_requant(0.0), QuantError);
  CHECK_THROWS_AS(make_requant(1.0), QuantError);
  const auto half = make_requant(0.5);
  CHECK(apply_requant(3, half) == 2);  // 1.5 rounds away from zero
  CHECK(apply_requant(-3, half) == -2);
  CHECK(apply_requant(100, half) == 50);
}

TEST_CASE("calibration") {
  const auto model = arch::build_model(arch::reference_model_1(32), 2);
  CHECK_THROWS_AS(calibrate(model, {}), QuantError);
  const auto zero = calibrate(model, {nn::Tensor({32, 32, 1}, 0.0f)});
  for (const auto& r : zero.nodes) {
    CHECK(r.min <= 0.0f);
    CHECK(r.max >= 0.0f);
  }
  const auto a = random_inputs(4, 32, 1), b = random_inputs(4, 32, 2);
  std::vector<nn::Tensor> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  // Plain min/max (q = 1) is monotone in the calibration set.
  const auto ra = calibrate(model, a, 1.0), rab = calibrate(model, ab, 1.0);
  REQUIRE(ra.nodes.size() == rab.nodes.size());
  for (std::size_t i = 0; i < ra.nodes.size(); ++i) {
    CHECK(rab.nodes[i].min <= ra.nodes[i].min);
    CHECK(rab.nodes[i].max >= ra.nodes[i].max);
  }
  const auto merged = merge_ranges(ra, calibrate(model, b, 1.0));
  for (std::size_t i = 0; i < ra.nodes.size(); ++i) {
    CHECK(merged.nodes[i].min == rab.nodes[i].min);
    CHECK(merged.nodes[i].max == rab.nodes[i].max);
  }
  CHECK(range_coverage(model, rab, ab) == doctest::Approx(1.0));
  CHECK_THROWS_AS(calibrate(model, a, 0.0), QuantError);
  CHECK_THROWS_AS(calibrate(model, a, 1.5), QuantError);
}

TEST_CASE("quantile calibration ignores a few extreme images") {
  const auto model = arch::build_model(arch::reference_model_1(32), 2);
  auto calib = random_inputs(19, 32, 6);
  const auto typical = calibrate(model, calib, 1.0);
  calib.push_back(nn::Tensor({32, 32, 1}, 40.0f));  // far outside the input domain
  const auto plain = calibrate(model, calib, 1.0);
  const auto robust = calibrate(model, calib, 0.95);
  REQUIRE(robust.nodes.size() == typical.nodes.size());
  bool wider = false;
  for (std::size_t i = 0; i < robust.nodes.size(); ++i) {
    CHECK(robust.nodes[i].max <= plain.nodes[i].max);
    CHECK(robust.nodes[i].min >= plain.nodes[i].min);
    CHECK(robust.nodes[i].max <= typical.nodes[i].max);
    CHECK(robust.nodes[i].min >= typical.nodes[i].min);
    CHECK(robust.nodes[i].count == 20);
    wider = wider || plain.nodes[i].max > typical.nodes[i].max;
  }
  CHECK(wider);
  // Held-out activations of typical images stay mostly inside the ranges.
  CHECK(range_coverage(model, robust, random_inputs(10, 32, 7)) >= 0.99);
}

TEST_CASE("int8 quantization contract") {
  auto model = arch::build_model(arch::reference_model_2(32), 7);
  // Plant known weight extremes.
  model.params[0].fill(0.25f);
  model.params[0][3] = -0.5f;
  model.params[2].fill(0.0f);
  const auto calib = random_inputs(8, 32, 3);
  const auto qm = quantize_int8(model, calibrate(model, calib));
  REQUIRE(qm.layers[0].spec.op == nn::LayerOp::Conv);
  CHECK(qm.layers[0].weight_scale == doctest::Approx(0.5f / 127.0f));
  CHECK(qm.layers[0].weights[3] == -127);
  CHECK(qm.layers[2].weight_scale == 1.0f);
  for (auto w : qm.layers[2].weights) CHECK(w == 0);

  std::function<void(const std::vector<QLayer>&)> walk = [&](const std::vector<QLayer>& layers) {
    for (const auto& l : layers) {
      CHECK(l.output.scale > 0.0f);
      CHECK(dequantize_value(l.output.zero_point, l.output) == 0.0f);
      if (l.spec.op == nn::LayerOp::Conv || l.spec.op == nn::LayerOp::Dense ||
          l.spec.op == nn::LayerOp::GlobalAvgPool) {
        CHECK(l.requant.multiplier >= (1 << 30));
      }
      for (const auto& b : l.branches) walk(b);
    }
  };
  walk(qm.layers);
}

TEST_CASE("simulation tracks the float model") {
  for (auto spec : {arch::reference_model_1(48), arch::reference_model_2(48)}) {
    const auto model = arch::build_model(spec, 9);
    const auto calib = random_inputs(16, 48, 4);
    const auto qm = quantize_int8(model, calibrate(model, calib));
    const auto zero = simulate_quant_infer(qm, nn::Tensor({48, 48, 1}, 0.0f));
    CHECK(zero.logits_q == simulate_quant_infer(qm, nn::Tensor({48, 48, 1}, 0.0f)).logits_q);
    std::vector<LabeledTensor> samples;
    for (const auto& t : calib) samples.push_back({t, 0});
    const auto rep = quant_error_stats(model, qm, samples);
    CHECK(rep.samples == 16);
    CHECK(std::isfinite(rep.mean_logit_dev));
    CHECK(rep.max_logit_dev < 0.25);
    CHECK(rep.agreement_rate >= 0.9);
    const auto sim = simulate_quant_infer(qm, calib[0], true);
    CHECK(sim.activations.size() == static_cast<std::size_t>(nn::count_nodes(spec.layers)));
  }
}

TEST_CASE("weights already on the grid agree exactly in argmax") {
  auto model = arch::build_model(arch::reference_model_1(32), 12);
  for (auto& p : model.params)
    for (auto& v : p.values()) v = std::round(v * 64.0f) / 64.0f;
  const auto calib = random_inputs(8, 32, 5);
  const auto qm = quantize_int8(model, calibrate(model, calib));
  std::vector<LabeledTensor> samples;
  for (const auto& t : calib) samples.push_back({t, 1});
  CHECK(quant_error_stats(model, qm, samples).agreement_rate == 1.0);
}

TEST_CASE("fp16") {
  CHECK(half_to_float(float_to_half(0.5f)) == 0.5f);
  bool sat = false;
  CHECK(half_to_float(float_to_half(1e6f, &sat)) == 65504.0f);
  CHECK(sat);
  const float tiny = half_to_float(float_to_half(1e-10f));
  CHECK(std::abs(tiny) < 1e-7f);
  // Round to nearest even: 1 + 2^-11 lies halfway between 1 and 1 + 2^-10.
  CHECK(half_to_float(float_to_half(1.0f + std::ldexp(1.0f, -11))) == 1.0f);

  auto model = arch::build_model(arch::reference_model_1(32), 3);
  model.params[1][0] = 1e6f;
  const auto hm = quantize_fp16(model);
  CHECK(hm.saturated == 1);
  const auto back = dequantize_fp16(hm);
  for (std::size_t t = 0; t < model.params.size(); ++t)
    for (std::size_t i = 0; i < model.params[t].size(); ++i)
      CHECK(back.params[t][i] == half_to_float(float_to_half(model.params[t][i])));
  const double ratio = static_cast<double>(engine::serialize(model).size()) /
                       static_cast<double>(engine::serialize(hm).size());
  CHECK(ratio > 1.8);
  CHECK(ratio <= 2.0);
}

TEST_CASE("quant report") {
  QuantErrorReport r;
  r.samples = 10;
  r.accuracy_float = 0.8;
  r.accuracy_int8 = 0.7;
  r.accuracy_delta = -0.1;
  const auto text = format_quant_report(r, arch::estimate_size(arch::reference_model_1(96)));
  CHECK(text.find("accuracy_float=0.8") != std::string::npos);
  CHECK(text.find("agreement_rate=") != std::string::npos);
  CHECK(text.find("max_logit_dev=") != std::string::npos);
  CHECK(text.find("blob_bytes_int8=") != std::string::npos);
}
