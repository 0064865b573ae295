#include <cmath>
#include <doctest.h>

#include "pvcrack/arch/model.hpp"
#include "pvcrack/arch/search.hpp"
#include "pvcrack/engine/blob.hpp"
#include "pvcrack/quant/quant.hpp"

using namespace pvcrack;
using namespace pvcrack::arch;

TEST_CASE("vgg block") {
  const auto block = make_vgg_block(1, 8);
  REQUIRE(block.size() == 5);
  ModelSpec s;
  s.input_side = 96;
  s.layers = block;
  CHECK(param_count(s) == 664);
  CHECK(propagate_shapes(s).back() == nn::Shape{48, 48, 8});
  s.layers = make_vgg_block(8, 8);
  s.input_channels = 8;
  CHECK(propagate_shapes(s).back() == nn::Shape{48, 48, 8});
}

TEST_CASE("inception block") {
  const auto inc = make_inception_block(8, 4, 4, 8, 2, 4, 4);
  ModelSpec s;
  s.input_channels = 8;
  for (int side : {5, 12, 33}) {
    s.input_side = side;
    s.layers = {inc};
    CHECK(propagate_shapes(s).back() == nn::Shape{side, side, 20});
  }
  auto broken = inc;
  broken.branches[1][2].padding = 0;  // 3x3 without padding shrinks that branch
  s.layers = {broken};
  CHECK_THROWS_AS(propagate_shapes(s), SpecError);
}

TEST_CASE("reference models") {
  const auto m1 = reference_model_1(96);
  validate(m1);
  CHECK(param_count(m1) > 15000);
  CHECK(param_count(m1) < 25000);
  CHECK(estimate_size(m1).bytes_int8 < 102400);
  const auto m2 = reference_model_2(96);
  validate(m2);
  CHECK(propagate_shapes(m2).back() == nn::Shape{2});
  CHECK(parameterized_layer_count(m1) == 8);
  CHECK(parameterized_layer_count(m2) == 7);
}

TEST_CASE("single dense model parameter count") {
  ModelSpec d;
  d.input_side = 1;
  d.input_channels = 10;
  d.layers = {LayerSpec::flatten(), LayerSpec::dense(10, 2)};
  CHECK(propagate_shapes(d).back() == nn::Shape{2});
  CHECK_THROWS_AS(validate(d), SpecError);  // deployable models take one channel
  CHECK(param_count(d) == 22);
}

TEST_CASE("spec errors") {
  auto s = reference_model_1(96);
  s.layers[s.layers.size() - 3].in_ch = 31;  // dense input no longer matches
  CHECK_THROWS_AS(validate(s), SpecError);
  auto t = reference_model_1(96);
  t.layers.back().out_ch = 3;  // logits do not match num_classes
  CHECK_THROWS_AS(validate(t), SpecError);
  CHECK_THROWS_AS(build_model(t, 1), SpecError);
}

TEST_CASE("build_model initialization") {
  const auto spec = reference_model_1(64);
  const auto a = build_model(spec, 5), b = build_model(spec, 5), c = build_model(spec, 6);
  REQUIRE(a.params.size() == b.params.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].values() == b.params[i].values());
    differs = differs || a.params[i].values() != c.params[i].values();
  }
  CHECK(differs);
  // conv 3x3x1 -> 8: fan_in 9
  const double bound = std::sqrt(6.0 / 9.0);
  for (float v : a.params[0].values()) CHECK(std::abs(v) <= bound);
  for (float v : a.params[1].values()) CHECK(v == 0.0f);
}

TEST_CASE("spec text round trip") {
  for (const auto& spec : {reference_model_1(96), reference_model_2(80)}) {
    const auto text = format_spec(spec);
    CHECK(parse_spec(text) == spec);
  }
  CHECK_THROWS_AS(parse_spec("model input_side=96\nwarp k=3\n"), SpecError);
}

TEST_CASE("freeze helpers") {
  const auto spec = reference_model_1(96);
  const auto starts = param_unit_starts(spec);
  CHECK(starts.size() == 9);
  CHECK(first_trainable_param(spec, 0) == 0);
  CHECK(first_trainable_param(spec, 8) == nn::param_shapes(spec.layers).size());
  CHECK_THROWS_AS(first_trainable_param(spec, 9), ParamError);
}

TEST_CASE("size estimates equal serialized lengths") {
  Rng rng(21);
  SearchSpace space;
  space.input_sides = {32, 48, 64};
  int checked = 0;
  for (int i = 0; i < 60 && checked < 24; ++i) {
    const auto spec = sample_spec(space, rng);
    if (!blob_format_violation(spec).empty()) continue;
    try {
      validate(spec);
    } catch (const SpecError&) {
      continue;
    }
    const auto model = build_model(spec, static_cast<std::uint64_t>(i));
    const auto est = estimate_size(spec);
    CHECK(est.bytes_fp32 == engine::serialize(model).size());
    CHECK(est.bytes_fp16 == engine::serialize(quant::quantize_fp16(model)).size());
    const nn::Tensor probe(spec.input_shape(), 0.5f);
    const auto qm = quant::quantize_int8(model, quant::calibrate(model, {probe}));
    CHECK(est.bytes_int8 == engine::serialize(qm).size());
    CHECK(est.bytes_int8 < est.bytes_fp16);
    CHECK(est.bytes_fp16 < est.bytes_fp32);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("blob format limits") {
  CHECK(blob_format_violation(reference_model_1(96)).empty());
  ModelSpec s;
  s.input_side = 300;
  s.layers = {LayerSpec::conv(1, 4, 3, 1, 1), LayerSpec::flatten(), LayerSpec::dense(300 * 300 * 4, 2)};
  CHECK_FALSE(blob_format_violation(s).empty());
}
