#include <doctest.h>

#include "fixtures.hpp"
#include "pvcrack/engine/blob.hpp"
#include "pvcrack/train/train.hpp"

using namespace pvcrack;
using namespace pvcrack::train;

namespace {

struct Toy {
  data::LabeledDataset ds;
  data::SplitPlan plan;
};

const Toy& toy() {
  static const Toy t = [] {
    Toy t;
    t.ds = data::build_variant(fixtures::synthetic_set(40), data::VariantId::V06, 1);
    t.plan = data::make_folds(t.ds, 5, 1);
    return t;
  }();
  return t;
}

const PreparedData& toy_inputs() {
  static const PreparedData p = prepare_inputs(toy().ds, 32);
  return p;
}

arch::Model toy_model(std::uint64_t seed = 3) { return arch::build_model(arch::reference_model_1(32), seed); }

TrainConfig quick(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.early_stop_patience.reset();
  return cfg;
}

bool same_params(const arch::Model& a, const arch::Model& b, std::size_t first = 0, std::size_t last = SIZE_MAX) {
  last = std::min(last, a.params.size());
  for (std::size_t i = first; i < last; ++i)
    if (a.params[i].values() != b.params[i].values()) return false;
  return true;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  TrainConfig c;
  c.epochs = -1;
  CHECK_THROWS_AS(c.validate(), ParamError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ParamError);
  c = {};
  c.freeze_prefix = 99;
  const auto spec = arch::reference_model_1(32);
  CHECK_THROWS_AS(c.validate(&spec), ParamError);
  c.freeze_prefix = arch::parameterized_layer_count(spec);
  CHECK_NOTHROW(c.validate(&spec));
  const auto text = format_config(TrainConfig{});
  CHECK(text.find("epochs=60") != std::string::npos);
  CHECK(text.find("batch_size=32") != std::string::npos);
}

TEST_CASE("training partition excludes the validation fold") {
  const auto& t = toy();
  for (int f = 0; f < 5; ++f) {
    const auto idx = training_indices(t.plan, f);
    CHECK(idx.size() + t.plan.members(f).size() == t.ds.samples.size());
    for (auto i : idx) CHECK(t.plan.fold_assignment[i] != f);
  }
}

TEST_CASE("zero epochs leave parameters untouched") {
  const auto m = toy_model();
  const auto r = train::train(m, toy_inputs(), toy().ds, toy().plan, 0, quick(0));
  CHECK(same_params(m, r.model));
  CHECK(r.history.epochs() == 0);
}

TEST_CASE("frozen prefix is never written") {
  const auto m = toy_model();
  auto cfg = quick(2);
  cfg.freeze_prefix = 4;
  const auto r = train::train(m, toy_inputs(), toy().ds, toy().plan, 0, cfg);
  const auto first = arch::first_trainable_param(m.spec, 4);
  CHECK(first > 0);
  CHECK(same_params(m, r.model, 0, first));
  CHECK_FALSE(same_params(m, r.model, first));
}

TEST_CASE("same seed, same result") {
  auto cfg = quick(2);
  cfg.augment = data::AugmentPolicy::standard();
  const auto a = train::train(toy_model(), toy_inputs(), toy().ds, toy().plan, 1, cfg);
  const auto b = train::train(toy_model(), toy_inputs(), toy().ds, toy().plan, 1, cfg);
  CHECK(same_params(a.model, b.model));
  CHECK(a.history.train_loss == b.history.train_loss);
  CHECK(a.history.val_accuracy == b.history.val_accuracy);
  cfg.seed = 2;
  const auto c = train::train(toy_model(), toy_inputs(), toy().ds, toy().plan, 1, cfg);
  CHECK_FALSE(same_params(a.model, c.model));
}

TEST_CASE("a separable toy set is fitted") {
  auto cfg = quick(30);
  cfg.batch_size = 32;
  const auto r = train::train(toy_model(), toy_inputs(), toy().ds, toy().plan, 0, cfg);
  const auto idx = training_indices(toy().plan, 0);
  const Predictor pred = [&](const nn::Tensor& x) { return predict(r.model, x); };
  CHECK(evaluate_indices(pred, toy_inputs(), toy().ds, idx).accuracy == 1.0);
  CHECK(r.history.train_loss.back() < r.history.train_loss.front());
}

TEST_CASE("full-batch SGD with a small step decreases the loss") {
  auto cfg = quick(6);
  cfg.batch_size = 64;
  cfg.optimizer.kind = nn::OptimKind::SGD;
  cfg.optimizer.learning_rate = 0.01;
  const auto r = train::train(toy_model(), toy_inputs(), toy().ds, toy().plan, 0, cfg);
  for (int e = 1; e < r.history.epochs(); ++e)
    CHECK(r.history.train_loss[static_cast<std::size_t>(e)] <=
          r.history.train_loss[static_cast<std::size_t>(e - 1)] + 1e-9);
}

TEST_CASE("early stopping") {
  auto cfg = quick(40);
  cfg.early_stop_patience = 1;
  const auto r = train::train(toy_model(), toy_inputs(), toy().ds, toy().plan, 0, cfg);
  if (r.history.stopped_early) CHECK(r.history.epochs() < 40);
  CHECK(r.history.best_epoch >= 0);
  CHECK(r.history.best_epoch < r.history.epochs());
}

TEST_CASE("fine-tuning ladder") {
  const auto m1 = arch::reference_model_1(96), m2 = arch::reference_model_2(96);
  CHECK(ladder_config(m1, 1).freeze_prefix == 6);
  CHECK(ladder_config(m1, 2).freeze_prefix == 4);
  CHECK(ladder_config(m2, 1).freeze_prefix == 5);
  CHECK(ladder_config(m2, 2).freeze_prefix == 3);
  const auto c3 = ladder_config(m1, 3);
  CHECK(c3.freeze_prefix == 4);
  REQUIRE(c3.augment);
  CHECK_FALSE(c3.augment->is_identity());
  CHECK_FALSE(ladder_config(m1, 2).augment.has_value());
  CHECK_THROWS_AS(ladder_config(m1, 4), ParamError);

  // Configuration 3 under an identity policy trains exactly like 2.
  const auto base = toy_model(5);
  auto c2 = ladder_config(base.spec, 2, quick(2));
  auto c3i = ladder_config(base.spec, 3, quick(2));
  c3i.augment = data::AugmentPolicy{};
  const auto a = fine_tune(base, toy_inputs(), toy().ds, toy().plan, 0, c2);
  const auto b = fine_tune(base, toy_inputs(), toy().ds, toy().plan, 0, c3i);
  CHECK(same_params(a.model, b.model));
}

TEST_CASE("evaluation") {
  const auto& t = toy();
  const Predictor always0 = [](const nn::Tensor&) { return 0; };
  const auto r = evaluate_with(always0, toy_inputs(), t.ds, t.plan, 0, false);
  long zeros = 0;
  for (auto i : t.plan.members(0)) zeros += t.ds.samples[i].class_index == 0;
  CHECK(r.accuracy == doctest::Approx(static_cast<double>(zeros) / t.plan.members(0).size()));
  CHECK_THROWS_AS(evaluate_with(always0, toy_inputs(), t.ds, t.plan, 0, true), ParamError);
  CHECK_THROWS_AS(evaluate_indices(always0, toy_inputs(), t.ds, {}), ParamError);

  // Classes that do not match the dataset.
  auto spec = arch::reference_model_1(32);
  spec.num_classes = 4;
  for (auto it = spec.layers.rbegin(); it != spec.layers.rend(); ++it)
    if (it->op == nn::LayerOp::Dense) {
      it->out_ch = 4;
      break;
    }
  CHECK_THROWS_AS(train::train(arch::build_model(spec, 1), toy_inputs(), t.ds, t.plan, 0, quick(1)), ShapeError);
}

TEST_CASE("checkpoint round trip") {
  fixtures::TempDir dir("ckpt");
  const auto m = toy_model(8);
  const auto path = dir.path() / "m.pvtm";
  save_checkpoint(path, m, "epochs=1\n");
  CHECK(std::filesystem::exists(std::filesystem::path(path.string() + ".manifest")));
  const auto back = load_checkpoint(path);
  CHECK(back.spec == m.spec);
  CHECK(same_params(m, back));
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing.pvtm"), LoadError);
}
