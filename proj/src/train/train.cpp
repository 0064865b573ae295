#include "pvcrack/train/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pvcrack/engine/blob.hpp"
#include "pvcrack/nn/layers.hpp"

namespace pvcrack::train {

using nn::LayerOp;

void TrainConfig::validate(const arch::ModelSpec* spec) const {
  if (epochs < 0) throw ParamError("train: epochs must be >= 0");
  if (batch_size < 1) throw ParamError("train: batch_size must be >= 1");
  if (freeze_prefix < 0) throw ParamError("train: freeze_prefix must be >= 0");
  if (early_stop_patience && *early_stop_patience < 1)
    throw ParamError("train: early_stop_patience must be >= 1");
  optimizer.validate();
  if (augment) augment->validate();
  if (spec && freeze_prefix > arch::parameterized_layer_count(*spec))
    throw ParamError("train: freeze_prefix " + std::to_string(freeze_prefix) + " exceeds the " +
                     std::to_string(arch::parameterized_layer_count(*spec)) +
                     " parameterized layers");
}

std::string format_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "epochs=" << cfg.epochs << "\n"
     << "batch_size=" << cfg.batch_size << "\n"
     << "optimizer=" << nn::optim_kind_name(cfg.optimizer.kind) << "\n"
     << "learning_rate=" << cfg.optimizer.learning_rate << "\n"
     << "momentum=" << cfg.optimizer.momentum << "\n"
     << "adam_beta1=" << cfg.optimizer.adam_beta1 << "\n"
     << "adam_beta2=" << cfg.optimizer.adam_beta2 << "\n"
     << "epsilon=" << cfg.optimizer.epsilon << "\n"
     << "augment=" << (cfg.augment && !cfg.augment->is_identity() ? "on" : "off") << "\n";
  if (cfg.augment) {
    const auto& a = *cfg.augment;
    os << "augment_rotate_degrees=" << a.rotate_degrees_max << "\n"
       << "augment_translate_px=" << a.translate_px_max << "\n"
       << "augment_hflip=" << a.horizontal_flip << "\n"
       << "augment_vflip=" << a.vertical_flip << "\n"
       << "augment_contrast_low=" << a.contrast_low << "\n"
       << "augment_contrast_high=" << a.contrast_high << "\n";
  }
  os << "freeze_prefix=" << cfg.freeze_prefix << "\n"
     << "seed=" << cfg.seed << "\n"
     << "early_stop_patience="
     << (cfg.early_stop_patience ? std::to_string(*cfg.early_stop_patience) : "none") << "\n"
     << "deterministic=" << (cfg.deterministic ? "true" : "false") << "\n";
  return os.str();
}

PreparedData prepare_inputs(const data::LabeledDataset& ds, int input_side) {
  PreparedData p;
  p.input_side = input_side;
  p.samples.reserve(ds.samples.size());
  for (const auto& s : ds.samples) p.samples.push_back(data::preprocess(*s.image, input_side));
  p.forced_test.reserve(ds.forced_test.size());
  for (const auto& s : ds.forced_test) p.forced_test.push_back(data::preprocess(*s.image, input_side));
  return p;
}

std::vector<std::size_t> training_indices(const data::SplitPlan& plan, int val_fold) {
  if (val_fold < 0 || val_fold >= plan.k)
    throw ParamError("val_fold " + std::to_string(val_fold) + " outside [0, " +
                     std::to_string(plan.k) + ")");
  return plan.complement(val_fold);
}

namespace {

int argmax(const nn::Tensor& t) {
  int best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

void check_inputs(const arch::Model& model, const PreparedData& inputs,
                  const data::LabeledDataset& ds) {
  if (inputs.samples.size() != ds.samples.size() ||
      inputs.forced_test.size() != ds.forced_test.size())
    throw ParamError("prepared inputs do not match the dataset");
  if (inputs.input_side != model.spec.input_side || model.spec.input_channels != 1)
    throw ShapeError("model input " + std::to_string(model.spec.input_side) + "x" +
                     std::to_string(model.spec.input_side) + "x" +
                     std::to_string(model.spec.input_channels) +
                     " does not match prepared inputs of side " + std::to_string(inputs.input_side));
  if (model.spec.num_classes != ds.num_classes)
    throw ShapeError("model has " + std::to_string(model.spec.num_classes) +
                     " classes, dataset has " + std::to_string(ds.num_classes));
}

TrainResult run(const arch::Model& start, const PreparedData& inputs, const data::LabeledDataset& ds,
                const data::SplitPlan& plan, int val_fold, const TrainConfig& cfg,
                const EpochCallback& on_epoch) {
  cfg.validate(&start.spec);
  check_inputs(start, inputs, ds);
  if (plan.fold_assignment.size() != ds.samples.size())
    throw ParamError("split plan does not match the dataset");
  std::vector<std::size_t> order = training_indices(plan, val_fold);
  if (order.empty()) throw ParamError("train: empty training partition");
  const std::vector<std::size_t> val = plan.members(val_fold);

  TrainResult res{start, {}};
  arch::Model& m = res.model;
  History& h = res.history;
  const std::size_t trainable = arch::first_trainable_param(m.spec, cfg.freeze_prefix);
  const bool augmenting = cfg.augment && !cfg.augment->is_identity();
  const std::uint64_t augment_seed = mix_seed(cfg.seed, 2);

  nn::Optimizer<float> opt(cfg.optimizer);
  std::vector<nn::Tensor> grads;
  grads.reserve(m.params.size());
  for (const auto& p : m.params) grads.emplace_back(p.shape());
  std::vector<nn::NodeTrace<float>> trace;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  double best_val = -1.0;
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 1));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t end = std::min(order.size(), b + batch);
      const auto scale = static_cast<float>(end - b);
      for (std::size_t g = trainable; g < grads.size(); ++g) grads[g].fill(0.0f);
      for (std::size_t i = b; i < end; ++i) {
        const std::size_t idx = order[i];
        const nn::Tensor augmented =
            augmenting ? data::augment(inputs.samples[idx], *cfg.augment,
                                       mix_seed(augment_seed, static_cast<std::uint64_t>(epoch), idx))
                       : nn::Tensor{};
        const nn::Tensor& x = augmenting ? augmented : inputs.samples[idx];
        const int target = ds.samples[idx].class_index;
        const nn::Tensor out = nn::forward<float>(m.spec.layers, m.params, x, &trace);
        auto loss = nn::cross_entropy(out, target);
        if (!std::isfinite(loss.loss)) throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
        loss_sum += loss.loss;
        if (argmax(out) == target) ++correct;
        for (auto& v : loss.logit_grad.values()) v /= scale;
        nn::backward<float>(m.spec.layers, m.params, x, trace, loss.logit_grad, grads, nullptr,
                            trainable);
      }
      if (trainable < m.params.size()) opt.step(m.params, grads, trainable);
    }
    h.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    h.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(order.size()));

    std::size_t val_correct = 0;
    for (std::size_t idx : val) {
      const nn::Tensor out = nn::forward<float>(m.spec.layers, m.params, inputs.samples[idx], &trace);
      if (argmax(out) == ds.samples[idx].class_index) ++val_correct;
    }
    const double va = val.empty() ? 0.0 : static_cast<double>(val_correct) / static_cast<double>(val.size());
    h.val_accuracy.push_back(va);
    if (va > best_val) {
      best_val = va;
      h.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch) on_epoch(epoch, h);
    if (cfg.early_stop_patience && !val.empty() && since_best >= *cfg.early_stop_patience) {
      h.stopped_early = epoch + 1 < cfg.epochs;
      break;
    }
  }
  return res;
}

std::size_t head_start(const arch::ModelSpec& spec) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto op = spec.layers[i].op;
    if (op == LayerOp::GlobalAvgPool || op == LayerOp::Flatten || op == LayerOp::Dense) return i;
  }
  return spec.layers.size();
}

int param_layers_before(const arch::ModelSpec& spec, std::size_t end) {
  int n = 0;
  for (std::size_t i = 0; i < end; ++i)
    if (nn::param_tensor_count(spec.layers[i]) > 0) ++n;
  return n;
}

}  // namespace

TrainResult train(const arch::Model& model, const data::LabeledDataset& ds,
                  const data::SplitPlan& plan, int val_fold, const TrainConfig& cfg) {
  return train(model, prepare_inputs(ds, model.spec.input_side), ds, plan, val_fold, cfg);
}

TrainResult train(const arch::Model& model, const PreparedData& inputs,
                  const data::LabeledDataset& ds, const data::SplitPlan& plan, int val_fold,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return run(model, inputs, ds, plan, val_fold, cfg, on_epoch);
}

TrainResult fine_tune(const arch::Model& base, const data::LabeledDataset& ds,
                      const data::SplitPlan& plan, int val_fold, const TrainConfig& cfg) {
  return fine_tune(base, prepare_inputs(ds, base.spec.input_side), ds, plan, val_fold, cfg);
}

TrainResult fine_tune(const arch::Model& base, const PreparedData& inputs,
                      const data::LabeledDataset& ds, const data::SplitPlan& plan, int val_fold,
                      const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (base.params.size() != nn::param_shapes(base.spec.layers).size())
    throw ParamError("fine_tune: base model parameters do not match its spec");
  return run(base, inputs, ds, plan, val_fold, cfg, on_epoch);
}

int feature_freeze_prefix(const arch::ModelSpec& spec) {
  return param_layers_before(spec, head_start(spec));
}

int last_block_freeze_prefix(const arch::ModelSpec& spec) {
  const std::size_t head = head_start(spec);
  std::vector<std::size_t> ends;  // index one past each block
  for (std::size_t i = 0; i < head; ++i) {
    const auto op = spec.layers[i].op;
    if (op == LayerOp::MaxPool || op == LayerOp::InceptionConcat) ends.push_back(i + 1);
  }
  if (ends.empty() || ends.back() != head) ends.push_back(head);
  const std::size_t last_start = ends.size() >= 2 ? ends[ends.size() - 2] : 0;
  return param_layers_before(spec, last_start);
}

TrainConfig ladder_config(const arch::ModelSpec& spec, int configuration, TrainConfig base) {
  switch (configuration) {
    case 1:
      base.freeze_prefix = feature_freeze_prefix(spec);
      base.augment.reset();
      break;
    case 2:
      base.freeze_prefix = last_block_freeze_prefix(spec);
      base.augment.reset();
      break;
    case 3:
      base.freeze_prefix = last_block_freeze_prefix(spec);
      base.augment = data::AugmentPolicy::standard();
      break;
    default:
      throw ParamError("configuration must be 1, 2 or 3, got " + std::to_string(configuration));
  }
  return base;
}

int predict(const arch::Model& model, const nn::Tensor& input) {
  return argmax(nn::forward<float>(model.spec.layers, model.params, input));
}

eval::MetricsReport evaluate_indices(const Predictor& predictor, const PreparedData& inputs,
                                     const data::LabeledDataset& ds,
                                     const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ParamError("evaluate: empty evaluation partition");
  std::vector<int> preds, truth;
  preds.reserve(indices.size());
  truth.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= ds.samples.size() || idx >= inputs.samples.size())
      throw ParamError("evaluate: sample index out of range");
    preds.push_back(predictor(inputs.samples[idx]));
    truth.push_back(ds.samples[idx].class_index);
  }
  return eval::compute_metrics(eval::confusion_matrix(preds, truth, ds.num_classes));
}

eval::MetricsReport evaluate_with(const Predictor& predictor, const PreparedData& inputs,
                                  const data::LabeledDataset& ds, const data::SplitPlan& plan,
                                  int fold, bool use_forced_test) {
  if (!use_forced_test) {
    if (fold < 0 || fold >= plan.k)
      throw ParamError("fold " + std::to_string(fold) + " outside [0, " + std::to_string(plan.k) + ")");
    return evaluate_indices(predictor, inputs, ds, plan.members(fold));
  }
  if (ds.forced_test.empty()) throw ParamError("evaluate: dataset has no forced-test partition");
  std::vector<int> preds, truth;
  for (std::size_t i = 0; i < ds.forced_test.size(); ++i) {
    preds.push_back(predictor(inputs.forced_test[i]));
    truth.push_back(ds.forced_test[i].class_index);
  }
  return eval::compute_metrics(eval::confusion_matrix(preds, truth, ds.num_classes));
}

eval::MetricsReport evaluate_model(const arch::Model& model, const data::LabeledDataset& ds,
                                   const data::SplitPlan& plan, int fold, bool use_forced_test) {
  PreparedData inputs;
  inputs.input_side = model.spec.input_side;
  if (use_forced_test) {
    for (const auto& s : ds.forced_test)
      inputs.forced_test.push_back(data::preprocess(*s.image, model.spec.input_side));
    inputs.samples.resize(ds.samples.size());
  } else {
    if (fold < 0 || fold >= plan.k)
      throw ParamError("fold " + std::to_string(fold) + " outside [0, " + std::to_string(plan.k) + ")");
    inputs.samples.resize(ds.samples.size());
    for (std::size_t idx : plan.members(fold))
      inputs.samples[idx] = data::preprocess(*ds.samples[idx].image, model.spec.input_side);
  }
  if (model.spec.num_classes != ds.num_classes)
    throw ShapeError("model has " + std::to_string(model.spec.num_classes) +
                     " classes, dataset has " + std::to_string(ds.num_classes));
  return evaluate_with([&](const nn::Tensor& x) { return predict(model, x); }, inputs, ds, plan,
                       fold, use_forced_test);
}

void save_checkpoint(const std::filesystem::path& path, const arch::Model& model,
                     const std::string& manifest) {
  engine::save_blob(path, engine::serialize(model));
  write_text_file(std::filesystem::path(path.string() + ".manifest"), manifest);
}

arch::Model load_checkpoint(const std::filesystem::path& path) {
  return engine::float_model(engine::parse_blob(engine::load_blob(path)));
}

}  // namespace pvcrack::train
