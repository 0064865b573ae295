#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pvcrack/arch/model.hpp"
#include "pvcrack/data/augment.hpp"
#include "pvcrack/data/elpv.hpp"
#include "pvcrack/eval/metrics.hpp"
#include "pvcrack/nn/optim.hpp"

namespace pvcrack::train {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 32;
  nn::OptimConfig optimizer;
  std::optional<data::AugmentPolicy> augment;
  int freeze_prefix = 0;  // leading parameterized layers left untouched
  std::uint64_t seed = 1;
  std::optional<int> early_stop_patience = 10;  // epochs without a val accuracy gain
  // Training is single-threaded with a fixed reduction order, so this only
  // gets recorded; kept so manifests state the mode explicitly.
  bool deterministic = true;

  // ParamError on an out-of-range field; spec (optional) also checks
  // freeze_prefix against its parameterized layer count.
  void validate(const arch::ModelSpec* spec = nullptr) const;
};

// key=value lines, one per field, stable order.
std::string format_config(const TrainConfig& cfg);

struct History {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> val_accuracy;
  bool stopped_early = false;
  int best_epoch = -1;  // index of the highest val accuracy (first on ties)

  int epochs() const { return static_cast<int>(train_loss.size()); }
};

struct TrainResult {
  arch::Model model;
  History history;
};

// Dataset samples resized once to the model input side.
struct PreparedData {
  int input_side = 0;
  std::vector<nn::Tensor> samples;
  std::vector<nn::Tensor> forced_test;
};

PreparedData prepare_inputs(const data::LabeledDataset& ds, int input_side);

// Samples that may contribute gradients: every fold but val_fold. Forced-test
// samples live outside ds.samples and are never included.
std::vector<std::size_t> training_indices(const data::SplitPlan& plan, int val_fold);

using EpochCallback = std::function<void(int epoch, const History&)>;

TrainResult train(const arch::Model& model, const data::LabeledDataset& ds,
                  const data::SplitPlan& plan, int val_fold, const TrainConfig& cfg);
TrainResult train(const arch::Model& model, const PreparedData& inputs,
                  const data::LabeledDataset& ds, const data::SplitPlan& plan, int val_fold,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Same loop as train, starting from base's parameters; base must accept
// the dataset's class count.
TrainResult fine_tune(const arch::Model& base, const data::LabeledDataset& ds,
                      const data::SplitPlan& plan, int val_fold, const TrainConfig& cfg);
TrainResult fine_tune(const arch::Model& base, const PreparedData& inputs,
                      const data::LabeledDataset& ds, const data::SplitPlan& plan, int val_fold,
                      const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Parameterized layers ahead of the last feature block. Feature blocks end
// at each top-level MaxPool or Inception before the head (first
// GlobalAvgPool, Flatten or Dense).
int last_block_freeze_prefix(const arch::ModelSpec& spec);
// Parameterized layers in the feature extractor (everything before the head).
int feature_freeze_prefix(const arch::ModelSpec& spec);

// Configuration ladder: 1 freezes the whole feature extractor, 2 unfreezes
// the last feature block, 3 is 2 plus AugmentPolicy::standard().
TrainConfig ladder_config(const arch::ModelSpec& spec, int configuration, TrainConfig base = {});

using Predictor = std::function<int(const nn::Tensor& input)>;

// Argmax of the float model.
int predict(const arch::Model& model, const nn::Tensor& input);

// Metrics over the given dataset sample indices.
eval::MetricsReport evaluate_indices(const Predictor& predictor, const PreparedData& inputs,
                                     const data::LabeledDataset& ds,
                                     const std::vector<std::size_t>& indices);

// Evaluates fold `fold`, or the forced-test partition when use_forced_test
// is set. ParamError when the partition is empty.
eval::MetricsReport evaluate_model(const arch::Model& model, const data::LabeledDataset& ds,
                                   const data::SplitPlan& plan, int fold, bool use_forced_test);
eval::MetricsReport evaluate_with(const Predictor& predictor, const PreparedData& inputs,
                                  const data::LabeledDataset& ds, const data::SplitPlan& plan,
                                  int fold, bool use_forced_test);

// fp32 blob at path plus "<path>.manifest" holding the given key=value text.
void save_checkpoint(const std::filesystem::path& path, const arch::Model& model,
                     const std::string& manifest);
arch::Model load_checkpoint(const std::filesystem::path& path);

}  // namespace pvcrack::train
