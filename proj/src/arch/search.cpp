#include "pvcrack/arch/search.hpp"

#include <algorithm>

namespace pvcrack::arch {

const char* block_kind_name(BlockKind k) { return k == BlockKind::Vgg ? "vgg" : "inception"; }
const char* head_kind_name(HeadKind k) { return k == HeadKind::GlobalAvgPool ? "gap" : "flatten"; }

void SearchSpace::validate() const {
  if (min_blocks < 1 || max_blocks < min_blocks)
    throw ParamError("search space: block count range must satisfy 1 <= min <= max");
  if (block_kinds.empty() || channel_choices.empty() || heads.empty() || dense_widths.empty() ||
      input_sides.empty())
    throw ParamError("search space: every choice list must be nonempty");
  for (int c : channel_choices)
    if (c < 1) throw ParamError("search space: channel choices must be >= 1");
  for (int w : dense_widths)
    if (w < 1) throw ParamError("search space: dense widths must be >= 1");
  for (int s : input_sides)
    if (s < 1) throw ParamError("search space: input sides must be >= 1");
  if (num_classes < 2) throw ParamError("search space: num_classes must be >= 2");
}

namespace {

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

}  // namespace

ModelSpec sample_spec(const SearchSpace& space, Rng& rng) {
  space.validate();
  const int blocks =
      space.min_blocks + static_cast<int>(rng.below(static_cast<std::uint64_t>(space.max_blocks - space.min_blocks + 1)));
  ModelSpec spec;
  spec.num_classes = space.num_classes;
  int ch = 1;
  std::vector<BlockKind> kinds;
  std::vector<int> widths;
  for (int b = 0; b < blocks; ++b) {
    kinds.push_back(pick(space.block_kinds, rng));
    widths.push_back(pick(space.channel_choices, rng));
  }
  const HeadKind head = pick(space.heads, rng);
  const int dense_width = pick(space.dense_widths, rng);
  spec.input_side = pick(space.input_sides, rng);

  int side = spec.input_side;
  for (int b = 0; b < blocks; ++b) {
    const int c = widths[static_cast<std::size_t>(b)];
    if (kinds[static_cast<std::size_t>(b)] == BlockKind::Vgg) {
      const auto block = make_vgg_block(ch, c);
      spec.layers.insert(spec.layers.end(), block.begin(), block.end());
      ch = c;
    } else {
      const int b1 = std::max(1, c / 4), b3 = std::max(1, c / 2), b5 = std::max(1, c / 8);
      const int pool = std::max(1, c - b1 - b3 - b5);
      spec.layers.push_back(make_inception_block(ch, b1, std::max(1, c / 4), b3, std::max(1, c / 8), b5, pool));
      spec.layers.push_back(LayerSpec::maxpool(2, 2));
      ch = b1 + b3 + b5 + pool;
    }
    side /= 2;
  }
  int features = ch;
  if (head == HeadKind::GlobalAvgPool) {
    spec.layers.push_back(LayerSpec::global_avg_pool());
  } else {
    spec.layers.push_back(LayerSpec::flatten());
    features = std::max(side, 0) * std::max(side, 0) * ch;
  }
  spec.layers.push_back(LayerSpec::dense(features, dense_width));
  spec.layers.push_back(LayerSpec::relu());
  spec.layers.push_back(LayerSpec::dense(dense_width, space.num_classes));
  return spec;
}

SearchResult random_search(const SearchSpace& space, std::size_t budget_bytes_int8, int trials,
                           const train::TrainConfig& train_budget, const data::LabeledDataset& ds,
                           std::uint64_t seed, const TrialCallback& on_trial) {
  if (trials < 1) throw ParamError("random_search: trials must be >= 1");
  space.validate();
  if (space.num_classes != ds.num_classes)
    throw ParamError("random_search: space has " + std::to_string(space.num_classes) +
                     " classes, dataset has " + std::to_string(ds.num_classes));
  train_budget.validate();

  SearchResult result;
  result.trials = trials;
  const data::SplitPlan plan = data::make_folds(ds, 5, seed);
  const std::vector<std::size_t> val = plan.members(0);
  std::vector<train::PreparedData> cache;
  Rng rng(mix_seed(seed, 3));

  for (int trial = 0; trial < trials; ++trial) {
    ModelSpec spec = sample_spec(space, rng);
    bool ok = true;
    try {
      validate(spec);
      ok = blob_format_violation(spec).empty();
    } catch (const Error&) {
      ok = false;
    }
    if (!ok) {
      ++result.unsupported;
      if (on_trial) on_trial(trial, nullptr);
      continue;
    }
    const SizeEstimate size = estimate_size(spec);
    if (size.bytes_int8 > budget_bytes_int8) {
      ++result.over_budget;
      if (on_trial) on_trial(trial, nullptr);
      continue;
    }
    auto it = std::find_if(cache.begin(), cache.end(),
                           [&](const train::PreparedData& p) { return p.input_side == spec.input_side; });
    if (it == cache.end()) {
      cache.push_back(train::prepare_inputs(ds, spec.input_side));
      it = cache.end() - 1;
    }
    const Model init = build_model(spec, mix_seed(seed, static_cast<std::uint64_t>(trial), 4));
    const train::TrainResult trained = train::train(init, *it, ds, plan, 0, train_budget);
    const auto report = train::evaluate_indices(
        [&](const nn::Tensor& x) { return train::predict(trained.model, x); }, *it, ds, val);
    result.ranked.push_back({trial, std::move(spec), report.accuracy, size});
    if (on_trial) on_trial(trial, &result.ranked.back());
  }
  std::sort(result.ranked.begin(), result.ranked.end(),
            [](const SearchCandidate& a, const SearchCandidate& b) {
              if (a.val_accuracy != b.val_accuracy) return a.val_accuracy > b.val_accuracy;
              if (a.size.bytes_int8 != b.size.bytes_int8) return a.size.bytes_int8 < b.size.bytes_int8;
              return a.trial < b.trial;
            });
  return result;
}

}  // namespace pvcrack::arch
