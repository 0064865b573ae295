#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pvcrack/arch/model.hpp"
#include "pvcrack/data/elpv.hpp"
#include "pvcrack/train/train.hpp"

namespace pvcrack::arch {

enum class BlockKind { Vgg, Inception };
enum class HeadKind { GlobalAvgPool, Flatten };

const char* block_kind_name(BlockKind k);
const char* head_kind_name(HeadKind k);

struct SearchSpace {
  int min_blocks = 1;
  int max_blocks = 3;
  std::vector<BlockKind> block_kinds = {BlockKind::Vgg, BlockKind::Inception};
  std::vector<int> channel_choices = {4, 8, 16, 32};
  std::vector<HeadKind> heads = {HeadKind::GlobalAvgPool, HeadKind::Flatten};
  std::vector<int> dense_widths = {16, 32};
  std::vector<int> input_sides = {64, 96};
  int num_classes = 2;

  // ParamError on an empty or out-of-range choice list.
  void validate() const;
};

// One candidate per draw: block count, then kind and width per block, head,
// dense width and input side, all uniform. A VGG block of width c is
// make_vgg_block(in, c). An Inception block of width c has branches
// c/4 | c/4 -> c/2 | c/8 -> c/8 | pool -> rest (each at least 1) and is
// followed by a 2x2 max pool.
ModelSpec sample_spec(const SearchSpace& space, Rng& rng);

struct SearchCandidate {
  int trial = 0;
  ModelSpec spec;
  double val_accuracy = 0.0;
  SizeEstimate size;
};

struct SearchResult {
  std::vector<SearchCandidate> ranked;  // accuracy desc, then int8 bytes asc, then trial
  int trials = 0;
  int over_budget = 0;  // discarded before training
  int unsupported = 0;  // spec does not fit the blob format or fails shape checks
  bool feasible() const { return !ranked.empty(); }
  std::string status() const { return feasible() ? "ok" : "no feasible architecture"; }
};

using TrialCallback = std::function<void(int trial, const SearchCandidate* trained)>;

// Samples `trials` specs, drops those whose int8 blob exceeds the budget,
// trains survivors with train_budget on fold 0 of a seeded 5-fold split and
// ranks them by validation accuracy.
SearchResult random_search(const SearchSpace& space, std::size_t budget_bytes_int8, int trials,
                           const train::TrainConfig& train_budget, const data::LabeledDataset& ds,
                           std::uint64_t seed, const TrialCallback& on_trial = {});

}  // namespace pvcrack::arch
