#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pvcrack/nn/tensor.hpp"

namespace pvcrack::data {

inline constexpr int kCellSide = 300;

enum class ModuleType : std::uint8_t { Mono, Poly };
// Expert defect probability classes 0, 1/3, 2/3, 1.
enum class RawLabel : std::uint8_t { P00, P03, P06, P10 };

const char* module_type_name(ModuleType t);
const char* raw_label_name(RawLabel l);

// Maps a labels-file probability to its class within +-0.05, else LabelError.
RawLabel raw_label_from_probability(double p);

struct CellImage {
  std::string id;  // image path relative to the dataset root
  std::vector<std::uint8_t> pixels;  // kCellSide x kCellSide, row-major
  ModuleType module_type = ModuleType::Mono;
  RawLabel raw_label = RawLabel::P00;
};

using CellImageSet = std::vector<CellImage>;

// Reads <root>/labels.csv ("<path> <probability> <mono|poly>" per line) and
// every referenced 8-bit grayscale PNG.
CellImageSet load_elpv(const std::filesystem::path& root);

// Only the labels file, without decoding images (pixels left empty).
CellImageSet load_elpv_labels(const std::filesystem::path& root);

// Decodes an 8-bit grayscale PNG; LoadError naming the path on failure.
std::vector<std::uint8_t> read_png_gray(const std::filesystem::path& path, int& width,
                                        int& height);
void write_png_gray(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                    int width, int height);

enum class VariantId : std::uint8_t { V01 = 1, V02, V03, V04, V05, V06, V07, V08 };

enum class Remap : std::uint8_t { Merge, TestOnly, Exclude };
enum class TypeFilter : std::uint8_t { All, MonoOnly, PolyOnly };
// Merge: P03->0, P06->1. FourClass: P00..P10 -> 0..3 (optional, V01-V03 only).
enum class LabelMode : std::uint8_t { Binary, FourClass };

struct DatasetVariant {
  VariantId id = VariantId::V06;
  Remap uncertain = Remap::Exclude;  // treatment of P03/P06
  TypeFilter type_filter = TypeFilter::All;
  std::vector<std::string> stratify_keys = {"module_type", "class"};
};

DatasetVariant variant(VariantId id);
VariantId parse_variant(const std::string& s);  // "06", "V06", "6"
std::string variant_name(VariantId id);

struct Sample {
  std::shared_ptr<const CellImage> image;
  int class_index = 0;
};

struct LabeledDataset {
  VariantId variant_id = VariantId::V06;
  int num_classes = 2;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;
  std::vector<Sample> forced_test;  // V04/V05 uncertain labels, merged ground truth
};

// Applies the type filter and the remap policy. Sample order is a seeded
// shuffle of the file order. ParamError when no training samples remain.
LabeledDataset build_variant(const CellImageSet& set, VariantId variant, std::uint64_t seed,
                             LabelMode mode = LabelMode::Binary);

struct SplitPlan {
  int k = 5;
  std::uint64_t seed = 0;
  std::vector<int> fold_assignment;  // one entry per LabeledDataset::samples

  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> complement(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

// Stratified on (module type x class): each stratum is shuffled and dealt
// round-robin, the deal continuing across strata so fold sizes differ by at
// most one.
SplitPlan make_folds(const LabeledDataset& ds, int k, std::uint64_t seed);

// Bilinear (antialiased triangle filter) resize to side x side, scaled to
// [0, 1]; shape (side, side, 1).
nn::Tensor preprocess(const CellImage& img, int side);

// "id<TAB>class<TAB>fold<TAB>partition" lines; forced-test samples carry
// fold -1 and partition "test", the rest partition "train".
std::string format_manifest(const LabeledDataset& ds, const SplitPlan& plan);
void write_manifest(const std::filesystem::path& path, const LabeledDataset& ds,
                    const SplitPlan& plan);

struct ManifestRow {
  std::string id;
  int class_index = 0;
  int fold = -1;
  std::string partition;
};
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

}  // namespace pvcrack::data
