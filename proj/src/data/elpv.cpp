#include "pvcrack/data/elpv.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pvcrack/nn/image.hpp"

namespace pvcrack::data {

const char* module_type_name(ModuleType t) { return t == ModuleType::Mono ? "mono" : "poly"; }

const char* raw_label_name(RawLabel l) {
  switch (l) {
    case RawLabel::P00: return "P00";
    case RawLabel::P03: return "P03";
    case RawLabel::P06: return "P06";
    case RawLabel::P10: return "P10";
  }
  return "?";
}

RawLabel raw_label_from_probability(double p) {
  constexpr double kTolerance = 0.05;
  constexpr std::array<double, 4> kCenters = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  for (std::size_t i = 0; i < kCenters.size(); ++i)
    if (std::abs(p - kCenters[i]) <= kTolerance) return static_cast<RawLabel>(i);
  std::ostringstream os;
  os << "defect probability " << p << " is not within 0.05 of 0, 1/3, 2/3 or 1";
  throw LabelError(os.str());
}

std::vector<std::uint8_t> read_png_gray(const std::filesystem::path& path, int& width,
                                        int& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw LoadError("cannot decode image " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw LoadError("cannot decode image " + path.string() + ": " + msg);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buf;
}

void write_png_gray(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                    int width, int height) {
  if (pixels.size() != static_cast<std::size_t>(width) * height)
    throw ShapeError("write_png_gray: buffer does not match extents");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr))
    throw LoadError("cannot write image " + path.string() + ": " + image.message);
}

CellImageSet load_elpv_labels(const std::filesystem::path& root) {
  const auto labels = root / "labels.csv";
  std::ifstream in(labels);
  if (!in) throw LoadError("cannot open labels file " + labels.string());
  CellImageSet set;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream ls(line);
    std::string path, prob, type;
    if (!(ls >> path)) continue;
    const std::string where = labels.string() + ":" + std::to_string(number);
    if (!(ls >> prob >> type)) throw LabelError(where + ": expected '<path> <probability> <type>'");
    CellImage img;
    img.id = path;
    double p = 0.0;
    try {
      std::size_t used = 0;
      p = std::stod(prob, &used);
      if (used != prob.size()) throw std::invalid_argument(prob);
    } catch (const std::exception&) {
      throw LabelError(where + ": probability '" + prob + "' is not a number");
    }
    try {
      img.raw_label = raw_label_from_probability(p);
    } catch (const LabelError& e) {
      throw LabelError(where + ": " + e.what());
    }
    std::transform(type.begin(), type.end(), type.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (type == "mono")
      img.module_type = ModuleType::Mono;
    else if (type == "poly")
      img.module_type = ModuleType::Poly;
    else
      throw LabelError(where + ": unknown module type '" + type + "'");
    set.push_back(std::move(img));
  }
  return set;
}

CellImageSet load_elpv(const std::filesystem::path& root) {
  CellImageSet set = load_elpv_labels(root);
  for (auto& img : set) {
    int w = 0, h = 0;
    img.pixels = read_png_gray(root / img.id, w, h);
    if (w != kCellSide || h != kCellSide)
      throw LoadError("image " + (root / img.id).string() + " is " + std::to_string(w) + "x" +
                      std::to_string(h) + ", expected 300x300");
  }
  return set;
}

DatasetVariant variant(VariantId id) {
  DatasetVariant v;
  v.id = id;
  const int n = static_cast<int>(id);
  if (n < 1 || n > 8) throw ParamError("unknown dataset variant");
  v.uncertain = n <= 3 ? Remap::Merge : n <= 5 ? Remap::TestOnly : Remap::Exclude;
  switch (n) {
    case 1:
    case 6: v.type_filter = TypeFilter::All; break;
    case 2:
    case 4:
    case 7: v.type_filter = TypeFilter::MonoOnly; break;
    default: v.type_filter = TypeFilter::PolyOnly; break;
  }
  return v;
}

VariantId parse_variant(const std::string& s) {
  std::string digits = s;
  if (!digits.empty() && (digits[0] == 'V' || digits[0] == 'v')) digits.erase(0, 1);
  int n = 0;
  try {
    std::size_t used = 0;
    n = std::stoi(digits, &used);
    if (used != digits.size()) n = 0;
  } catch (const std::exception&) {
    n = 0;
  }
  if (n < 1 || n > 8) throw ParamError("unknown dataset variant '" + s + "' (01..08)");
  return static_cast<VariantId>(n);
}

std::string variant_name(VariantId id) {
  const int n = static_cast<int>(id);
  return std::string("V0") + static_cast<char>('0' + n);
}

LabeledDataset build_variant(const CellImageSet& set, VariantId id, std::uint64_t seed,
                             LabelMode mode) {
  if (set.empty()) throw ParamError("build_variant: empty image set");
  const DatasetVariant v = variant(id);
  if (mode == LabelMode::FourClass && v.uncertain != Remap::Merge)
    throw ParamError("four-class labels are only defined for variants 01-03");

  LabeledDataset ds;
  ds.variant_id = id;
  ds.seed = seed;
  ds.num_classes = mode == LabelMode::FourClass ? 4 : 2;
  for (const auto& img : set) {
    if (v.type_filter == TypeFilter::MonoOnly && img.module_type != ModuleType::Mono) continue;
    if (v.type_filter == TypeFilter::PolyOnly && img.module_type != ModuleType::Poly) continue;
    const bool uncertain = img.raw_label == RawLabel::P03 || img.raw_label == RawLabel::P06;
    const int merged = (img.raw_label == RawLabel::P00 || img.raw_label == RawLabel::P03) ? 0 : 1;
    auto ref = std::make_shared<const CellImage>(img);
    if (uncertain && v.uncertain == Remap::Exclude) continue;
    if (uncertain && v.uncertain == Remap::TestOnly) {
      ds.forced_test.push_back({ref, merged});
      continue;
    }
    const int cls = mode == LabelMode::FourClass ? static_cast<int>(img.raw_label) : merged;
    ds.samples.push_back({ref, cls});
  }
  if (ds.samples.empty())
    throw ParamError("variant " + variant_name(id) + " yields no training samples");

  Rng rng(seed);
  for (std::size_t i = ds.samples.size(); i > 1; --i)
    std::swap(ds.samples[i - 1], ds.samples[rng.below(i)]);
  return ds;
}

std::vector<std::size_t> SplitPlan::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_assignment.size(); ++i)
    if (fold_assignment[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> SplitPlan::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_assignment.size(); ++i)
    if (fold_assignment[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> SplitPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int f : fold_assignment) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

SplitPlan make_folds(const LabeledDataset& ds, int k, std::uint64_t seed) {
  if (k < 2) throw ParamError("make_folds: k must be >= 2, got " + std::to_string(k));
  const int types = 2;
  std::vector<std::vector<std::size_t>> strata(static_cast<std::size_t>(types * ds.num_classes));
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.class_index < 0 || s.class_index >= ds.num_classes)
      throw ParamError("make_folds: class index out of range");
    const int t = s.image->module_type == ModuleType::Mono ? 0 : 1;
    strata[static_cast<std::size_t>(t * ds.num_classes + s.class_index)].push_back(i);
  }
  SplitPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_assignment.assign(ds.samples.size(), -1);
  Rng rng(seed);
  std::size_t deal = 0;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto& members = strata[s];
    if (members.empty()) continue;
    if (members.size() < static_cast<std::size_t>(k))
      throw ParamError("make_folds: stratum (" + std::string(s / ds.num_classes ? "poly" : "mono") +
                       ", class " + std::to_string(s % ds.num_classes) + ") has " +
                       std::to_string(members.size()) + " samples, fewer than k=" +
                       std::to_string(k));
    for (std::size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[rng.below(i)]);
    for (std::size_t idx : members)
      plan.fold_assignment[idx] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
  }
  return plan;
}

nn::Tensor preprocess(const CellImage& img, int side) {
  if (side < 8) throw ParamError("preprocess: side must be >= 8");
  return nn::resize_to_unit(img.pixels, kCellSide, kCellSide, side);
}

std::string format_manifest(const LabeledDataset& ds, const SplitPlan& plan) {
  if (plan.fold_assignment.size() != ds.samples.size())
    throw ParamError("manifest: split plan does not match dataset");
  std::ostringstream os;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    os << ds.samples[i].image->id << '\t' << ds.samples[i].class_index << '\t'
       << plan.fold_assignment[i] << "\ttrain\n";
  for (const auto& s : ds.forced_test) os << s.image->id << '\t' << s.class_index << "\t-1\ttest\n";
  return os.str();
}

void write_manifest(const std::filesystem::path& path, const LabeledDataset& ds,
                    const SplitPlan& plan) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write manifest " + path.string());
  out << format_manifest(ds, plan);
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, cls, fold, part;
    if (!std::getline(ls, id, '\t') || !std::getline(ls, cls, '\t') ||
        !std::getline(ls, fold, '\t') || !std::getline(ls, part))
      throw LoadError(path.string() + ":" + std::to_string(number) + ": expected 4 tab-separated fields");
    try {
      rows.push_back({id, std::stoi(cls), std::stoi(fold), part});
    } catch (const std::exception&) {
      throw LoadError(path.string() + ":" + std::to_string(number) + ": malformed integer field");
    }
  }
  return rows;
}

}  // namespace pvcrack::data
