#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <unistd.h>
#include <cstdlib>

#include "pvcrack/common.hpp"
#include "pvcrack/data/elpv.hpp"

namespace fixtures {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("pvcrack_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// 300x300 cell: bright textured background; defective cells carry a dark
// diagonal band.
inline std::vector<std::uint8_t> synthetic_pixels(bool defect, std::uint64_t seed) {
  pvcrack::Rng rng(seed);
  std::vector<std::uint8_t> px(300 * 300);
  const int offset = static_cast<int>(rng.below(120));
  for (int y = 0; y < 300; ++y)
    for (int x = 0; x < 300; ++x) {
      int v = 170 + static_cast<int>(rng.below(40));
      if (defect && std::abs((x - y) - (offset - 60)) < 18) v = 30 + static_cast<int>(rng.below(20));
      px[static_cast<std::size_t>(y) * 300 + x] = static_cast<std::uint8_t>(v);
    }
  return px;
}

// n cells alternating mono/poly; classes cycle through P00, P10 (and the
// uncertain labels when with_uncertain is set).
inline pvcrack::data::CellImageSet synthetic_set(int n, bool with_uncertain = false,
                                                 std::uint64_t seed = 11) {
  using namespace pvcrack::data;
  CellImageSet set;
  for (int i = 0; i < n; ++i) {
    CellImage img;
    img.id = "images/cell" + std::to_string(i) + ".png";
    img.module_type = i % 2 == 0 ? ModuleType::Mono : ModuleType::Poly;
    const int cycle = with_uncertain ? 4 : 2;
    const int k = (i / 2) % cycle;
    if (with_uncertain) {
      img.raw_label = static_cast<RawLabel>(k);
    } else {
      img.raw_label = k == 0 ? RawLabel::P00 : RawLabel::P10;
    }
    const bool defect = img.raw_label == RawLabel::P10 || img.raw_label == RawLabel::P06;
    img.pixels = synthetic_pixels(defect, seed * 1000 + static_cast<std::uint64_t>(i));
    set.push_back(std::move(img));
  }
  return set;
}

// Writes set to root in the ELPV layout.
inline void write_elpv(const fs::path& root, const pvcrack::data::CellImageSet& set) {
  using namespace pvcrack::data;
  fs::create_directories(root / "images");
  std::ofstream labels(root / "labels.csv");
  const char* probs[] = {"0.0", "0.3333333333333333", "0.6666666666666666", "1.0"};
  for (const auto& img : set) {
    write_png_gray(root / img.id, img.pixels, 300, 300);
    labels << img.id << " " << probs[static_cast<int>(img.raw_label)] << " "
           << (img.module_type == ModuleType::Mono ? "mono" : "poly") << "\n";
  }
}

inline std::string real_data_root() {
  const char* env = std::getenv("PVCRACK_DATA");
  if (env && *env && fs::exists(fs::path(env) / "labels.csv")) return env;
#ifdef PVCRACK_TEST_DATA
  if (fs::exists(fs::path(PVCRACK_TEST_DATA) / "labels.csv")) return PVCRACK_TEST_DATA;
#endif
  return "";
}

}  // namespace fixtures
