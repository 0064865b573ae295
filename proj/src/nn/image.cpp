#include "pvcrack/nn/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pvcrack::nn {
namespace {

struct Taps {
  std::vector<int> first;
  std::vector<int> count;
  std::vector<double> weights;  // count[i] entries per output, packed
  std::vector<int> offset;
};

Taps make_taps(int in, int out) {
  const double scale = static_cast<double>(in) / out;
  const double support = std::max(scale, 1.0);
  Taps t;
  for (int i = 0; i < out; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(center - support)));
    const int hi = std::min(in, static_cast<int>(std::ceil(center + support)));
    t.first.push_back(lo);
    t.offset.push_back(static_cast<int>(t.weights.size()));
    double total = 0.0;
    int n = 0;
    for (int j = lo; j < hi; ++j) {
      const double d = std::abs((j + 0.5 - center) / support);
      const double w = d < 1.0 ? 1.0 - d : 0.0;
      t.weights.push_back(w);
      total += w;
      ++n;
    }
    for (int k = 0; k < n; ++k) t.weights[static_cast<std::size_t>(t.offset.back() + k)] /= total;
    t.count.push_back(n);
  }
  return t;
}

}  // namespace

Tensor resize_to_unit(std::span<const std::uint8_t> pixels, int height, int width, int side) {
  if (height < 1 || width < 1 || side < 1) throw ShapeError("resize: extents must be >= 1");
  if (pixels.size() != static_cast<std::size_t>(height) * width)
    throw ShapeError("resize: pixel buffer does not match extents");
  Tensor out({side, side, 1});
  if (height == side && width == side) {
    for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = static_cast<float>(pixels[i]) / 255.0f;
    return out;
  }
  const Taps tx = make_taps(width, side);
  const Taps ty = make_taps(height, side);
  std::vector<double> rows(static_cast<std::size_t>(height) * side);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      const auto* w = &tx.weights[static_cast<std::size_t>(tx.offset[x])];
      const std::uint8_t* src = pixels.data() + static_cast<std::size_t>(y) * width + tx.first[x];
      for (int k = 0; k < tx.count[x]; ++k) acc += w[k] * src[k];
      rows[static_cast<std::size_t>(y) * side + x] = acc;
    }
  }
  for (int y = 0; y < side; ++y) {
    const auto* w = &ty.weights[static_cast<std::size_t>(ty.offset[y])];
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int k = 0; k < ty.count[y]; ++k)
        acc += w[k] * rows[static_cast<std::size_t>(ty.first[y] + k) * side + x];
      const double v = std::clamp(acc / 255.0, 0.0, 1.0);
      out[static_cast<std::size_t>(y) * side + x] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace pvcrack::nn
