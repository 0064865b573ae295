#include "pvcrack/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pvcrack::data {
namespace {

void require_square_single(const nn::Tensor& t) {
  if (t.rank() != 3 || t.dim(2) != 1 || t.dim(0) != t.dim(1))
    throw ShapeError("augment expects a square single-channel (s, s, 1) tensor, got " +
                     nn::shape_str(t.shape()));
}

}  // namespace

void AugmentPolicy::validate() const {
  if (!(rotate_degrees_max >= 0.0)) throw ParamError("augment: rotate_degrees_max must be >= 0");
  if (translate_px_max < 0) throw ParamError("augment: translate_px_max must be >= 0");
  if (!(contrast_low >= 0.0) || !(contrast_high >= contrast_low))
    throw ParamError("augment: contrast range must satisfy 0 <= low <= high");
}

AugmentPolicy AugmentPolicy::standard() {
  AugmentPolicy p;
  p.rotate_degrees_max = 15.0;
  p.translate_px_max = 8;
  p.horizontal_flip = true;
  p.vertical_flip = true;
  p.contrast_low = 0.8;
  p.contrast_high = 1.2;
  return p;
}

nn::Tensor rotate(const nn::Tensor& t, double degrees) {
  require_square_single(t);
  const int s = t.dim(0);
  const double a = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double c = (s - 1) / 2.0;
  nn::Tensor out(t.shape());
  auto px = [&](int y, int x) {
    y = std::clamp(y, 0, s - 1);
    x = std::clamp(x, 0, s - 1);
    return static_cast<double>(t[static_cast<std::size_t>(y) * s + x]);
  };
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      // Inverse map: sample the source at the point rotated by -a.
      const double dx = x - c, dy = y - c;
      const double sx = ca * dx + sa * dy + c;
      const double sy = -sa * dx + ca * dy + c;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                       fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
      out[static_cast<std::size_t>(y) * s + x] = static_cast<float>(v);
    }
  }
  return out;
}

nn::Tensor translate(const nn::Tensor& t, int dx, int dy) {
  require_square_single(t);
  const int s = t.dim(0);
  nn::Tensor out(t.shape());
  for (int y = 0; y < s; ++y) {
    const int sy = std::clamp(y - dy, 0, s - 1);
    for (int x = 0; x < s; ++x) {
      const int sx = std::clamp(x - dx, 0, s - 1);
      out[static_cast<std::size_t>(y) * s + x] = t[static_cast<std::size_t>(sy) * s + sx];
    }
  }
  return out;
}

nn::Tensor flip_horizontal(const nn::Tensor& t) {
  require_square_single(t);
  const int s = t.dim(0);
  nn::Tensor out(t.shape());
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      out[static_cast<std::size_t>(y) * s + x] = t[static_cast<std::size_t>(y) * s + (s - 1 - x)];
  return out;
}

nn::Tensor flip_vertical(const nn::Tensor& t) {
  require_square_single(t);
  const int s = t.dim(0);
  nn::Tensor out(t.shape());
  for (int y = 0; y < s; ++y)
    std::copy_n(t.data() + static_cast<std::size_t>(s - 1 - y) * s, s,
                out.data() + static_cast<std::size_t>(y) * s);
  return out;
}

nn::Tensor adjust_contrast(const nn::Tensor& t, double factor) {
  nn::Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = factor * (static_cast<double>(t[i]) - 0.5) + 0.5;
    out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

nn::Tensor augment(const nn::Tensor& t, const AugmentPolicy& policy, std::uint64_t rng_state) {
  require_square_single(t);
  policy.validate();
  Rng rng(rng_state);
  const double angle = policy.rotate_degrees_max > 0.0
                           ? rng.uniform(-policy.rotate_degrees_max, policy.rotate_degrees_max)
                           : 0.0;
  int dx = 0, dy = 0;
  if (policy.translate_px_max > 0) {
    const auto span = static_cast<std::uint64_t>(2 * policy.translate_px_max + 1);
    dx = static_cast<int>(rng.below(span)) - policy.translate_px_max;
    dy = static_cast<int>(rng.below(span)) - policy.translate_px_max;
  }
  const bool hflip = policy.horizontal_flip && rng.coin();
  const bool vflip = policy.vertical_flip && rng.coin();
  const double contrast = policy.contrast_high > policy.contrast_low
                              ? rng.uniform(policy.contrast_low, policy.contrast_high)
                              : policy.contrast_low;

  nn::Tensor out = t;
  if (angle != 0.0) out = rotate(out, angle);
  if (dx != 0 || dy != 0) out = translate(out, dx, dy);
  if (hflip) out = flip_horizontal(out);
  if (vflip) out = flip_vertical(out);
  if (contrast != 1.0) {
    out = adjust_contrast(out, contrast);
  } else {
    for (auto& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

}  // namespace pvcrack::data
