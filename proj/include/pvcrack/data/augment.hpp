#pragma once

#include <cstdint>

#include "pvcrack/nn/tensor.hpp"

namespace pvcrack::data {

struct AugmentPolicy {
  double rotate_degrees_max = 0.0;
  int translate_px_max = 0;
  bool horizontal_flip = false;
  bool vertical_flip = false;
  double contrast_low = 1.0;
  double contrast_high = 1.0;

  bool is_identity() const {
    return rotate_degrees_max == 0.0 && translate_px_max == 0 && !horizontal_flip &&
           !vertical_flip && contrast_low == 1.0 && contrast_high == 1.0;
  }
  void validate() const;

  // Rotation 15 deg, translation 8 px, both flips, contrast [0.8, 1.2].
  static AugmentPolicy standard();
};

// Rotation, translation, flips, contrast c*(x-0.5)+0.5, clamp to [0,1], in
// that order, with draws taken from rng_state. Input must be (s, s, 1).
nn::Tensor augment(const nn::Tensor& t, const AugmentPolicy& policy, std::uint64_t rng_state);

// Building blocks; rotation and translation replicate edge pixels.
nn::Tensor rotate(const nn::Tensor& t, double degrees);
nn::Tensor translate(const nn::Tensor& t, int dx, int dy);
nn::Tensor flip_horizontal(const nn::Tensor& t);
nn::Tensor flip_vertical(const nn::Tensor& t);
nn::Tensor adjust_contrast(const nn::Tensor& t, double factor);

}  // namespace pvcrack::data
