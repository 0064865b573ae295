#pragma once

#include <cstdint>
#include <span>

#include "pvcrack/nn/tensor.hpp"

namespace pvcrack::nn {

// Resamples an 8-bit single-channel image to side x side with a triangle
// (bilinear) filter whose support widens with the downscale factor, then
// divides by 255. Output shape (side, side, 1), values in [0, 1]. A same-size
// resize is an exact copy.
Tensor resize_to_unit(std::span<const std::uint8_t> pixels, int height, int width, int side);

}  // namespace pvcrack::nn
