#pragma once

#include <cstdint>
#include <span>

#include "pvcrack/nn/network.hpp"

namespace pvcrack::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;  // parameter + input coordinates compared
};

// Compares backward() against central differences (f(x+eps)-f(x-eps))/(2 eps)
// for every parameter and input coordinate of a layer sequence. The scalar
// objective is a fixed random projection sum(r .* output) drawn from seed.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
// Callers pick points away from ReLU kinks and max-pool ties.
GradCheckResult grad_check(std::span<const LayerSpec> layers, std::span<const TensorD> params,
                           const TensorD& input, double eps, std::uint64_t seed = 1);

// Same check for cross_entropy's logit gradient.
GradCheckResult grad_check_cross_entropy(const TensorD& logits, int target, double eps);

}  // namespace pvcrack::nn
