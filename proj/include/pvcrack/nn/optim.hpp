#pragma once

#include <span>
#include <string>
#include <vector>

#include "pvcrack/nn/tensor.hpp"

namespace pvcrack::nn {

enum class OptimKind { SGD, Adam };

struct OptimConfig {
  OptimKind kind = OptimKind::Adam;
  double learning_rate = 1e-3;
  double momentum = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double epsilon = 1e-7;

  // Throws ParamError on an out-of-range field.
  void validate() const;
};

std::string optim_kind_name(OptimKind k);
OptimKind parse_optim_kind(const std::string& s);

// Holds per-parameter state (momentum buffers, Adam moments).
//   SGD:  v <- momentum*v + g;  p <- p - lr*v
//   Adam: bias-corrected first/second moments, p <- p - lr*m_hat/(sqrt(v_hat)+eps)
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimConfig cfg);

  // Updates params[i] for i >= first_trainable; earlier tensors are never
  // written.
  void step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads,
            std::size_t first_trainable = 0);

  long steps() const { return t_; }
  const OptimConfig& config() const { return cfg_; }

 private:
  OptimConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace pvcrack::nn
