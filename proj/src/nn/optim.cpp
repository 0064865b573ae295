#include "pvcrack/nn/optim.hpp"

#include <cmath>

namespace pvcrack::nn {

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ParamError("optimizer: learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParamError("optimizer: momentum must be in [0,1)");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
    throw ParamError("optimizer: adam betas must be in (0,1)");
  if (!(epsilon > 0.0)) throw ParamError("optimizer: epsilon must be > 0");
}

std::string optim_kind_name(OptimKind k) { return k == OptimKind::SGD ? "sgd" : "adam"; }

OptimKind parse_optim_kind(const std::string& s) {
  if (s == "sgd" || s == "SGD") return OptimKind::SGD;
  if (s == "adam" || s == "Adam") return OptimKind::Adam;
  throw ParamError("unknown optimizer '" + s + "'");
}

template <typename T>
Optimizer<T>::Optimizer(OptimConfig cfg) : cfg_(cfg) {
  cfg_.validate();
}

template <typename T>
void Optimizer<T>::step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads,
                        std::size_t first_trainable) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape() != grads[i].shape())
      throw ShapeError("optimizer: gradient " + std::to_string(i) + " has shape " +
                       shape_str(grads[i].shape()) + ", parameter has " +
                       shape_str(params[i].shape()));
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].size(), T{0});
      if (cfg_.kind == OptimKind::Adam) v_[i].assign(params[i].size(), T{0});
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("optimizer: parameter count changed between steps");
  }
  ++t_;

  const T lr = static_cast<T>(cfg_.learning_rate);
  if (cfg_.kind == OptimKind::SGD) {
    const T mu = static_cast<T>(cfg_.momentum);
    for (std::size_t i = first_trainable; i < params.size(); ++i) {
      auto& p = params[i];
      const auto& g = grads[i];
      auto& v = m_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = mu * v[j] + g[j];
        p[j] -= lr * v[j];
      }
    }
    return;
  }

  const T b1 = static_cast<T>(cfg_.adam_beta1);
  const T b2 = static_cast<T>(cfg_.adam_beta2);
  const T eps = static_cast<T>(cfg_.epsilon);
  const T c1 = T{1} - static_cast<T>(std::pow(cfg_.adam_beta1, static_cast<double>(t_)));
  const T c2 = T{1} - static_cast<T>(std::pow(cfg_.adam_beta2, static_cast<double>(t_)));
  for (std::size_t i = first_trainable; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const T mhat = m[j] / c1;
      const T vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace pvcrack::nn
