#include "pvcrack/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pvcrack/nn/layers.hpp"

namespace pvcrack::nn {
namespace {

double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

// Objective difference sum_i r_i (hi_i - lo_i), taken elementwise before
// summing to limit cancellation.
double projected_diff(const TensorD& hi, const TensorD& lo, const TensorD& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += r[i] * (hi[i] - lo[i]);
  return acc;
}

}  // namespace

GradCheckResult grad_check(std::span<const LayerSpec> layers, std::span<const TensorD> params,
                           const TensorD& input, double eps, std::uint64_t seed) {
  std::vector<TensorD> p(params.begin(), params.end());
  std::vector<NodeTrace<double>> trace;
  const TensorD out = forward<double>(layers, p, input, &trace);

  Rng rng(seed);
  TensorD r(out.shape());
  for (auto& v : r.values()) v = rng.uniform(-1.0, 1.0);

  std::vector<TensorD> grads;
  for (const auto& t : p) grads.emplace_back(t.shape());
  TensorD input_grad;
  backward<double>(layers, p, input, trace, r, grads, &input_grad);

  GradCheckResult res;
  auto probe = [&](double& slot, double analytic, auto&& eval) {
    const double saved = slot;
    slot = saved + eps;
    const TensorD hi = eval();
    slot = saved - eps;
    const TensorD lo = eval();
    slot = saved;
    const double numeric = projected_diff(hi, lo, r) / (2.0 * eps);
    res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic, numeric));
    ++res.entries;
  };

  for (std::size_t t = 0; t < p.size(); ++t)
    for (std::size_t i = 0; i < p[t].size(); ++i)
      probe(p[t][i], grads[t][i], [&] { return forward<double>(layers, p, input); });

  TensorD x = input;
  for (std::size_t i = 0; i < x.size(); ++i)
    probe(x[i], input_grad[i], [&] { return forward<double>(layers, p, x); });
  return res;
}

GradCheckResult grad_check_cross_entropy(const TensorD& logits, int target, double eps) {
  const auto analytic = cross_entropy(logits, target).logit_grad;
  GradCheckResult res;
  TensorD x = logits;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double hi = cross_entropy(x, target).loss;
    x[i] = saved - eps;
    const double lo = cross_entropy(x, target).loss;
    x[i] = saved;
    res.max_rel_error =
        std::max(res.max_rel_error, rel_error(analytic[i], (hi - lo) / (2.0 * eps)));
    ++res.entries;
  }
  return res;
}

}  // namespace pvcrack::nn
