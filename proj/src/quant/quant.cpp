#include "pvcrack/quant/quant.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pvcrack/nn/layers.hpp"

namespace pvcrack::quant {

using nn::LayerOp;
using nn::LayerSpec;

std::int32_t round_saturate(double v, std::int32_t lo, std::int32_t hi) {
  if (std::isnan(v)) return 0;
  const double r = std::round(v);  // half away from zero
  if (r <= static_cast<double>(lo)) return lo;
  if (r >= static_cast<double>(hi)) return hi;
  return static_cast<std::int32_t>(r);
}

QuantParams choose_activation_params(float lo, float hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi)
    throw QuantError("degenerate activation range [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "]");
  lo = std::min(lo, 0.0f);
  hi = std::max(hi, 0.0f);
  if (lo == 0.0f && hi == 0.0f) hi = 1e-5f;
  QuantParams p;
  p.scale = static_cast<float>((static_cast<double>(hi) - lo) / 255.0);
  if (!(p.scale > 0.0f) || !std::isfinite(p.scale))
    throw QuantError("degenerate activation scale for range [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "]");
  p.zero_point = round_saturate(-128.0 - static_cast<double>(lo) / p.scale, -128, 127);
  return p;
}

std::int8_t quantize_value(float r, QuantParams p) {
  return static_cast<std::int8_t>(
      round_saturate(static_cast<double>(r) / p.scale + p.zero_point, -128, 127));
}

float dequantize_value(std::int32_t q, QuantParams p) {
  return p.scale * static_cast<float>(q - p.zero_point);
}

Requant make_requant(double real) {
  if (!(real > 0.0) || !(real < 1.0) || !std::isfinite(real))
    throw QuantError("requantization multiplier " + std::to_string(real) +
                     " outside (0, 1)");
  int exp = 0;
  const double m = std::frexp(real, &exp);  // real = m * 2^exp, m in [0.5, 1)
  auto q = static_cast<std::int64_t>(std::round(m * 2147483648.0));
  if (q == (std::int64_t{1} << 31)) {
    q /= 2;
    ++exp;
  }
  Requant r;
  r.multiplier = static_cast<std::int32_t>(q);
  r.shift = static_cast<std::uint8_t>(std::min(-exp, 63));
  return r;
}

std::int32_t apply_requant(std::int32_t acc, Requant r) {
  const int total = 31 + r.shift;
  if (total > 62) return 0;
  const std::int64_t p = static_cast<std::int64_t>(acc) * r.multiplier;
  const std::int64_t mag = p < 0 ? -p : p;
  const std::int64_t rounded = (mag + (std::int64_t{1} << (total - 1))) >> total;
  return static_cast<std::int32_t>(p < 0 ? -rounded : rounded);
}

// ---------------------------------------------------------------- calibration

ActivationRanges calibrate(const arch::Model& model, const std::vector<nn::Tensor>& calib,
                           double sample_quantile) {
  if (calib.empty()) throw QuantError("calibrate: empty calibration set");
  if (!(sample_quantile > 0.0 && sample_quantile <= 1.0))
    throw QuantError("calibrate: sample quantile must be in (0, 1]");
  const auto nodes = static_cast<std::size_t>(nn::count_nodes(model.spec.layers));
  std::vector<std::vector<float>> lows(nodes), highs(nodes);
  nn::ActivationObserver<float> obs = [&](int id, const nn::Tensor& t) {
    const auto i = static_cast<std::size_t>(id);
    if (t.empty()) return;
    const auto [lo, hi] = std::minmax_element(t.values().begin(), t.values().end());
    lows.at(i).push_back(*lo);
    highs.at(i).push_back(*hi);
  };
  std::vector<nn::NodeTrace<float>> trace;
  for (const auto& x : calib) nn::forward<float>(model.spec.layers, model.params, x, &trace, &obs);

  ActivationRanges r;
  r.nodes.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    auto& lo = lows[i];
    auto& hi = highs[i];
    Range& n = r.nodes[i];
    n.count = static_cast<long>(hi.size());
    if (hi.empty()) continue;
    const std::size_t m = hi.size();
    const auto rank = static_cast<std::size_t>(std::ceil(sample_quantile * static_cast<double>(m)));
    const std::size_t k = std::min(m, std::max<std::size_t>(rank, 1)) - 1;
    std::nth_element(hi.begin(), hi.begin() + static_cast<std::ptrdiff_t>(k), hi.end());
    std::nth_element(lo.begin(), lo.begin() + static_cast<std::ptrdiff_t>(m - 1 - k), lo.end());
    n.max = std::max(0.0f, hi[k]);
    n.min = std::min(0.0f, lo[m - 1 - k]);
  }
  return r;
}

ActivationRanges merge_ranges(const ActivationRanges& a, const ActivationRanges& b) {
  if (a.nodes.size() != b.nodes.size())
    throw QuantError("merge_ranges: node counts differ");
  ActivationRanges out = a;
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    out.nodes[i].min = std::min(a.nodes[i].min, b.nodes[i].min);
    out.nodes[i].max = std::max(a.nodes[i].max, b.nodes[i].max);
    out.nodes[i].count = a.nodes[i].count + b.nodes[i].count;
  }
  return out;
}

double range_coverage(const arch::Model& model, const ActivationRanges& ranges,
                      const std::vector<nn::Tensor>& samples) {
  long inside = 0, total = 0;
  nn::ActivationObserver<float> obs = [&](int id, const nn::Tensor& t) {
    const Range& n = ranges.nodes.at(static_cast<std::size_t>(id));
    for (float v : t.values()) {
      inside += (v >= n.min && v <= n.max) ? 1 : 0;
      ++total;
    }
  };
  std::vector<nn::NodeTrace<float>> trace;
  for (const auto& x : samples)
    nn::forward<float>(model.spec.layers, model.params, x, &trace, &obs);
  return total > 0 ? static_cast<double>(inside) / static_cast<double>(total) : 1.0;
}

// ---------------------------------------------------------------- int8

namespace {

constexpr double kMaxReal = 1.0 - 1.0 / (1 << 20);

// Grid over lo..hi whose scale is at least min_scale.
QuantParams params_with_min_scale(const Range& r, double min_scale) {
  QuantParams p = choose_activation_params(r.min, r.max);
  float lo = std::min(r.min, 0.0f);
  for (int i = 0; i < 8 && static_cast<double>(p.scale) < min_scale; ++i) {
    const double hi = lo + 255.0 * min_scale * (1.0 + 1e-6 * (1 << i));
    p = choose_activation_params(lo, static_cast<float>(hi));
  }
  if (static_cast<double>(p.scale) < min_scale)
    throw QuantError("cannot widen activation grid to scale " + std::to_string(min_scale));
  return p;
}

struct Builder {
  const arch::Model& model;
  const ActivationRanges& ranges;
  int node = 0;
  std::size_t param = 0;

  const Range& range(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= ranges.nodes.size())
      throw QuantError("activation ranges do not cover node " + std::to_string(id));
    return ranges.nodes[static_cast<std::size_t>(id)];
  }

  void quantize_weights(QLayer& q) {
    const nn::Tensor& w = model.params.at(param);
    float maxabs = 0.0f;
    for (float v : w.values()) maxabs = std::max(maxabs, std::fabs(v));
    q.weight_scale = maxabs > 0.0f ? maxabs / 127.0f : 1.0f;
    q.weights.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      q.weights[i] = static_cast<std::int8_t>(
          round_saturate(static_cast<double>(w[i]) / q.weight_scale, -127, 127));
  }

  void quantize_bias(QLayer& q, QuantParams in) {
    const nn::Tensor& b = model.params.at(param + 1);
    const double s = static_cast<double>(in.scale) * q.weight_scale;
    q.bias.resize(b.size());
    for (std::size_t i = 0; i < b.size(); ++i)
      q.bias[i] = round_saturate(static_cast<double>(b[i]) / s,
                                 std::numeric_limits<std::int32_t>::min(),
                                 std::numeric_limits<std::int32_t>::max());
  }

  // target: grid the sequence must end on (Inception branches); when a
  // branch-final layer needs a coarser grid, needed_scale records it.
  std::vector<QLayer> build(std::span<const LayerSpec> layers, QuantParams in, nn::Shape shape,
                            const QuantParams* target, double* needed_scale,
                            QuantParams& out_params) {
    std::vector<QLayer> out;
    QuantParams cur = in;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      QLayer q;
      q.spec = l;
      q.spec.branches.clear();
      const nn::Shape next_shape = nn::infer_shape(l, shape);
      const int id = node;
      switch (l.op) {
        case LayerOp::Conv:
        case LayerOp::Dense: {
          quantize_weights(q);
          quantize_bias(q, cur);
          const bool fused = i + 1 < layers.size() && layers[i + 1].op == LayerOp::ReLU;
          const bool final = target && (i + 1 == layers.size() || (fused && i + 2 == layers.size()));
          const double base = static_cast<double>(cur.scale) * q.weight_scale;
          if (final) {
            q.output = *target;
            if (base / q.output.scale >= kMaxReal) {
              *needed_scale = std::max(*needed_scale, base / kMaxReal);
              q.output.scale = static_cast<float>(base / kMaxReal * 2.0);  // placeholder, rebuilt
            }
          } else {
            q.output = params_with_min_scale(range(fused ? id + 1 : id), base / kMaxReal);
          }
          q.requant = make_requant(base / q.output.scale);
          param += 2;
          ++node;
          break;
        }
        case LayerOp::ReLU:
        case LayerOp::MaxPool:
        case LayerOp::Flatten:
          q.output = cur;
          ++node;
          break;
        case LayerOp::GlobalAvgPool: {
          const double n = static_cast<double>(shape[0]) * shape[1];
          const double base = static_cast<double>(cur.scale) / n;
          q.output = target && i + 1 == layers.size()
                         ? *target
                         : params_with_min_scale(range(id), base / kMaxReal);
          q.requant = make_requant(base / q.output.scale);
          ++node;
          break;
        }
        case LayerOp::InceptionConcat: {
          const int start_node = node;
          const std::size_t start_param = param;
          const Range concat_range = [&] {
            int inner = 0;
            for (const auto& b : l.branches) inner += nn::count_nodes(b);
            return range(start_node + inner);
          }();
          QuantParams concat = choose_activation_params(concat_range.min, concat_range.max);
          for (int attempt = 0;; ++attempt) {
            node = start_node;
            param = start_param;
            q.branches.clear();
            double needed = 0.0;
            bool on_grid = true;
            for (const auto& b : l.branches) {
              QuantParams bout;
              q.branches.push_back(build(b, cur, shape, &concat, &needed, bout));
              on_grid = on_grid && bout == concat;
            }
            if (needed <= concat.scale) {
              if (!on_grid)
                throw QuantError(
                    "inception branch must end in conv (optionally followed by relu) for int8");
              break;
            }
            if (attempt > 4) throw QuantError("inception grid widening did not converge");
            concat = params_with_min_scale(concat_range, needed);
          }
          q.output = concat;
          ++node;
          break;
        }
      }
      cur = q.output;
      shape = next_shape;
      out.push_back(std::move(q));
    }
    out_params = cur;
    return out;
  }
};

}  // namespace

QModel quantize_int8(const arch::Model& model, const ActivationRanges& ranges) {
  arch::validate(model.spec);
  if (ranges.nodes.size() != static_cast<std::size_t>(nn::count_nodes(model.spec.layers)))
    throw QuantError("activation ranges cover " + std::to_string(ranges.nodes.size()) +
                     " nodes, model has " +
                     std::to_string(nn::count_nodes(model.spec.layers)));
  if (model.params.size() != nn::param_shapes(model.spec.layers).size())
    throw QuantError("model parameter count does not match its spec");
  QModel qm;
  qm.spec = model.spec;
  Builder b{model, ranges};
  QuantParams out;
  qm.layers = b.build(model.spec.layers, qm.input, model.spec.input_shape(), nullptr, nullptr, out);
  return qm;
}

// ---------------------------------------------------------------- fp16

std::uint16_t float_to_half(float v, bool* saturated) {
  constexpr float kMax = 65504.0f;
  bool sat = false;
  if (v > kMax) {
    v = kMax;
    sat = true;
  } else if (v < -kMax) {
    v = -kMax;
    sat = true;
  }
  if (saturated) *saturated = sat;
  return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(v));
}

float half_to_float(std::uint16_t h) {
  return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(h));
}

HModel quantize_fp16(const arch::Model& model) {
  HModel hm;
  hm.spec = model.spec;
  for (const auto& p : model.params) {
    std::vector<std::uint16_t> h(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      bool sat = false;
      h[i] = float_to_half(p[i], &sat);
      hm.saturated += sat ? 1 : 0;
    }
    hm.params.push_back(std::move(h));
  }
  return hm;
}

arch::Model dequantize_fp16(const HModel& hm) {
  arch::Model m;
  m.spec = hm.spec;
  const auto shapes = nn::param_shapes(hm.spec.layers);
  if (shapes.size() != hm.params.size())
    throw QuantError("fp16 model parameter count does not match its spec");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    nn::Tensor t(shapes[i]);
    if (t.size() != hm.params[i].size()) throw QuantError("fp16 parameter length mismatch");
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = half_to_float(hm.params[i][j]);
    m.params.push_back(std::move(t));
  }
  return m;
}

// ---------------------------------------------------------------- simulation

namespace {

struct QTensor {
  nn::Shape shape;
  std::vector<std::int8_t> data;
};

std::int8_t clamp8(std::int64_t v) {
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, -128, 127));
}

std::int32_t sat32(std::int64_t v) {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(
      v, std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::max()));
}

struct Sim {
  bool keep;
  std::vector<std::vector<std::int8_t>>* acts;

  void record(const QTensor& t) {
    if (keep) acts->push_back(t.data);
  }

  QTensor conv(const QLayer& q, const QTensor& x, QuantParams in) {
    const LayerSpec& l = q.spec;
    const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
    const int k = l.kernel, oc = l.out_ch;
    const int oh = nn::conv_out_extent(h, k, l.stride, l.padding);
    const int ow = nn::conv_out_extent(w, k, l.stride, l.padding);
    QTensor y{{oh, ow, oc}, std::vector<std::int8_t>(static_cast<std::size_t>(oh) * ow * oc)};
    std::vector<std::int64_t> acc(static_cast<std::size_t>(oc));
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int o = 0; o < oc; ++o) acc[static_cast<std::size_t>(o)] = q.bias[static_cast<std::size_t>(o)];
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * l.stride - l.padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * l.stride - l.padding + kx;
            if (ix < 0 || ix >= w) continue;
            const std::int8_t* px = x.data.data() + (static_cast<std::size_t>(iy) * w + ix) * c;
            const std::int8_t* wk = q.weights.data() + (static_cast<std::size_t>(ky) * k + kx) * c * oc;
            for (int ci = 0; ci < c; ++ci) {
              const std::int64_t a = static_cast<std::int64_t>(px[ci]) - in.zero_point;
              const std::int8_t* wr = wk + static_cast<std::size_t>(ci) * oc;
              for (int o = 0; o < oc; ++o) acc[static_cast<std::size_t>(o)] += a * wr[o];
            }
          }
        }
        std::int8_t* dst = y.data.data() + (static_cast<std::size_t>(oy) * ow + ox) * oc;
        for (int o = 0; o < oc; ++o)
          dst[o] = clamp8(static_cast<std::int64_t>(apply_requant(sat32(acc[static_cast<std::size_t>(o)]), q.requant)) +
                          q.output.zero_point);
      }
    }
    return y;
  }

  QTensor dense(const QLayer& q, const QTensor& x, QuantParams in) {
    const int n_in = q.spec.in_ch, n_out = q.spec.out_ch;
    QTensor y{{n_out}, std::vector<std::int8_t>(static_cast<std::size_t>(n_out))};
    for (int o = 0; o < n_out; ++o) {
      std::int64_t acc = q.bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < n_in; ++i)
        acc += (static_cast<std::int64_t>(x.data[static_cast<std::size_t>(i)]) - in.zero_point) *
               q.weights[static_cast<std::size_t>(i) * n_out + o];
      y.data[static_cast<std::size_t>(o)] =
          clamp8(static_cast<std::int64_t>(apply_requant(sat32(acc), q.requant)) + q.output.zero_point);
    }
    return y;
  }

  QTensor maxpool(const QLayer& q, const QTensor& x) {
    const LayerSpec& l = q.spec;
    const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
    const int oh = nn::conv_out_extent(h, l.kernel, l.stride, l.padding);
    const int ow = nn::conv_out_extent(w, l.kernel, l.stride, l.padding);
    QTensor y{{oh, ow, c}, std::vector<std::int8_t>(static_cast<std::size_t>(oh) * ow * c)};
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c; ++ch) {
          int best = -129;
          for (int ky = 0; ky < l.kernel; ++ky) {
            const int iy = oy * l.stride - l.padding + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < l.kernel; ++kx) {
              const int ix = ox * l.stride - l.padding + kx;
              if (ix < 0 || ix >= w) continue;
              best = std::max<int>(best, x.data[(static_cast<std::size_t>(iy) * w + ix) * c + ch]);
            }
          }
          y.data[(static_cast<std::size_t>(oy) * ow + ox) * c + ch] = static_cast<std::int8_t>(best);
        }
    return y;
  }

  QTensor gap(const QLayer& q, const QTensor& x, QuantParams in) {
    const int c = x.shape[2];
    const std::size_t plane = static_cast<std::size_t>(x.shape[0]) * x.shape[1];
    QTensor y{{c}, std::vector<std::int8_t>(static_cast<std::size_t>(c))};
    for (int ch = 0; ch < c; ++ch) {
      std::int64_t sum = 0;
      for (std::size_t p = 0; p < plane; ++p)
        sum += static_cast<std::int64_t>(x.data[p * c + ch]) - in.zero_point;
      y.data[static_cast<std::size_t>(ch)] =
          clamp8(static_cast<std::int64_t>(apply_requant(sat32(sum), q.requant)) + q.output.zero_point);
    }
    return y;
  }

  QTensor run(const std::vector<QLayer>& layers, QTensor x, QuantParams in) {
    for (const auto& q : layers) {
      QTensor y;
      switch (q.spec.op) {
        case LayerOp::Conv: y = conv(q, x, in); break;
        case LayerOp::Dense: y = dense(q, x, in); break;
        case LayerOp::ReLU:
          y = x;
          for (auto& v : y.data) v = std::max<std::int8_t>(v, static_cast<std::int8_t>(q.output.zero_point));
          break;
        case LayerOp::MaxPool: y = maxpool(q, x); break;
        case LayerOp::GlobalAvgPool: y = gap(q, x, in); break;
        case LayerOp::Flatten:
          y = x;
          y.shape = {static_cast<int>(x.data.size())};
          break;
        case LayerOp::InceptionConcat: {
          std::vector<QTensor> parts;
          for (const auto& b : q.branches) parts.push_back(run(b, x, in));
          const int h = x.shape[0], w = x.shape[1];
          int total = 0;
          for (const auto& p : parts) total += p.shape[2];
          y.shape = {h, w, total};
          y.data.resize(static_cast<std::size_t>(h) * w * total);
          for (std::size_t px = 0; px < static_cast<std::size_t>(h) * w; ++px) {
            std::size_t o = px * total;
            for (const auto& p : parts) {
              const auto c = static_cast<std::size_t>(p.shape[2]);
              std::copy_n(p.data.begin() + static_cast<std::ptrdiff_t>(px * c), c,
                          y.data.begin() + static_cast<std::ptrdiff_t>(o));
              o += c;
            }
          }
          break;
        }
      }
      record(y);
      x = std::move(y);
      in = q.output;
    }
    return x;
  }
};

}  // namespace

std::vector<std::int8_t> quantize_input(const nn::Tensor& input) {
  std::vector<std::int8_t> q(input.size());
  for (std::size_t i = 0; i < input.size(); ++i)
    q[i] = static_cast<std::int8_t>(round_saturate(
        static_cast<double>(input[i]) * 255.0 + format::kInputZeroPoint, -128, 127));
  return q;
}

SimResult simulate_quant_infer(const QModel& qm, const nn::Tensor& input, bool keep_activations) {
  if (input.shape() != qm.spec.input_shape())
    throw ShapeError("simulate_quant_infer: input " + nn::shape_str(input.shape()) +
                     " does not match model input " + nn::shape_str(qm.spec.input_shape()));
  SimResult r;
  Sim sim{keep_activations, &r.activations};
  QTensor x{input.shape(), quantize_input(input)};
  const QTensor y = sim.run(qm.layers, std::move(x), qm.input);
  const QuantParams out = qm.layers.empty() ? qm.input : qm.layers.back().output;
  r.logits_q = y.data;
  r.logits = nn::Tensor({static_cast<int>(y.data.size())});
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    r.logits[i] = dequantize_value(y.data[i], out);
    if (y.data[i] > y.data[static_cast<std::size_t>(r.predicted)]) r.predicted = static_cast<int>(i);
  }
  return r;
}

// ---------------------------------------------------------------- reports

QuantErrorReport quant_error_stats(const arch::Model& model, const QModel& qm,
                                   const std::vector<LabeledTensor>& samples) {
  if (samples.empty()) throw QuantError("quant_error_stats: no samples");
  QuantErrorReport r;
  r.samples = samples.size();
  long ok_f = 0, ok_q = 0, agree = 0;
  double dev_sum = 0.0;
  std::size_t dev_n = 0;
  std::vector<nn::NodeTrace<float>> trace;
  for (const auto& s : samples) {
    const nn::Tensor f = nn::forward<float>(model.spec.layers, model.params, s.input, &trace);
    int pf = 0;
    for (std::size_t i = 1; i < f.size(); ++i)
      if (f[i] > f[static_cast<std::size_t>(pf)]) pf = static_cast<int>(i);
    const SimResult q = simulate_quant_infer(qm, s.input);
    ok_f += pf == s.label;
    ok_q += q.predicted == s.label;
    agree += pf == q.predicted;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double d = std::fabs(static_cast<double>(f[i]) - q.logits[i]);
      r.max_logit_dev = std::max(r.max_logit_dev, d);
      dev_sum += d;
      ++dev_n;
    }
  }
  const double n = static_cast<double>(samples.size());
  r.accuracy_float = static_cast<double>(ok_f) / n;
  r.accuracy_int8 = static_cast<double>(ok_q) / n;
  r.accuracy_delta = r.accuracy_int8 - r.accuracy_float;
  r.agreement_rate = static_cast<double>(agree) / n;
  r.mean_logit_dev = dev_n ? dev_sum / static_cast<double>(dev_n) : 0.0;
  return r;
}

std::string format_quant_report(const QuantErrorReport& r, const arch::SizeEstimate& sizes) {
  std::ostringstream os;
  os.precision(6);
  os << "samples=" << r.samples << "\n"
     << "accuracy_float=" << r.accuracy_float << "\n"
     << "accuracy_int8=" << r.accuracy_int8 << "\n"
     << "accuracy_delta=" << r.accuracy_delta << "\n"
     << "agreement_rate=" << r.agreement_rate << "\n"
     << "max_logit_dev=" << r.max_logit_dev << "\n"
     << "mean_logit_dev=" << r.mean_logit_dev << "\n"
     << "param_count=" << sizes.param_count << "\n"
     << "blob_bytes_fp32=" << sizes.bytes_fp32 << "\n"
     << "blob_bytes_fp16=" << sizes.bytes_fp16 << "\n"
     << "blob_bytes_int8=" << sizes.bytes_int8 << "\n";
  return os.str();
}

void write_quant_report(const std::filesystem::path& path, const QuantErrorReport& r,
                        const arch::SizeEstimate& sizes) {
  std::ofstream f(path);
  if (!f) throw LoadError("cannot write " + path.string());
  f << format_quant_report(r, sizes);
}

}  // namespace pvcrack::quant
