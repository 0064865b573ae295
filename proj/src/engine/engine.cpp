#include "pvcrack/engine/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "pvcrack/nn/image.hpp"

namespace pvcrack::engine {

using nn::LayerOp;

// ---------------------------------------------------------------- planning

ArenaPlan plan_arena(const std::vector<TensorSlot>& tensors) {
  ArenaPlan plan;
  plan.tensors = tensors;
  std::vector<std::size_t> order(tensors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return format::align_up(tensors[a].length) > format::align_up(tensors[b].length);
  });
  std::vector<std::size_t> placed;
  for (std::size_t idx : order) {
    TensorSlot& t = plan.tensors[idx];
    std::vector<std::pair<std::size_t, std::size_t>> busy;  // [begin, end)
    for (std::size_t p : placed) {
      const TensorSlot& o = plan.tensors[p];
      if (o.first_step <= t.last_step && t.first_step <= o.last_step)
        busy.emplace_back(o.offset, o.offset + format::align_up(o.length));
    }
    std::sort(busy.begin(), busy.end());
    const std::size_t need = format::align_up(t.length);
    std::size_t offset = 0;
    for (const auto& [b, e] : busy) {
      if (offset + need <= b) break;
      offset = std::max(offset, e);
    }
    t.offset = offset;
    plan.arena_bytes = std::max(plan.arena_bytes, offset + need);
    placed.push_back(idx);
  }
  return plan;
}

int count_overlaps(const ArenaPlan& plan) {
  int n = 0;
  const auto& ts = plan.tensors;
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = i + 1; j < ts.size(); ++j) {
      const bool live = ts[i].first_step <= ts[j].last_step && ts[j].first_step <= ts[i].last_step;
      const bool bytes = ts[i].offset < ts[j].offset + ts[j].length &&
                         ts[j].offset < ts[i].offset + ts[i].length;
      if (live && bytes && ts[i].length > 0 && ts[j].length > 0) ++n;
    }
  return n;
}

std::size_t peak_live_bytes(const ArenaPlan& plan) {
  int lo = 0, hi = 0;
  for (const auto& t : plan.tensors) {
    lo = std::min(lo, t.first_step);
    hi = std::max(hi, t.last_step);
  }
  std::size_t peak = 0;
  for (int s = lo; s <= hi; ++s) {
    std::size_t sum = 0;
    for (const auto& t : plan.tensors)
      if (t.first_step <= s && s <= t.last_step) sum += t.length;
    peak = std::max(peak, sum);
  }
  return peak;
}

LatencyStats latency_stats(std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw ParamError("latency_stats: no samples");
  std::sort(samples_ms.begin(), samples_ms.end());
  LatencyStats s;
  s.runs = static_cast<int>(samples_ms.size());
  double sum = 0.0;
  for (double v : samples_ms) sum += v;
  s.mean_ms = sum / static_cast<double>(samples_ms.size());
  auto rank = [&](double p) {
    const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples_ms.size())));
    return samples_ms[std::clamp<std::size_t>(k, 1, samples_ms.size()) - 1];
  };
  s.p50_ms = rank(0.50);
  s.p95_ms = rank(0.95);
  s.min_ms = samples_ms.front();
  s.max_ms = samples_ms.back();
  s.mean_ms = std::clamp(s.mean_ms, s.min_ms, s.max_ms);
  return s;
}

// ---------------------------------------------------------------- execution

namespace {

constexpr std::size_t kGuardBytes = 64;
constexpr std::uint8_t kGuardByte = 0xCD;
constexpr std::uint8_t kCanaryByte = 0xA5;

struct Op {
  LayerOp op = LayerOp::ReLU;
  const quant::QLayer* layer = nullptr;
  std::vector<int> inputs;
  int output = 0;
  nn::Shape in_shape, out_shape;
  std::int32_t in_zp = 0;
  std::vector<std::int8_t> packed;  // weights reordered output-channel major
};

std::int8_t to_i8(std::int64_t v) {
  return static_cast<std::int8_t>(v < -128 ? -128 : (v > 127 ? 127 : v));
}

std::int32_t to_i32(std::int64_t v) {
  constexpr std::int64_t lo = std::numeric_limits<std::int32_t>::min();
  constexpr std::int64_t hi = std::numeric_limits<std::int32_t>::max();
  return static_cast<std::int32_t>(v < lo ? lo : (v > hi ? hi : v));
}

// acc * m * 2^-(31 + shift), rounded half away from zero.
std::int64_t scale_acc(std::int32_t acc, std::int32_t m, int shift) {
  const int s = 31 + shift;
  if (s > 62) return 0;
  std::int64_t prod = static_cast<std::int64_t>(acc) * m;
  const bool neg = prod < 0;
  if (neg) prod = -prod;
  prod = (prod + (std::int64_t{1} << (s - 1))) >> s;
  return neg ? -prod : prod;
}

}  // namespace

struct EngineInstance::Impl {
  quant::QModel qm;
  std::size_t blob_size = 0;
  std::vector<Op> ops;
  std::vector<nn::Shape> tensor_shapes;
  ArenaPlan plan;
  std::vector<std::uint8_t> memory;  // arena followed by the guard region
  std::vector<std::int64_t> acc;
  quant::QuantParams out_params;

  std::int8_t* at(int tensor) {
    return reinterpret_cast<std::int8_t*>(memory.data() + plan.tensors[static_cast<std::size_t>(tensor)].offset);
  }

  int add_tensor(nn::Shape s) {
    tensor_shapes.push_back(std::move(s));
    return static_cast<int>(tensor_shapes.size()) - 1;
  }

  int emit(const std::vector<quant::QLayer>& layers, int in, std::int32_t in_zp) {
    for (const auto& q : layers) {
      Op op;
      op.op = q.spec.op;
      op.layer = &q;
      op.in_shape = tensor_shapes[static_cast<std::size_t>(in)];
      op.in_zp = in_zp;
      if (q.spec.op == LayerOp::InceptionConcat) {
        for (const auto& b : q.branches) op.inputs.push_back(b.empty() ? in : emit(b, in, in_zp));
      } else {
        op.inputs.push_back(in);
      }
      nn::LayerSpec shape_spec = q.spec;
      if (q.spec.op == LayerOp::InceptionConcat) {
        int c = 0;
        for (int t : op.inputs) c += tensor_shapes[static_cast<std::size_t>(t)].back();
        op.out_shape = {op.in_shape[0], op.in_shape[1], c};
      } else {
        op.out_shape = nn::infer_shape(shape_spec, op.in_shape);
      }
      if (q.spec.op == LayerOp::Conv) {
        const int k = q.spec.kernel, c = q.spec.in_ch, oc = q.spec.out_ch;
        op.packed.resize(q.weights.size());
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            for (int ci = 0; ci < c; ++ci)
              for (int o = 0; o < oc; ++o)
                op.packed[((static_cast<std::size_t>(o) * k + ky) * k + kx) * c + ci] =
                    q.weights[((static_cast<std::size_t>(ky) * k + kx) * c + ci) * oc + o];
      } else if (q.spec.op == LayerOp::Dense) {
        const int n_in = q.spec.in_ch, n_out = q.spec.out_ch;
        op.packed.resize(q.weights.size());
        for (int i = 0; i < n_in; ++i)
          for (int o = 0; o < n_out; ++o)
            op.packed[static_cast<std::size_t>(o) * n_in + i] =
                q.weights[static_cast<std::size_t>(i) * n_out + o];
      }
      op.output = add_tensor(op.out_shape);
      in = op.output;
      in_zp = q.output.zero_point;
      ops.push_back(std::move(op));
    }
    return in;
  }

  void build() {
    add_tensor(qm.spec.input_shape());
    const int out = emit(qm.layers, 0, qm.input.zero_point);
    out_params = qm.layers.back().output;
    std::vector<TensorSlot> slots(tensor_shapes.size());
    for (std::size_t t = 0; t < slots.size(); ++t) {
      slots[t].length = nn::shape_size(tensor_shapes[t]);
      slots[t].first_step = -1;
      slots[t].last_step = -1;
    }
    for (std::size_t s = 0; s < ops.size(); ++s) {
      slots[static_cast<std::size_t>(ops[s].output)].first_step = static_cast<int>(s);
      slots[static_cast<std::size_t>(ops[s].output)].last_step = static_cast<int>(s);
      for (int in : ops[s].inputs)
        slots[static_cast<std::size_t>(in)].last_step =
            std::max(slots[static_cast<std::size_t>(in)].last_step, static_cast<int>(s));
    }
    slots[static_cast<std::size_t>(out)].last_step = static_cast<int>(ops.size());
    plan = plan_arena(slots);
    memory.assign(plan.arena_bytes + kGuardBytes, 0);
    std::fill(memory.end() - kGuardBytes, memory.end(), kGuardByte);
    std::size_t widest = 1;
    for (const auto& op : ops)
      if (op.layer->spec.has_params()) widest = std::max<std::size_t>(widest, op.layer->spec.out_ch);
    acc.resize(widest);
  }

  void conv(const Op& op) {
    const auto& l = op.layer->spec;
    const std::int8_t* x = at(op.inputs[0]);
    std::int8_t* y = at(op.output);
    const int h = op.in_shape[0], w = op.in_shape[1], c = op.in_shape[2];
    const int oh = op.out_shape[0], ow = op.out_shape[1], oc = op.out_shape[2];
    const int k = l.kernel;
    const auto& q = *op.layer;
    for (int oy = 0; oy < oh; ++oy) {
      const int y0 = oy * l.stride - l.padding;
      const int ky_lo = std::max(0, -y0), ky_hi = std::min(k, h - y0);
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = ox * l.stride - l.padding;
        const int kx_lo = std::max(0, -x0), kx_hi = std::min(k, w - x0);
        const int run = (kx_hi - kx_lo) * c;
        std::int8_t* dst = y + (static_cast<std::size_t>(oy) * ow + ox) * oc;
        for (int o = 0; o < oc; ++o) {
          std::int64_t a = q.bias[static_cast<std::size_t>(o)];
          for (int ky = ky_lo; ky < ky_hi; ++ky) {
            const std::int8_t* xr = x + (static_cast<std::size_t>(y0 + ky) * w + (x0 + kx_lo)) * c;
            const std::int8_t* wr =
                op.packed.data() + ((static_cast<std::size_t>(o) * k + ky) * k + kx_lo) * c;
            std::int32_t part = 0;  // |run| <= 255 * 255 * 127 * 65535 does not fit; split below
            if (run <= 4096) {
              for (int j = 0; j < run; ++j) part += (xr[j] - op.in_zp) * wr[j];
              a += part;
            } else {
              for (int j = 0; j < run; ++j)
                a += static_cast<std::int64_t>(xr[j] - op.in_zp) * wr[j];
            }
          }
          dst[o] = to_i8(scale_acc(to_i32(a), q.requant.multiplier, q.requant.shift) +
                         q.output.zero_point);
        }
      }
    }
  }

  void dense(const Op& op) {
    const auto& q = *op.layer;
    const std::int8_t* x = at(op.inputs[0]);
    std::int8_t* y = at(op.output);
    const int n_in = q.spec.in_ch, n_out = q.spec.out_ch;
    for (int o = 0; o < n_out; ++o) {
      const std::int8_t* wr = op.packed.data() + static_cast<std::size_t>(o) * n_in;
      std::int64_t a = q.bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < n_in; ++i) a += static_cast<std::int64_t>(x[i] - op.in_zp) * wr[i];
      y[o] = to_i8(scale_acc(to_i32(a), q.requant.multiplier, q.requant.shift) +
                   q.output.zero_point);
    }
  }

  void maxpool(const Op& op) {
    const auto& l = op.layer->spec;
    const std::int8_t* x = at(op.inputs[0]);
    std::int8_t* y = at(op.output);
    const int h = op.in_shape[0], w = op.in_shape[1], c = op.in_shape[2];
    const int oh = op.out_shape[0], ow = op.out_shape[1];
    for (int oy = 0; oy < oh; ++oy) {
      const int y0 = oy * l.stride - l.padding;
      const int ky_lo = std::max(0, -y0), ky_hi = std::min(l.kernel, h - y0);
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = ox * l.stride - l.padding;
        const int kx_lo = std::max(0, -x0), kx_hi = std::min(l.kernel, w - x0);
        std::int8_t* dst = y + (static_cast<std::size_t>(oy) * ow + ox) * c;
        std::fill_n(dst, c, std::int8_t{-128});
        for (int ky = ky_lo; ky < ky_hi; ++ky)
          for (int kx = kx_lo; kx < kx_hi; ++kx) {
            const std::int8_t* src = x + (static_cast<std::size_t>(y0 + ky) * w + x0 + kx) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] = std::max(dst[ch], src[ch]);
          }
      }
    }
  }

  void gap(const Op& op) {
    const auto& q = *op.layer;
    const std::int8_t* x = at(op.inputs[0]);
    std::int8_t* y = at(op.output);
    const int c = op.in_shape[2];
    const std::size_t plane = static_cast<std::size_t>(op.in_shape[0]) * op.in_shape[1];
    std::fill_n(acc.begin(), std::min<std::size_t>(acc.size(), static_cast<std::size_t>(c)), 0);
    if (acc.size() < static_cast<std::size_t>(c)) acc.resize(static_cast<std::size_t>(c), 0);
    for (std::size_t p = 0; p < plane; ++p)
      for (int ch = 0; ch < c; ++ch) acc[static_cast<std::size_t>(ch)] += x[p * c + ch] - op.in_zp;
    for (int ch = 0; ch < c; ++ch)
      y[ch] = to_i8(scale_acc(to_i32(acc[static_cast<std::size_t>(ch)]), q.requant.multiplier,
                              q.requant.shift) +
                    q.output.zero_point);
  }

  void step(const Op& op) {
    const std::size_t n_out = nn::shape_size(op.out_shape);
    switch (op.op) {
      case LayerOp::Conv: conv(op); break;
      case LayerOp::Dense: dense(op); break;
      case LayerOp::MaxPool: maxpool(op); break;
      case LayerOp::GlobalAvgPool: gap(op); break;
      case LayerOp::ReLU: {
        const std::int8_t* x = at(op.inputs[0]);
        std::int8_t* y = at(op.output);
        const auto z = static_cast<std::int8_t>(op.layer->output.zero_point);
        for (std::size_t i = 0; i < n_out; ++i) y[i] = x[i] < z ? z : x[i];
        break;
      }
      case LayerOp::Flatten:
        std::memmove(at(op.output), at(op.inputs[0]), n_out);
        break;
      case LayerOp::InceptionConcat: {
        std::int8_t* y = at(op.output);
        const std::size_t plane = static_cast<std::size_t>(op.out_shape[0]) * op.out_shape[1];
        const auto total = static_cast<std::size_t>(op.out_shape[2]);
        std::size_t base = 0;
        for (int t : op.inputs) {
          const auto c = static_cast<std::size_t>(tensor_shapes[static_cast<std::size_t>(t)].back());
          const std::int8_t* x = at(t);
          for (std::size_t p = 0; p < plane; ++p) std::memcpy(y + p * total + base, x + p * c, c);
          base += c;
        }
        break;
      }
    }
  }

  void load_input(std::span<const std::int8_t> input) {
    const std::size_t n = nn::shape_size(tensor_shapes[0]);
    if (input.size() != n)
      throw ShapeError("engine: input has " + std::to_string(input.size()) + " values, model expects " +
                       std::to_string(n));
    std::memcpy(at(0), input.data(), n);
  }

  InferResult finish() {
    const int out = ops.back().output;
    const std::size_t n = nn::shape_size(tensor_shapes[static_cast<std::size_t>(out)]);
    InferResult r;
    r.logits_q.assign(at(out), at(out) + n);
    r.logits = nn::Tensor({static_cast<int>(n)});
    for (std::size_t i = 0; i < n; ++i) {
      r.logits[i] = out_params.scale * static_cast<float>(r.logits_q[i] - out_params.zero_point);
      if (r.logits_q[i] > r.logits_q[static_cast<std::size_t>(r.class_index)])
        r.class_index = static_cast<int>(i);
    }
    return r;
  }

  std::vector<std::int8_t> quantize_image(std::span<const std::uint8_t> image, int height, int width) {
    const int side = qm.spec.input_side;
    const bool cell = height == data_side && width == data_side;
    const bool sized = height == side && width == side;
    if (!(cell || sized) || qm.spec.input_channels != 1)
      throw ShapeError("engine: image " + std::to_string(height) + "x" + std::to_string(width) +
                       " is neither 300x300 nor the model input " + std::to_string(side) + "x" +
                       std::to_string(side));
    if (image.size() != static_cast<std::size_t>(height) * width)
      throw ShapeError("engine: image buffer length does not match its dimensions");
    const nn::Tensor t = nn::resize_to_unit(image, height, width, side);
    std::vector<std::int8_t> q(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const long v = std::lround(static_cast<double>(t[i]) * 255.0 - 128.0);
      q[i] = static_cast<std::int8_t>(std::clamp<long>(v, -128, 127));
    }
    return q;
  }

  static constexpr int data_side = 300;
};

EngineInstance::EngineInstance(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
EngineInstance::EngineInstance(EngineInstance&&) noexcept = default;
EngineInstance& EngineInstance::operator=(EngineInstance&&) noexcept = default;
EngineInstance::~EngineInstance() = default;

EngineInstance EngineInstance::load(std::span<const std::uint8_t> blob) {
  DecodedBlob d = parse_blob(blob);
  if (d.scheme != format::Scheme::Int8)
    throw ParseError(ParseErrorKind::Scheme,
                     std::string("engine executes int8 blobs, got ") + format::scheme_name(d.scheme));
  auto impl = std::make_unique<Impl>();
  impl->qm = std::move(*d.qmodel);
  impl->blob_size = blob.size();
  impl->build();
  return EngineInstance(std::move(impl));
}

const quant::QModel& EngineInstance::model() const { return impl_->qm; }
const ArenaPlan& EngineInstance::plan() const { return impl_->plan; }
std::size_t EngineInstance::blob_bytes() const { return impl_->blob_size; }

InferResult EngineInstance::infer(std::span<const std::uint8_t> image, int height, int width) {
  return infer_quantized(impl_->quantize_image(image, height, width));
}

InferResult EngineInstance::infer_quantized(std::span<const std::int8_t> input) {
  impl_->load_input(input);
  for (const auto& op : impl_->ops) impl_->step(op);
  return impl_->finish();
}

bool EngineInstance::guard_intact() const {
  const auto& m = impl_->memory;
  return std::all_of(m.end() - kGuardBytes, m.end(), [](std::uint8_t b) { return b == kGuardByte; });
}

ReplayReport EngineInstance::canary_replay(std::span<const std::uint8_t> image, int height,
                                           int width) {
  Impl& e = *impl_;
  const auto input = e.quantize_image(image, height, width);
  std::fill(e.memory.begin(), e.memory.end() - kGuardBytes, kCanaryByte);
  e.load_input(input);

  ReplayReport rep;
  const std::size_t n_tensors = e.plan.tensors.size();
  std::vector<std::vector<std::uint8_t>> snapshot(n_tensors);
  auto take = [&](std::size_t t) {
    const auto& s = e.plan.tensors[t];
    snapshot[t].assign(e.memory.begin() + static_cast<std::ptrdiff_t>(s.offset),
                       e.memory.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length));
  };
  take(0);
  std::vector<char> reported(n_tensors, 0);
  for (std::size_t step = 0; step < e.ops.size(); ++step) {
    e.step(e.ops[step]);
    const auto out = static_cast<std::size_t>(e.ops[step].output);
    take(out);
    ++rep.steps;
    for (std::size_t t = 0; t < n_tensors; ++t) {
      const auto& s = e.plan.tensors[t];
      if (t == out || reported[t] || s.first_step > static_cast<int>(step) ||
          s.last_step <= static_cast<int>(step) || snapshot[t].empty())
        continue;
      if (!std::equal(snapshot[t].begin(), snapshot[t].end(),
                      e.memory.begin() + static_cast<std::ptrdiff_t>(s.offset))) {
        reported[t] = 1;
        ++rep.corrupted_tensors;
      }
    }
  }
  rep.guard_intact = guard_intact();
  return rep;
}

LatencyStats benchmark(EngineInstance& engine, int runs, int warmup) {
  if (runs < 1) throw ParamError("benchmark: runs must be >= 1");
  const int side = engine.model().spec.input_side;
  const std::vector<std::uint8_t> image(static_cast<std::size_t>(side) * side, 128);
  for (int i = 0; i < warmup; ++i) engine.infer(image, side, side);
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(runs));
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    engine.infer(image, side, side);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return latency_stats(std::move(ms));
}

}  // namespace pvcrack::engine
