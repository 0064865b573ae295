#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "pvcrack/engine/blob.hpp"

namespace pvcrack::engine {

struct TensorSlot {
  std::size_t offset = 0;
  std::size_t length = 0;  // bytes
  int first_step = 0;      // producing step (-1 for the model input)
  int last_step = 0;       // last consuming step
};

struct ArenaPlan {
  std::size_t arena_bytes = 0;
  std::vector<TensorSlot> tensors;  // 0 is the input, then one per node
};

// Greedy placement over lifetimes: largest tensors first (ties by
// production order), each at the lowest 16-byte aligned offset that does
// not overlap a placed tensor whose lifetime intersects its own.
ArenaPlan plan_arena(const std::vector<TensorSlot>& tensors);

// Pairs of lifetime-overlapping tensors whose byte ranges intersect.
int count_overlaps(const ArenaPlan& plan);

// Largest sum of live tensor lengths over all steps.
std::size_t peak_live_bytes(const ArenaPlan& plan);

struct InferResult {
  int class_index = 0;
  nn::Tensor logits;  // dequantized
  std::vector<std::int8_t> logits_q;
};

struct ReplayReport {
  int steps = 0;
  int corrupted_tensors = 0;  // live tensors whose bytes changed under another write
  bool guard_intact = true;
  int violations() const { return corrupted_tensors + (guard_intact ? 0 : 1); }
};

struct LatencyStats {
  int runs = 0;
  double mean_ms = 0, p50_ms = 0, p95_ms = 0, min_ms = 0, max_ms = 0;
};

// Nearest-rank percentiles over samples (milliseconds).
LatencyStats latency_stats(std::vector<double> samples_ms);

// Integer-only executor for int8 blobs. One owned arena sized by the plan,
// followed by a guard region.
class EngineInstance {
 public:
  // ParseError on a malformed blob or a non-int8 scheme.
  static EngineInstance load(std::span<const std::uint8_t> blob);

  EngineInstance(EngineInstance&&) noexcept;
  EngineInstance& operator=(EngineInstance&&) noexcept;
  ~EngineInstance();

  const quant::QModel& model() const;
  const ArenaPlan& plan() const;
  std::size_t arena_bytes() const { return plan().arena_bytes; }
  std::size_t blob_bytes() const;

  // image is 8-bit grayscale, either 300x300 or already input-sized.
  InferResult infer(std::span<const std::uint8_t> image, int height, int width);
  // Input already on the fixed input grid, input_side^2 * channels values.
  InferResult infer_quantized(std::span<const std::int8_t> input);

  // Fills the arena with a canary pattern, then executes step by step,
  // checking after each step that every live tensor still holds the bytes
  // it was produced with and the guard region is untouched.
  ReplayReport canary_replay(std::span<const std::uint8_t> image, int height, int width);

  bool guard_intact() const;

 private:
  struct Impl;
  explicit EngineInstance(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

// Warmup then timed runs on a fixed mid-gray input.
LatencyStats benchmark(EngineInstance& engine, int runs, int warmup);

}  // namespace pvcrack::engine
