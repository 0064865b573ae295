// Mutation fuzzer for the blob parser and engine loader. Built with
// AddressSanitizer and UBSan; any out-of-bounds access aborts the run.

#include <cstring>
#include <iostream>
#include <string>

#include "pvcrack/arch/model.hpp"
#include "pvcrack/engine/blob.hpp"
#include "pvcrack/engine/engine.hpp"
#include "pvcrack/quant/quant.hpp"

using namespace pvcrack;

namespace {

engine::ModelBlob int8_blob(const arch::ModelSpec& spec, std::uint64_t seed) {
  const auto model = arch::build_model(spec, seed);
  Rng rng(seed);
  std::vector<nn::Tensor> calib;
  for (int i = 0; i < 4; ++i) {
    nn::Tensor t(spec.input_shape());
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
    calib.push_back(std::move(t));
  }
  return engine::serialize(quant::quantize_int8(model, quant::calibrate(model, calib)));
}

}  // namespace

int main(int argc, char** argv) {
  const int iterations = argc > 1 ? std::stoi(argv[1]) : 10000;
  const std::vector<engine::ModelBlob> seeds = {
      int8_blob(arch::reference_model_1(32), 1), int8_blob(arch::reference_model_2(32), 2),
      engine::serialize(arch::build_model(arch::reference_model_2(32), 3))};
  Rng rng(4242);
  int rejected = 0, executed = 0;
  for (int i = 0; i < iterations; ++i) {
    engine::ModelBlob b = seeds[static_cast<std::size_t>(i) % seeds.size()];
    const int flips = 1 + static_cast<int>(rng.below(12));
    for (int f = 0; f < flips; ++f) {
      // Bias mutations towards the header and record table.
      const std::size_t span = rng.coin() ? std::min<std::size_t>(b.size(), 24 + 26 * 24) : b.size();
      b[rng.below(span)] = static_cast<std::uint8_t>(rng.next_u64());
    }
    if (rng.below(4) == 0) b.resize(rng.below(b.size() + 1));
    if (i % 2 == 0 && b.size() >= format::kHeaderBytes) {
      const auto crc = crc32(std::span<const std::uint8_t>(b).subspan(format::kHeaderBytes));
      std::memcpy(b.data() + 20, &crc, 4);
    }
    try {
      const auto d = engine::parse_blob(b);
      if (d.qmodel) {
        auto eng = engine::EngineInstance::load(b);
        const auto side = static_cast<std::size_t>(d.spec.input_side);
        eng.infer_quantized(std::vector<std::int8_t>(side * side, 5));
        if (!eng.guard_intact()) {
          std::cerr << "guard overwritten at iteration " << i << "\n";
          return 1;
        }
        ++executed;
      }
    } catch (const engine::ParseError&) {
      ++rejected;
    } catch (const Error&) {
    }
  }
  std::cout << iterations << " mutants, " << rejected << " rejected, " << executed << " executed\n";
  return 0;
}
