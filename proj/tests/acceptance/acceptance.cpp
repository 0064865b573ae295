// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pvcrack/arch/model.hpp"
#include "pvcrack/data/elpv.hpp"
#include "pvcrack/engine/blob.hpp"
#include "pvcrack/engine/engine.hpp"
#include "pvcrack/eval/budget.hpp"
#include "pvcrack/eval/metrics.hpp"
#include "pvcrack/nn/grad_check.hpp"
#include "pvcrack/quant/quant.hpp"
#include "pvcrack/train/train.hpp"

using namespace pvcrack;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSplitSeed = 7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::pair<int, Outcome>> g_results;

void report(int id, const std::string& title, Outcome o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << title << " | " << o.detail
            << std::endl;
  g_results.emplace_back(id, std::move(o));
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string data_root() {
  if (const char* env = std::getenv("PVCRACK_DATA"); env && *env) return env;
#ifdef PVCRACK_TEST_DATA
  return PVCRACK_TEST_DATA;
#else
  return "";
#endif
}

nn::Tensor random_image(int side, Rng& rng) {
  nn::Tensor t({side, side, 1});
  for (auto& v : t.values()) v = static_cast<float>(rng.below(256)) / 255.0f;
  return t;
}

quant::QModel random_qmodel(const arch::ModelSpec& spec, std::uint64_t seed) {
  const auto model = arch::build_model(spec, seed);
  Rng rng(seed + 100);
  std::vector<nn::Tensor> calib;
  for (int i = 0; i < 32; ++i) calib.push_back(random_image(spec.input_side, rng));
  return quant::quantize_int8(model, quant::calibrate(model, calib));
}

// ---------------------------------------------------------------------------
// 1. dataset oracles

Outcome dataset_oracles(const data::CellImageSet& set) {
  const auto t0 = clk::now();
  struct Expect {
    data::VariantId id;
    std::size_t n;
  };
  const Expect expect[] = {{data::VariantId::V01, 2624}, {data::VariantId::V02, 1074},
                           {data::VariantId::V03, 1550}, {data::VariantId::V06, 2223},
                           {data::VariantId::V08, 1322}};
  bool ok = true;
  std::ostringstream os;
  for (const auto& e : expect) {
    const auto n = data::build_variant(set, e.id, kSplitSeed).samples.size();
    os << data::variant_name(e.id) << "=" << n << " ";
    ok = ok && n == e.n;
  }
  const auto v06 = data::build_variant(set, data::VariantId::V06, kSplitSeed).samples.size();
  const auto v07 = data::build_variant(set, data::VariantId::V07, kSplitSeed).samples.size();
  const auto v08 = data::build_variant(set, data::VariantId::V08, kSplitSeed).samples.size();
  os << "V07=" << v07 << " (V06-V08=" << v06 - v08 << ") ";
  ok = ok && v07 == v06 - v08;
  const double secs = seconds_since(t0);
  os << "in " << fmt(secs, 1) << " s";
  ok = ok && secs < 60.0;
  return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 2 and 3. cross-validated accuracy and int8 parity

struct CvOutcome {
  Outcome accuracy;
  Outcome parity;
  arch::Model fold0_model;
  std::optional<quant::QModel> fold0_qmodel;
};

CvOutcome cross_validate(const data::CellImageSet& set) {
  const auto t0 = clk::now();
  const auto ds = data::build_variant(set, data::VariantId::V06, kSplitSeed);
  const auto plan = data::make_folds(ds, 5, kSplitSeed);
  const auto spec = arch::reference_model_1(96);
  const auto inputs = train::prepare_inputs(ds, spec.input_side);
  const train::TrainConfig cfg;

  std::vector<eval::MetricsReport> fp32, int8;
  std::vector<double> gaps;
  CvOutcome out;
  for (int fold = 0; fold < plan.k; ++fold) {
    const auto tf = clk::now();
    const auto result = train::train(arch::build_model(spec, cfg.seed), inputs, ds, plan, fold, cfg);
    const train::Predictor float_pred = [&](const nn::Tensor& x) { return train::predict(result.model, x); };
    fp32.push_back(train::evaluate_with(float_pred, inputs, ds, plan, fold, false));

    std::vector<nn::Tensor> calib;
    for (auto i : train::training_indices(plan, fold)) {
      if (calib.size() >= static_cast<std::size_t>(quant::kDefaultCalibrationSamples)) break;
      calib.push_back(inputs.samples[i]);
    }
    const auto qm = quant::quantize_int8(result.model, quant::calibrate(result.model, calib));
    auto eng = engine::EngineInstance::load(engine::serialize(qm));
    const train::Predictor int8_pred = [&](const nn::Tensor& x) {
      return eng.infer_quantized(quant::quantize_input(x)).class_index;
    };
    int8.push_back(train::evaluate_with(int8_pred, inputs, ds, plan, fold, false));
    gaps.push_back(fp32.back().accuracy - int8.back().accuracy);
    progress("fold " + std::to_string(fold) + ": fp32 " + fmt(fp32.back().accuracy) + ", int8 " +
             fmt(int8.back().accuracy) + ", " + std::to_string(result.history.epochs()) + " epochs, " +
             fmt(seconds_since(tf), 0) + " s");
    if (fold == 0) {
      out.fold0_model = result.model;
      out.fold0_qmodel = qm;
    }
  }
  const auto sf = eval::aggregate_cv(fp32), sq = eval::aggregate_cv(int8);
  const double secs = seconds_since(t0);
  long majority = 0;
  for (const auto& s : ds.samples) majority += s.class_index == 0;
  const double baseline = static_cast<double>(majority) / static_cast<double>(ds.samples.size());

  out.accuracy.pass = sf.accuracy.mean >= 0.75 && secs <= 3600.0;
  out.accuracy.detail = "V06 5-fold mean " + fmt(sf.accuracy.mean) + " +/- " + fmt(sf.accuracy.stddev) +
                        " (floor 0.75, majority baseline " + fmt(baseline) + "), macro F1 " +
                        fmt(sf.macro_f1.mean) + ", " + fmt(secs / 60.0, 1) + " min";
  const double mean_gap = sf.accuracy.mean - sq.accuracy.mean;
  const double worst = *std::max_element(gaps.begin(), gaps.end(), [](double a, double b) {
    return std::abs(a) < std::abs(b);
  });
  out.parity.pass = std::abs(mean_gap) <= 0.03;
  out.parity.detail = "int8 mean " + fmt(sq.accuracy.mean) + " vs fp32 " + fmt(sf.accuracy.mean) + ", gap " +
                      fmt(mean_gap * 100.0, 2) + " pp (limit 3), largest fold gap " + fmt(worst * 100.0, 2) +
                      " pp";
  return out;
}

// ---------------------------------------------------------------------------
// 4. size budget

Outcome size_budget(const arch::Model& model, const quant::QModel& qm) {
  const auto b8 = engine::serialize(qm).size();
  const auto b32 = engine::serialize(model).size();
  const double ratio = static_cast<double>(b32) / static_cast<double>(b8);
  const bool predicted = arch::blob_bytes(model.spec, format::Scheme::Int8) == b8;
  return {b8 < 100 * 1024 && ratio >= 3.0 && predicted,
          "model-1 int8 blob " + std::to_string(b8) + " B (< 102400), fp32 " + std::to_string(b32) +
              " B, ratio " + fmt(ratio, 2) + " (>= 3.0), size estimate " + (predicted ? "exact" : "WRONG")};
}

// ---------------------------------------------------------------------------
// 5. gradient suite

Outcome gradient_suite() {
  const auto t0 = clk::now();
  Rng rng(2024);
  auto rand_d = [&](nn::Shape s, double lo, double hi) {
    nn::TensorD t(std::move(s));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
  };
  auto params_for = [&](const std::vector<nn::LayerSpec>& layers) {
    std::vector<nn::TensorD> ps;
    for (const auto& s : nn::param_shapes(layers)) ps.push_back(rand_d(s, -0.8, 0.8));
    return ps;
  };
  // Pushes every coordinate at least `gap` away from zero.
  auto away_from_zero = [](nn::TensorD& t, double gap) {
    for (auto& v : t.values()) v = v < 0 ? v - gap : v + gap;
  };

  int cases = 0;
  double worst = 0.0;
  std::string worst_kind;
  std::map<std::string, int> per_kind;
  auto run = [&](const std::string& kind, const std::vector<nn::LayerSpec>& layers, const nn::TensorD& x,
                 double eps) {
    const auto r = nn::grad_check(layers, params_for(layers), x, eps, rng.next_u64());
    ++cases;
    ++per_kind[kind];
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_kind = kind;
    }
  };

  for (int i = 0; i < 40; ++i) {
    const int k = 1 + 2 * static_cast<int>(rng.below(3));  // 1, 3, 5
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = static_cast<int>(rng.below(static_cast<std::uint64_t>(k / 2 + 1)));
    const int ci = 1 + static_cast<int>(rng.below(3)), co = 1 + static_cast<int>(rng.below(4));
    const int side = k + 2 + static_cast<int>(rng.below(5));
    run("conv", {nn::LayerSpec::conv(ci, co, k, stride, pad)}, rand_d({side, side, ci}, -1, 1), 1e-5);
  }
  for (int i = 0; i < 30; ++i) {
    const int in = 1 + static_cast<int>(rng.below(12)), out = 1 + static_cast<int>(rng.below(6));
    run("dense", {nn::LayerSpec::dense(in, out)}, rand_d({in}, -1, 1), 1e-5);
  }
  for (int i = 0; i < 30; ++i) {
    const int side = 4 + static_cast<int>(rng.below(6)), c = 1 + static_cast<int>(rng.below(3));
    const bool overlapping = rng.coin();
    const auto pool = overlapping ? nn::LayerSpec::maxpool(3, 1, 1) : nn::LayerSpec::maxpool(2, 2);
    run("maxpool", {pool}, rand_d({side, side, c}, -1, 1), 1e-6);
  }
  for (int i = 0; i < 25; ++i) {
    const int side = 1 + static_cast<int>(rng.below(6)), c = 1 + static_cast<int>(rng.below(4));
    run("global_avg_pool", {nn::LayerSpec::global_avg_pool()}, rand_d({side, side, c}, -1, 1), 1e-5);
  }
  for (int i = 0; i < 25; ++i) {
    auto x = rand_d({3 + static_cast<int>(rng.below(4)), 3, 2}, -1, 1);
    away_from_zero(x, 0.05);
    run("relu", {nn::LayerSpec::relu()}, x, 1e-6);
  }
  for (int i = 0; i < 15; ++i) {
    const int side = 2 + static_cast<int>(rng.below(4)), c = 1 + static_cast<int>(rng.below(3));
    run("flatten+dense", {nn::LayerSpec::flatten(), nn::LayerSpec::dense(side * side * c, 3)},
        rand_d({side, side, c}, -1, 1), 1e-5);
  }
  for (int i = 0; i < 20; ++i) {
    const int c = 1 + static_cast<int>(rng.below(3));
    const std::vector<nn::LayerSpec> layers{arch::make_inception_block(c, 1 + static_cast<int>(rng.below(2)), 1, 2, 1, 1,
                                                                       1 + static_cast<int>(rng.below(2)))};
    run("inception", layers, rand_d({4 + static_cast<int>(rng.below(3)), 4, c}, -1, 1), 1e-6);
  }
  for (int i = 0; i < 25; ++i) {
    const int classes = 2 + static_cast<int>(rng.below(4));
    const auto r = nn::grad_check_cross_entropy(rand_d({classes}, -4, 4),
                                                static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))), 1e-6);
    ++cases;
    ++per_kind["cross_entropy"];
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_kind = "cross_entropy";
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << cases << " cases (";
  bool first = true;
  for (const auto& [k, n] : per_kind) {
    os << (first ? "" : ", ") << k << " " << n;
    first = false;
  }
  os << "), max relative error " << std::scientific << std::setprecision(2) << worst << " (" << worst_kind
     << "), " << std::fixed << std::setprecision(1) << secs << " s";
  return {cases >= 200 && worst < 1e-6 && secs < 60.0, os.str()};
}

// ---------------------------------------------------------------------------
// 6. engine bit-exactness, round trips, fuzzing

void refresh_crc(engine::ModelBlob& b) {
  const auto crc = crc32(std::span<const std::uint8_t>(b).subspan(format::kHeaderBytes));
  std::memcpy(b.data() + 20, &crc, 4);
}

Outcome engine_exactness(const std::vector<quant::QModel>& qms, const std::vector<arch::Model>& floats) {
  const auto t0 = clk::now();
  int mismatches = 0, compared = 0;
  bool round_trips = true;
  Rng rng(606);
  for (const auto& qm : qms) {
    const auto blob = engine::serialize(qm);
    auto eng = engine::EngineInstance::load(blob);
    for (int i = 0; i < 100; ++i) {
      const auto x = random_image(qm.spec.input_side, rng);
      const auto sim = quant::simulate_quant_infer(qm, x);
      const auto got = eng.infer_quantized(quant::quantize_input(x));
      ++compared;
      if (got.logits_q != sim.logits_q || got.class_index != sim.predicted) ++mismatches;
    }
    const auto d = engine::parse_blob(blob);
    round_trips = round_trips && d.qmodel && engine::serialize(*d.qmodel) == blob;
  }
  for (const auto& m : floats) {
    const auto b32 = engine::serialize(m);
    round_trips = round_trips && engine::serialize(engine::float_model(engine::parse_blob(b32))) == b32;
    const auto b16 = engine::serialize(quant::quantize_fp16(m));
    const auto d16 = engine::parse_blob(b16);
    round_trips = round_trips && d16.hmodel && engine::serialize(*d16.hmodel) == b16;
  }

  // Fuzz: byte flips, truncation, extension and header edits over int8 and
  // float blobs of both models; half the mutants get a valid checksum so
  // the structural checks are reached. Accepted mutants are executed.
  std::vector<engine::ModelBlob> seeds;
  for (const auto& qm : qms) seeds.push_back(engine::serialize(qm));
  for (const auto& m : floats) seeds.push_back(engine::serialize(m));
  int rejected = 0, accepted = 0, unexpected = 0;
  std::map<std::string, int> kinds;
  for (int i = 0; i < 10000; ++i) {
    engine::ModelBlob b = seeds[static_cast<std::size_t>(i) % seeds.size()];
    switch (rng.below(4)) {
      case 0: {
        const int flips = 1 + static_cast<int>(rng.below(16));
        for (int f = 0; f < flips; ++f) b[rng.below(b.size())] = static_cast<std::uint8_t>(rng.next_u64());
        break;
      }
      case 1:
        b.resize(rng.below(b.size()));
        break;
      case 2: {
        // Record region: opcode, channel and offset fields.
        const std::size_t lo = format::kHeaderBytes, hi = std::min<std::size_t>(b.size(), lo + 26 * 24);
        const int flips = 1 + static_cast<int>(rng.below(4));
        for (int f = 0; f < flips; ++f) b[lo + rng.below(hi - lo)] = static_cast<std::uint8_t>(rng.next_u64());
        break;
      }
      default: {
        b[4 + rng.below(20)] = static_cast<std::uint8_t>(rng.next_u64());
        if (rng.coin()) b.insert(b.end(), rng.below(64), 0xEE);
        break;
      }
    }
    if (i % 2 == 0 && b.size() >= format::kHeaderBytes) refresh_crc(b);
    try {
      const auto d = engine::parse_blob(b);
      ++accepted;
      if (d.qmodel) {
        auto eng = engine::EngineInstance::load(b);
        std::vector<std::int8_t> input(static_cast<std::size_t>(d.spec.input_side) *
                                           static_cast<std::size_t>(d.spec.input_side),
                                       0);
        eng.infer_quantized(input);
        if (!eng.guard_intact()) ++unexpected;
      }
    } catch (const engine::ParseError& e) {
      ++rejected;
      ++kinds[engine::parse_error_name(e.kind())];
    } catch (const Error&) {
      // Structurally valid blob describing a model the float path cannot run.
      ++accepted;
    } catch (const std::exception&) {
      ++unexpected;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << mismatches << "/" << compared << " logit mismatches over 100 inputs per model, round trips "
     << (round_trips ? "byte-identical" : "DIFFER") << ", 10000 fuzzed blobs: " << rejected << " rejected (";
  bool first = true;
  for (const auto& [k, n] : kinds) {
    os << (first ? "" : ", ") << k << " " << n;
    first = false;
  }
  os << "), " << accepted << " accepted, " << unexpected << " unexpected; " << fmt(secs, 1) << " s";
  return {mismatches == 0 && round_trips && unexpected == 0 && secs < 300.0, os.str()};
}

// ---------------------------------------------------------------------------
// 7. arena safety

Outcome arena_safety(const std::vector<quant::QModel>& qms, const std::vector<std::vector<std::uint8_t>>& images) {
  int violations = 0, overlaps = 0, replays = 0;
  std::ostringstream os;
  std::size_t model1_arena = 0;
  for (std::size_t m = 0; m < qms.size(); ++m) {
    auto eng = engine::EngineInstance::load(engine::serialize(qms[m]));
    overlaps += engine::count_overlaps(eng.plan());
    for (const auto& img : images) {
      violations += eng.canary_replay(img, 300, 300).violations();
      ++replays;
    }
    if (m == 0) model1_arena = eng.arena_bytes();
    os << "model-" << m + 1 << " arena " << eng.arena_bytes() << " B (peak live "
       << engine::peak_live_bytes(eng.plan()) << " B); ";
  }
  os << replays << " replays, " << violations << " violations, " << overlaps << " planned overlaps";
  return {violations == 0 && overlaps == 0 && model1_arena <= 256 * 1024, os.str()};
}

// ---------------------------------------------------------------------------
// 8. budget gating

Outcome budget_gating(const quant::QModel& model1) {
  using eval::Candidate;
  const auto c = eval::BudgetProfile::defaults(eval::Environment::C);
  const auto b = eval::BudgetProfile::defaults(eval::Environment::B);
  auto eng = engine::EngineInstance::load(engine::serialize(model1));

  Candidate m1{"model-1", format::Scheme::Int8, eng.blob_bytes(), eng.arena_bytes(), 0.8, std::nullopt,
               std::nullopt};
  const bool accepts_m1 = eval::budget_gate({m1}, c).has_selection();

  Candidate mid{"4.9MB", format::Scheme::Int8, 4'900'000, 1 << 20, 0.9, std::nullopt, std::nullopt};
  Candidate big{"23MB", format::Scheme::Int8, 23'000'000, 1 << 20, 0.95, std::nullopt, std::nullopt};
  const auto rb = eval::budget_gate({mid, big}, b);
  const bool b_ok = rb.candidates[0].passed && !rb.candidates[1].passed && rb.ranking.size() == 1;

  // Property: over random candidate sets, profile C never ranks a blob over
  // 100 KiB, every passing candidate is ranked and reruns agree.
  Rng rng(808);
  int violations = 0, big_seen = 0;
  for (int round = 0; round < 1000; ++round) {
    std::vector<Candidate> cs;
    const int n = 1 + static_cast<int>(rng.below(10));
    for (int i = 0; i < n; ++i) {
      Candidate x;
      x.name = "c" + std::to_string(i);
      x.scheme = static_cast<format::Scheme>(rng.below(3));
      x.blob_bytes = rng.below(300 * 1024);
      if (rng.below(4) != 0) x.arena_bytes = rng.below(512 * 1024);
      if (rng.coin()) x.accuracy = rng.uniform();
      cs.push_back(x);
    }
    const auto rep = eval::budget_gate(cs, c);
    std::size_t passing = 0;
    for (const auto& o : rep.candidates) {
      if (o.candidate.blob_bytes > 100 * 1024) {
        ++big_seen;
        if (o.passed) ++violations;
      }
      passing += o.passed;
    }
    if (passing != rep.ranking.size()) ++violations;
    if (eval::selection_to_json(eval::budget_gate(cs, c)) != eval::selection_to_json(rep)) ++violations;
  }
  std::ostringstream os;
  os << "C accepts model-1 (" << m1.blob_bytes << " B blob, " << *m1.arena_bytes << " B arena): "
     << (accepts_m1 ? "yes" : "NO") << "; B accepts 4.9 MB and rejects 23 MB: " << (b_ok ? "yes" : "NO")
     << "; 1000 random sets, " << big_seen << " blobs over 100 KiB, " << violations << " property violations";
  return {accepts_m1 && b_ok && violations == 0, os.str()};
}

// ---------------------------------------------------------------------------
// 9. declared: not reproducible at desk scale

Outcome declared(const quant::QModel& model1) {
  auto eng = engine::EngineInstance::load(engine::serialize(model1));
  const auto s = engine::benchmark(eng, 50, 5);
  const bool ordered = s.min_ms <= s.p50_ms && s.p50_ms <= s.p95_ms && s.p95_ms <= s.max_ms &&
                       s.mean_ms >= s.min_ms && s.mean_ms <= s.max_ms;
  return {ordered,
          "declared not reproducible (pretrained-backbone accuracies, per-device latencies); host benchmark "
          "of model-1 over " +
              std::to_string(s.runs) + " runs: min " + fmt(s.min_ms, 3) + " <= p50 " + fmt(s.p50_ms, 3) +
              " <= p95 " + fmt(s.p95_ms, 3) + " <= max " + fmt(s.max_ms, 3) + " ms, mean " + fmt(s.mean_ms, 3) +
              (ordered ? " (ordering holds)" : " (ORDERING VIOLATED)")};
}

}  // namespace

int main(int argc, char** argv) {
  const auto t0 = clk::now();
  // --no-train skips the cross-validation run (criteria 2 and 3 then fail).
  const bool no_train = argc > 1 && std::string(argv[1]) == "--no-train";
  const fs::path root = data_root();
  std::optional<data::CellImageSet> set;
  std::string load_error;
  try {
    if (root.empty()) throw LoadError("no dataset root configured (set PVCRACK_DATA)");
    progress("loading " + root.string());
    set = data::load_elpv(root);
  } catch (const Error& e) {
    load_error = e.what();
  }

  if (set) {
    report(1, "dataset oracles", dataset_oracles(*set));
  } else {
    report(1, "dataset oracles", {false, "dataset unavailable: " + load_error});
  }

  std::optional<CvOutcome> cv;
  if (set && !no_train) {
    progress("5-fold cross-validation of model-1 on V06 (default training config)");
    cv = cross_validate(*set);
    report(2, "model-1 cross-validated accuracy", cv->accuracy);
    report(3, "int8 accuracy parity", cv->parity);
  } else {
    const std::string why = set ? "skipped (--no-train)" : "dataset unavailable";
    report(2, "model-1 cross-validated accuracy", {false, why});
    report(3, "int8 accuracy parity", {false, why});
  }

  // Trained fold-0 model when available; otherwise a calibrated untrained one.
  const auto spec1 = arch::reference_model_1(96), spec2 = arch::reference_model_2(96);
  const arch::Model model1 = cv ? cv->fold0_model : arch::build_model(spec1, 1);
  const quant::QModel q1 = cv ? *cv->fold0_qmodel : random_qmodel(spec1, 1);
  const arch::Model model2 = arch::build_model(spec2, 2);
  const quant::QModel q2 = random_qmodel(spec2, 2);

  report(4, "size budget", size_budget(model1, q1));
  report(5, "gradient suite", gradient_suite());
  report(6, "engine bit-exactness and blob robustness",
         engine_exactness({q1, random_qmodel(spec1, 11), q2}, {model1, model2}));

  std::vector<std::vector<std::uint8_t>> images;
  if (set) {
    for (std::size_t i = 0; i < set->size(); i += set->size() / 4) images.push_back((*set)[i].pixels);
  }
  Rng rng(77);
  while (images.size() < 6) {
    std::vector<std::uint8_t> img(300 * 300);
    for (auto& p : img) p = static_cast<std::uint8_t>(rng.below(256));
    images.push_back(std::move(img));
  }
  report(7, "arena safety", arena_safety({q1, q2}, images));
  report(8, "budget gating", budget_gating(q1));
  report(9, "declared out of scope; latency statistics", declared(q1));

  const auto failed = std::count_if(g_results.begin(), g_results.end(), [](const auto& r) { return !r.second.pass; });
  std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria fail") << " ("
            << fmt(seconds_since(t0) / 60.0, 1) << " min)" << std::endl;
  return failed == 0 ? 0 : 1;
}
