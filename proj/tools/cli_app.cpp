#include "cli_app.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "pvcrack/arch/search.hpp"
#include "pvcrack/common.hpp"
#include "pvcrack/engine/engine.hpp"
#include "pvcrack/eval/budget.hpp"
#include "pvcrack/nn/image.hpp"
#include "pvcrack/quant/quant.hpp"
#include "pvcrack/train/train.hpp"

#ifndef PVCRACK_DEFAULT_DATA
#define PVCRACK_DEFAULT_DATA ""
#endif

namespace pvcrack::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---------------------------------------------------------------- manifest

Artifact describe_artifact(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return {path.string(), bytes.size(), crc32(bytes)};
}

std::string RunManifest::to_json() const {
  ordered_json j;
  j["command"] = command;
  j["argv"] = argv;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  ordered_json s = ordered_json::object();
  for (const auto& [k, v] : seeds) s[k] = v;
  j["seeds"] = s;
  j["variant"] = variant;
  j["deterministic"] = deterministic;
  j["inputs"] = inputs;
  ordered_json outs = ordered_json::array();
  for (const auto& a : outputs) {
    std::ostringstream crc;
    crc << std::hex << std::setw(8) << std::setfill('0') << a.crc32;
    outs.push_back({{"path", a.path}, {"bytes", a.bytes}, {"crc32", crc.str()}});
  }
  j["outputs"] = outs;
  j["started_utc"] = started_utc;
  j["finished_utc"] = finished_utc;
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path,
                                                                  const std::string& command) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::vector<std::pair<std::string, std::string>> out;
  if (trim(text).starts_with("{")) {
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.contains("command") || !j.contains("config") || !j["config"].is_object())
      throw UsageError("config file " + path.string() + " is not a run manifest");
    if (j["command"].get<std::string>() != command)
      throw UsageError("run manifest " + path.string() + " is for '" + j["command"].get<std::string>() +
                       "', not '" + command + "'");
    for (const auto& [k, v] : j["config"].items())
      if (k != "config") out.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
    return out;
  }
  std::istringstream lines(text);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    while (key.starts_with("-")) key.erase(0, 1);
    std::replace(key.begin(), key.end(), '_', '-');
    out.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return out;
}

namespace {

// ---------------------------------------------------------------- options

template <typename T>
std::string to_text(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  } else {
    return std::to_string(v);
  }
}

// Binds flags and remembers how to print each resolved value.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    getters_.emplace_back(name, [&var] { return to_text(var); });
    return app_->add_option("--" + name, var, desc)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    getters_.emplace_back(name, [&var] { return to_text(var); });
    return app_->add_flag("--" + name, var, desc + " [default: off]");
  }

  std::map<std::string, std::string> resolved() const {
    std::map<std::string, std::string> m;
    for (const auto& [k, f] : getters_) m[k] = f();
    return m;
  }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> getters_;
};

struct Common {
  std::string config;
  bool deterministic = false;
};

struct DataOpts {
  std::string data;
  std::string variant = "06";
  int folds = 5;
  std::uint64_t split_seed = 7;
  std::string label_mode = "binary";
};

struct TrainOpts {
  int epochs = 60;
  int batch = 32;
  std::string optimizer = "adam";
  double lr = 1e-3;
  double momentum = 0.0;
  int patience = 10;
  std::string augment = "off";
  int freeze = 0;
  std::uint64_t seed = 1;
};

struct ArchOpts {
  std::string arch = "model1";
  int input_side = 96;
};

void add_common(Flags& f, CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config,
                  "key=value file (or a run manifest) supplying flag values; explicit flags win");
  f.flag("deterministic", c.deterministic, "Single-ordered reductions everywhere");
}

void add_data(Flags& f, DataOpts& d) {
  const char* env = std::getenv(kDataEnv);
  d.data = env && *env ? env : PVCRACK_DEFAULT_DATA;
  f.add("data", d.data, std::string("Dataset root (labels.csv + images/); default from ") + kDataEnv);
  f.add("variant", d.variant, "Dataset variant 01..08");
  f.add("folds", d.folds, "Cross-validation folds");
  f.add("split-seed", d.split_seed, "Seed of the variant shuffle and fold assignment");
  f.add("label-mode", d.label_mode, "binary or fourclass (variants 01-03)");
}

void add_train(Flags& f, TrainOpts& t, bool finetune) {
  f.add("epochs", t.epochs, "Training epochs");
  f.add("batch", t.batch, "Mini-batch size");
  f.add("optimizer", t.optimizer, "adam or sgd");
  f.add("lr", t.lr, "Learning rate");
  f.add("momentum", t.momentum, "SGD momentum");
  f.add("patience", t.patience, "Early-stop patience on validation accuracy (0 disables)");
  f.add("augment", t.augment,
        finetune ? "off, standard or ladder (follow --configuration)" : "off or standard");
  f.add("freeze", t.freeze,
        finetune ? "Frozen leading parameterized layers (-1 follows --configuration)"
                 : "Frozen leading parameterized layers");
  f.add("seed", t.seed, "Initialization and training seed");
}

void add_arch(Flags& f, ArchOpts& a) {
  f.add("arch", a.arch, "model1, model2 or a spec file path");
  f.add("input-side", a.input_side, "Input side for the reference models");
}

// ---------------------------------------------------------------- helpers

template <typename F>
auto as_usage(const std::string& flag, F&& fn) {
  try {
    return fn();
  } catch (const ParamError& e) {
    throw UsageError("--" + flag + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError("--" + flag + ": " + e.what());
  }
}

std::string require_data_root(const DataOpts& d) {
  if (d.data.empty())
    throw UsageError(std::string("no dataset root: pass --data or set ") + kDataEnv);
  if (!fs::exists(fs::path(d.data) / "labels.csv"))
    throw LoadError("dataset root " + d.data + " has no labels.csv");
  return d.data;
}

data::LabeledDataset load_dataset(const DataOpts& d) {
  const auto id = as_usage("variant", [&] { return data::parse_variant(d.variant); });
  data::LabelMode mode;
  if (d.label_mode == "binary") {
    mode = data::LabelMode::Binary;
  } else if (d.label_mode == "fourclass") {
    mode = data::LabelMode::FourClass;
  } else {
    throw UsageError("--label-mode must be binary or fourclass");
  }
  if (d.folds < 2) throw UsageError("--folds must be >= 2");
  const auto set = data::load_elpv(require_data_root(d));
  return data::build_variant(set, id, d.split_seed, mode);
}

data::SplitPlan make_plan(const data::LabeledDataset& ds, const DataOpts& d) {
  return data::make_folds(ds, d.folds, d.split_seed);
}

void check_fold(int fold, const DataOpts& d) {
  if (fold < 0 || fold >= d.folds)
    throw UsageError("--fold must be in [0, " + std::to_string(d.folds) + ")");
}

arch::ModelSpec resolve_arch(const ArchOpts& a, int num_classes) {
  arch::ModelSpec spec;
  if (a.arch == "model1") {
    spec = arch::reference_model_1(a.input_side);
  } else if (a.arch == "model2") {
    spec = arch::reference_model_2(a.input_side);
  } else {
    return arch::load_spec_file(a.arch);
  }
  if (num_classes != spec.num_classes) {
    auto& head = spec.layers.back();
    head.out_ch = num_classes;
    spec.num_classes = num_classes;
  }
  arch::validate(spec);
  return spec;
}

train::TrainConfig make_train_config(const TrainOpts& t, bool deterministic) {
  train::TrainConfig cfg;
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch;
  cfg.optimizer.kind = as_usage("optimizer", [&] { return nn::parse_optim_kind(t.optimizer); });
  cfg.optimizer.learning_rate = t.lr;
  cfg.optimizer.momentum = t.momentum;
  if (t.patience < 0) throw UsageError("--patience must be >= 0");
  cfg.early_stop_patience = t.patience > 0 ? std::optional<int>(t.patience) : std::nullopt;
  if (t.augment == "standard") {
    cfg.augment = data::AugmentPolicy::standard();
  } else if (t.augment != "off" && t.augment != "ladder") {
    throw UsageError("--augment must be off or standard");
  }
  cfg.freeze_prefix = t.freeze;
  cfg.seed = t.seed;
  cfg.deterministic = deterministic;
  as_usage("epochs", [&] {
    cfg.validate();
    return 0;
  });
  return cfg;
}

fs::path sibling(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string history_text(const train::History& h) {
  std::ostringstream os;
  os << "epochs_run=" << h.epochs() << "\n"
     << "best_epoch=" << h.best_epoch << "\n"
     << "stopped_early=" << (h.stopped_early ? "true" : "false") << "\n";
  for (int e = 0; e < h.epochs(); ++e) {
    const auto i = static_cast<std::size_t>(e);
    os << "epoch." << e << "=loss:" << h.train_loss[i] << ",train_accuracy:" << h.train_accuracy[i]
       << ",val_accuracy:" << h.val_accuracy[i] << "\n";
  }
  return os.str();
}

train::EpochCallback progress() {
  return [](int epoch, const train::History& h) {
    const auto i = static_cast<std::size_t>(epoch);
    std::cerr << "epoch " << epoch + 1 << ": loss " << std::fixed << std::setprecision(4)
              << h.train_loss[i] << "  train_acc " << h.train_accuracy[i] << "  val_acc "
              << h.val_accuracy[i] << std::defaultfloat << "\n";
  };
}

// Predictor for any blob scheme; int8 goes through the engine.
struct LoadedModel {
  engine::DecodedBlob decoded;
  std::optional<arch::Model> float_model;
  std::unique_ptr<engine::EngineInstance> engine;
  const arch::ModelSpec& spec() const { return decoded.spec; }
};

LoadedModel load_model(const std::string& path) {
  if (path.empty()) throw UsageError("--model is required");
  const auto bytes = engine::load_blob(path);
  LoadedModel m;
  m.decoded = engine::parse_blob(bytes);
  if (m.decoded.scheme == format::Scheme::Int8) {
    m.engine = std::make_unique<engine::EngineInstance>(engine::EngineInstance::load(bytes));
  } else {
    m.float_model = engine::float_model(m.decoded);
  }
  return m;
}

train::Predictor predictor(LoadedModel& m) {
  if (m.engine) {
    return [&m](const nn::Tensor& x) {
      return m.engine->infer_quantized(quant::quantize_input(x)).class_index;
    };
  }
  return [&m](const nn::Tensor& x) { return train::predict(*m.float_model, x); };
}

std::map<std::string, std::string> read_sidecar(const fs::path& blob) {
  std::map<std::string, std::string> kv;
  std::ifstream in(sibling(blob, ".manifest"));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::vector<int> parse_int_list(const std::string& flag, const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(trim(item), &used));
      if (used != trim(item).size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--" + flag + ": '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw UsageError("--" + flag + " must list at least one value");
  return out;
}

std::vector<std::string> parse_word_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(trim(item));
  return out;
}

// ---------------------------------------------------------------- commands

struct Context {
  RunManifest manifest;
  fs::path manifest_path;

  void output(const fs::path& p) { manifest.outputs.push_back(describe_artifact(p)); }
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::unique_ptr<Flags> flags;
  Common common;
  std::function<void(Context&)> run;
};

void cmd_prepare(Command& c, DataOpts& d, std::string& out) {
  c.run = [&c, &d, &out](Context& ctx) {
    const auto ds = load_dataset(d);
    const auto plan = make_plan(ds, d);
    const fs::path path(out);
    ensure_parent(path);
    data::write_manifest(path, ds, plan);
    ctx.manifest_path = sibling(path, ".run.json");
    ctx.output(path);
    ctx.manifest.inputs.push_back(d.data);
    ctx.manifest.seeds["split_seed"] = d.split_seed;
    std::cout << "variant " << data::variant_name(ds.variant_id) << ": " << ds.samples.size()
              << " samples, " << ds.forced_test.size() << " forced-test, " << ds.num_classes
              << " classes\nfold sizes:";
    for (auto n : plan.fold_sizes()) std::cout << " " << n;
    std::cout << "\nwrote " << path.string() << "\n";
    (void)c;
  };
}

void write_train_outputs(Context& ctx, const fs::path& out, const arch::Model& model,
                         const std::string& command, const train::TrainConfig& cfg,
                         const DataOpts& d, int fold, const train::History& h,
                         const eval::MetricsReport& rep) {
  std::ostringstream side;
  side << "command=" << command << "\n"
       << "variant=" << d.variant << "\n"
       << "fold=" << fold << "\n"
       << "split_seed=" << d.split_seed << "\n"
       << train::format_config(cfg) << "val_accuracy=" << rep.accuracy << "\n"
       << "val_macro_f1=" << rep.macro_f1 << "\n"
       << history_text(h);
  ensure_parent(out);
  train::save_checkpoint(out, model, side.str());
  ctx.output(out);
  ctx.output(sibling(out, ".manifest"));
  ctx.manifest_path = sibling(out, ".run.json");
}

void cmd_train(Command& c, DataOpts& d, TrainOpts& t, ArchOpts& a, int& fold, std::string& out) {
  c.run = [&](Context& ctx) {
    check_fold(fold, d);
    const auto cfg = make_train_config(t, c.common.deterministic);
    const auto ds = load_dataset(d);
    const auto plan = make_plan(ds, d);
    const auto spec = resolve_arch(a, ds.num_classes);
    as_usage("freeze", [&] {
      cfg.validate(&spec);
      return 0;
    });
    const auto model = arch::build_model(spec, t.seed);
    const auto inputs = train::prepare_inputs(ds, spec.input_side);
    const auto res = train::train(model, inputs, ds, plan, fold, cfg, progress());
    const auto rep = train::evaluate_with(
        [&](const nn::Tensor& x) { return train::predict(res.model, x); }, inputs, ds, plan, fold, false);
    std::cout << eval::render_metrics(rep);
    write_train_outputs(ctx, out, res.model, "train", cfg, d, fold, res.history, rep);
    ctx.manifest.inputs.push_back(d.data);
    ctx.manifest.seeds["seed"] = t.seed;
    ctx.manifest.seeds["split_seed"] = d.split_seed;
  };
}

void cmd_finetune(Command& c, DataOpts& d, TrainOpts& t, std::string& base, int& configuration,
                  int& fold, std::string& out) {
  c.run = [&](Context& ctx) {
    check_fold(fold, d);
    if (base.empty()) throw UsageError("--base is required");
    if (configuration < 1 || configuration > 3) throw UsageError("--configuration must be 1, 2 or 3");
    const std::string augment = t.augment;
    TrainOpts resolved = t;
    if (resolved.freeze < 0) resolved.freeze = 0;
    auto cfg = make_train_config(resolved, c.common.deterministic);
    const auto base_model = train::load_checkpoint(base);
    cfg = train::ladder_config(base_model.spec, configuration, cfg);
    if (t.freeze >= 0) cfg.freeze_prefix = t.freeze;
    if (augment == "off") cfg.augment.reset();
    if (augment == "standard") cfg.augment = data::AugmentPolicy::standard();
    as_usage("freeze", [&] {
      cfg.validate(&base_model.spec);
      return 0;
    });
    const auto ds = load_dataset(d);
    const auto plan = make_plan(ds, d);
    const auto inputs = train::prepare_inputs(ds, base_model.spec.input_side);
    std::cerr << "configuration " << configuration << ": freeze_prefix " << cfg.freeze_prefix
              << ", augment " << (cfg.augment ? "standard" : "off") << "\n";
    const auto res = train::fine_tune(base_model, inputs, ds, plan, fold, cfg, progress());
    const auto rep = train::evaluate_with(
        [&](const nn::Tensor& x) { return train::predict(res.model, x); }, inputs, ds, plan, fold, false);
    std::cout << eval::render_metrics(rep);
    write_train_outputs(ctx, out, res.model, "finetune", cfg, d, fold, res.history, rep);
    ctx.manifest.inputs.push_back(base);
    ctx.manifest.inputs.push_back(d.data);
    ctx.manifest.seeds["seed"] = t.seed;
    ctx.manifest.seeds["split_seed"] = d.split_seed;
  };
}

void cmd_evaluate(Command& c, DataOpts& d, std::string& model_path, int& fold, bool& forced,
                  std::string& out) {
  c.run = [&](Context& ctx) {
    check_fold(fold, d);
    auto m = load_model(model_path);
    const auto ds = load_dataset(d);
    const auto plan = make_plan(ds, d);
    if (m.spec().num_classes != ds.num_classes)
      throw ShapeError("model has " + std::to_string(m.spec().num_classes) + " classes, variant has " +
                       std::to_string(ds.num_classes));
    const auto inputs = train::prepare_inputs(ds, m.spec().input_side);
    const auto rep = train::evaluate_with(predictor(m), inputs, ds, plan, fold, forced);
    std::cout << "scheme " << format::scheme_name(m.decoded.scheme) << ", "
              << (forced ? std::string("forced test") : "fold " + std::to_string(fold)) << "\n"
              << eval::render_metrics(rep);
    const fs::path path(out);
    ensure_parent(path);
    write_text_file(path, eval::metrics_to_json(rep));
    ctx.output(path);
    ctx.manifest_path = sibling(path, ".run.json");
    ctx.manifest.inputs = {model_path, d.data};
    ctx.manifest.seeds["split_seed"] = d.split_seed;
  };
}

void cmd_quantize(Command& c, DataOpts& d, std::string& model_path, std::string& scheme, int& fold,
                  int& calib, double& quantile, std::string& out) {
  c.run = [&](Context& ctx) {
    check_fold(fold, d);
    if (model_path.empty()) throw UsageError("--model is required");
    if (calib < 1) throw UsageError("--calib-samples must be >= 1");
    if (!(quantile > 0.0 && quantile <= 1.0)) throw UsageError("--range-quantile must be in (0, 1]");
    const auto target = as_usage("scheme", [&] { return format::parse_scheme(scheme); });
    const auto model = train::load_checkpoint(model_path);
    const fs::path path(out);
    ensure_parent(path);
    std::ostringstream side;
    side << "command=quantize\nsource=" << model_path << "\nscheme=" << scheme << "\n";
    if (target == format::Scheme::Fp32) throw UsageError("--scheme must be int8 or fp16");
    if (target == format::Scheme::Fp16) {
      const auto hm = quant::quantize_fp16(model);
      engine::save_blob(path, engine::serialize(hm));
      side << "saturated=" << hm.saturated << "\n";
      std::cout << "fp16 blob " << fs::file_size(path) << " bytes, " << hm.saturated
                << " saturated values\n";
    } else {
      const auto ds = load_dataset(d);
      const auto plan = make_plan(ds, d);
      const auto inputs = train::prepare_inputs(ds, model.spec.input_side);
      const auto train_idx = train::training_indices(plan, fold);
      std::vector<nn::Tensor> cal;
      for (std::size_t i = 0; i < train_idx.size() && cal.size() < static_cast<std::size_t>(calib); ++i)
        cal.push_back(inputs.samples[train_idx[i]]);
      const auto qm = quant::quantize_int8(model, quant::calibrate(model, cal, quantile));
      engine::save_blob(path, engine::serialize(qm));
      std::vector<quant::LabeledTensor> val;
      for (std::size_t idx : plan.members(fold)) val.push_back({inputs.samples[idx], ds.samples[idx].class_index});
      const auto qr = quant::quant_error_stats(model, qm, val);
      const auto report_path = sibling(path, ".quant.txt");
      quant::write_quant_report(report_path, qr, arch::estimate_size(model.spec));
      ctx.output(report_path);
      std::cout << quant::format_quant_report(qr, arch::estimate_size(model.spec));
      side << "accuracy=" << qr.accuracy_int8 << "\naccuracy_float=" << qr.accuracy_float
           << "\ncalibration_samples=" << cal.size() << "\nrange_quantile=" << quantile << "\nfold=" << fold << "\nvariant=" << d.variant
           << "\nsplit_seed=" << d.split_seed << "\n";
      ctx.manifest.inputs.push_back(d.data);
      ctx.manifest.seeds["split_seed"] = d.split_seed;
    }
    const auto carried = read_sidecar(model_path);
    if (auto it = carried.find("cv_accuracy"); it != carried.end())
      side << "cv_accuracy_float=" << it->second << "\n";
    write_text_file(sibling(path, ".manifest"), side.str());
    ctx.output(path);
    ctx.output(sibling(path, ".manifest"));
    ctx.manifest_path = sibling(path, ".run.json");
    ctx.manifest.inputs.insert(ctx.manifest.inputs.begin(), model_path);
  };
}

void cmd_export(Command& c, ArchOpts& a, std::string& model_path, std::string& scheme,
                std::uint64_t& seed, int& classes, std::string& spec_out, std::string& out) {
  c.run = [&](Context& ctx) {
    const auto target = as_usage("scheme", [&] { return format::parse_scheme(scheme); });
    if (target == format::Scheme::Int8)
      throw UsageError("int8 export needs calibration data; use the quantize command");
    arch::Model model;
    if (!model_path.empty()) {
      model = train::load_checkpoint(model_path);
      ctx.manifest.inputs.push_back(model_path);
    } else {
      if (classes < 2) throw UsageError("--classes must be >= 2");
      model = arch::build_model(resolve_arch(a, classes), seed);
      ctx.manifest.seeds["seed"] = seed;
    }
    const fs::path path(out);
    ensure_parent(path);
    const auto blob = target == format::Scheme::Fp16 ? engine::serialize(quant::quantize_fp16(model))
                                                     : engine::serialize(model);
    engine::save_blob(path, blob);
    ctx.output(path);
    if (!spec_out.empty()) {
      arch::save_spec_file(model.spec, spec_out);
      ctx.output(spec_out);
    }
    const auto size = arch::estimate_size(model.spec);
    std::cout << "wrote " << path.string() << " (" << blob.size() << " bytes, " << scheme << "); "
              << size.param_count << " parameters, int8 estimate " << size.bytes_int8 << " bytes\n";
    ctx.manifest_path = sibling(path, ".run.json");
  };
}

void cmd_infer(Command& c, std::string& model_path, std::string& image, std::string& out) {
  c.run = [&](Context& ctx) {
    if (image.empty()) throw UsageError("--image is required");
    auto m = load_model(model_path);
    int w = 0, h = 0;
    const auto pixels = data::read_png_gray(image, w, h);
    engine::InferResult r;
    if (m.engine) {
      r = m.engine->infer(pixels, h, w);
    } else {
      r.logits = nn::forward<float>(m.float_model->spec.layers, m.float_model->params,
                                    nn::resize_to_unit(pixels, h, w, m.spec().input_side));
      for (std::size_t i = 1; i < r.logits.size(); ++i)
        if (r.logits[i] > r.logits[static_cast<std::size_t>(r.class_index)]) r.class_index = static_cast<int>(i);
    }
    std::cout << "class " << r.class_index << "\nlogits";
    ordered_json j;
    j["image"] = image;
    j["model"] = model_path;
    j["scheme"] = format::scheme_name(m.decoded.scheme);
    j["class_index"] = r.class_index;
    std::vector<double> logits;
    for (std::size_t i = 0; i < r.logits.size(); ++i) {
      logits.push_back(r.logits[i]);
      std::cout << " " << r.logits[i];
    }
    std::cout << "\n";
    j["logits"] = logits;
    const fs::path path(out);
    ensure_parent(path);
    write_text_file(path, j.dump(2) + "\n");
    ctx.output(path);
    ctx.manifest_path = sibling(path, ".run.json");
    ctx.manifest.inputs = {model_path, image};
  };
}

eval::Latency to_latency(const engine::LatencyStats& s) { return {s.p50_ms, s.p95_ms, s.mean_ms}; }

void cmd_benchmark(Command& c, std::string& model_path, int& runs, int& warmup, std::string& out) {
  c.run = [&](Context& ctx) {
    if (runs < 1) throw UsageError("--runs must be >= 1");
    if (warmup < 0) throw UsageError("--warmup must be >= 0");
    auto m = load_model(model_path);
    engine::LatencyStats s;
    if (m.engine) {
      s = engine::benchmark(*m.engine, runs, warmup);
    } else {
      const int side = m.spec().input_side;
      const nn::Tensor x({side, side, 1}, std::vector<float>(static_cast<std::size_t>(side) * side, 128.0f / 255.0f));
      std::vector<nn::NodeTrace<float>> trace;
      for (int i = 0; i < warmup; ++i) nn::forward<float>(m.float_model->spec.layers, m.float_model->params, x, &trace);
      std::vector<double> ms;
      for (int i = 0; i < runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        nn::forward<float>(m.float_model->spec.layers, m.float_model->params, x, &trace);
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      }
      s = engine::latency_stats(ms);
    }
    const bool ordered = s.min_ms <= s.p50_ms && s.p50_ms <= s.p95_ms && s.p95_ms <= s.max_ms &&
                         s.min_ms <= s.mean_ms && s.mean_ms <= s.max_ms;
    std::cout << std::fixed << std::setprecision(4) << "scheme " << format::scheme_name(m.decoded.scheme)
              << ", " << s.runs << " runs\nmin " << s.min_ms << " ms  p50 " << s.p50_ms << " ms  p95 "
              << s.p95_ms << " ms  max " << s.max_ms << " ms  mean " << s.mean_ms << " ms\n"
              << std::defaultfloat;
    ordered_json j;
    j["model"] = model_path;
    j["scheme"] = format::scheme_name(m.decoded.scheme);
    j["runs"] = s.runs;
    j["warmup"] = warmup;
    j["mean_ms"] = s.mean_ms;
    j["p50_ms"] = s.p50_ms;
    j["p95_ms"] = s.p95_ms;
    j["min_ms"] = s.min_ms;
    j["max_ms"] = s.max_ms;
    j["ordering_ok"] = ordered;
    if (m.engine) j["arena_bytes"] = m.engine->arena_bytes();
    const fs::path path(out);
    ensure_parent(path);
    write_text_file(path, j.dump(2) + "\n");
    ctx.output(path);
    ctx.manifest_path = sibling(path, ".run.json");
    ctx.manifest.inputs = {model_path};
    if (!ordered) throw NumericError("latency statistics violate min <= p50 <= p95 <= max");
  };
}

struct SearchOpts {
  int trials = 6;
  std::size_t budget = 100 * eval::kKiB;
  int min_blocks = 1;
  int max_blocks = 3;
  std::string block_kinds = "vgg,inception";
  std::string channels = "4,8,16,32";
  std::string heads = "gap,flatten";
  std::string dense_widths = "16,32";
  std::string input_sides = "64,96";
};

void cmd_search(Command& c, DataOpts& d, TrainOpts& t, SearchOpts& s, std::string& out) {
  c.run = [&](Context& ctx) {
    if (s.trials < 1) throw UsageError("--trials must be >= 1");
    arch::SearchSpace space;
    space.min_blocks = s.min_blocks;
    space.max_blocks = s.max_blocks;
    space.block_kinds.clear();
    for (const auto& w : parse_word_list(s.block_kinds)) {
      if (w == "vgg") space.block_kinds.push_back(arch::BlockKind::Vgg);
      else if (w == "inception") space.block_kinds.push_back(arch::BlockKind::Inception);
      else throw UsageError("--block-kinds: unknown kind '" + w + "'");
    }
    space.heads.clear();
    for (const auto& w : parse_word_list(s.heads)) {
      if (w == "gap") space.heads.push_back(arch::HeadKind::GlobalAvgPool);
      else if (w == "flatten") space.heads.push_back(arch::HeadKind::Flatten);
      else throw UsageError("--heads: unknown head '" + w + "'");
    }
    space.channel_choices = parse_int_list("channels", s.channels);
    space.dense_widths = parse_int_list("dense-widths", s.dense_widths);
    space.input_sides = parse_int_list("input-sides", s.input_sides);
    const auto cfg = make_train_config(t, c.common.deterministic);
    const auto ds = load_dataset(d);
    space.num_classes = ds.num_classes;
    as_usage("trials", [&] {
      space.validate();
      return 0;
    });
    const auto result = arch::random_search(
        space, s.budget, s.trials, cfg, ds, t.seed, [](int trial, const arch::SearchCandidate* cand) {
          std::cerr << "trial " << trial << ": ";
          if (cand) {
            std::cerr << "val_acc " << cand->val_accuracy << ", int8 " << cand->size.bytes_int8 << " bytes\n";
          } else {
            std::cerr << "discarded\n";
          }
        });
    ordered_json j;
    j["status"] = result.status();
    j["trials"] = result.trials;
    j["over_budget"] = result.over_budget;
    j["unsupported"] = result.unsupported;
    j["budget_bytes_int8"] = s.budget;
    ordered_json ranked = ordered_json::array();
    for (const auto& cand : result.ranked)
      ranked.push_back({{"trial", cand.trial},
                        {"val_accuracy", cand.val_accuracy},
                        {"param_count", cand.size.param_count},
                        {"bytes_fp32", cand.size.bytes_fp32},
                        {"bytes_fp16", cand.size.bytes_fp16},
                        {"bytes_int8", cand.size.bytes_int8},
                        {"spec", arch::format_spec(cand.spec)}});
    j["ranked"] = ranked;
    const fs::path path(out);
    ensure_parent(path);
    write_text_file(path, j.dump(2) + "\n");
    ctx.output(path);
    std::cout << "search: " << result.status() << " (" << result.ranked.size() << " trained, "
              << result.over_budget << " over budget, " << result.unsupported << " unsupported)\n";
    if (result.feasible()) {
      const auto best = sibling(path, ".best.spec");
      arch::save_spec_file(result.ranked.front().spec, best.string());
      ctx.output(best);
      std::cout << "best: trial " << result.ranked.front().trial << ", val_acc "
                << result.ranked.front().val_accuracy << ", int8 " << result.ranked.front().size.bytes_int8
                << " bytes -> " << best.string() << "\n";
    }
    ctx.manifest_path = sibling(path, ".run.json");
    ctx.manifest.inputs = {d.data};
    ctx.manifest.seeds["seed"] = t.seed;
    ctx.manifest.seeds["split_seed"] = d.split_seed;
  };
}

void cmd_gate(Command& c, std::string& profile, std::string& dir, int& bench_runs, std::string& out) {
  c.run = [&](Context& ctx) {
    const auto env = eval::parse_environment(profile);
    if (dir.empty()) throw UsageError("--candidates is required");
    if (!fs::is_directory(dir)) throw LoadError("candidate directory " + dir + " does not exist");
    if (bench_runs < 0) throw UsageError("--bench-runs must be >= 0");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".pvtm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw LoadError("no .pvtm candidates in " + dir);
    std::vector<eval::Candidate> cands;
    for (const auto& f : files) {
      const auto bytes = engine::load_blob(f);
      const auto decoded = engine::parse_blob(bytes);
      eval::Candidate cand;
      cand.name = f.filename().string();
      cand.scheme = decoded.scheme;
      cand.blob_bytes = bytes.size();
      if (decoded.scheme == format::Scheme::Int8) {
        auto eng = engine::EngineInstance::load(bytes);
        cand.arena_bytes = eng.arena_bytes();
        if (bench_runs > 0) cand.latency = to_latency(engine::benchmark(eng, bench_runs, 3));
      }
      const auto side = read_sidecar(f);
      for (const char* key : {"cv_accuracy", "accuracy", "val_accuracy"}) {
        if (auto it = side.find(key); it != side.end()) {
          try {
            cand.accuracy = std::stod(it->second);
          } catch (const std::exception&) {
            throw LoadError("bad " + std::string(key) + " in " + sibling(f, ".manifest").string());
          }
          break;
        }
      }
      cands.push_back(std::move(cand));
      ctx.manifest.inputs.push_back(f.string());
    }
    const auto rep = eval::budget_gate(cands, eval::BudgetProfile::defaults(env));
    std::cout << eval::render_selection(rep);
    const fs::path path(out);
    ensure_parent(path);
    write_text_file(path, eval::selection_to_json(rep));
    ctx.output(path);
    ctx.manifest_path = sibling(path, ".run.json");
  };
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Crack classification for EL solar-cell images: data, training, quantization and deployment"};
  app.name("pvcrack");
  app.require_subcommand(0, 1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& desc) -> Command& {
    auto c = std::make_unique<Command>();
    c->name = name;
    c->app = app.add_subcommand(name, desc);
    c->flags = std::make_unique<Flags>(c->app);
    add_common(*c->flags, c->app, c->common);
    commands.push_back(std::move(c));
    return *commands.back();
  };

  // Option storage outlives parsing and the command bodies.
  DataOpts d_prepare, d_train, d_finetune, d_eval, d_quant, d_search;
  TrainOpts t_train, t_finetune, t_search;
  t_finetune.freeze = -1;
  t_finetune.augment = "ladder";
  t_search.epochs = 3;
  t_search.patience = 0;
  ArchOpts a_train, a_export;
  SearchOpts s_search;
  int fold_train = 0, fold_finetune = 0, fold_eval = 0, fold_quant = 0;
  int configuration = 2, calib = quant::kDefaultCalibrationSamples, runs = 100, warmup = 10, bench_runs = 0, export_classes = 2;
  bool forced = false;
  double range_quantile = quant::kDefaultSampleQuantile;
  std::uint64_t export_seed = 1;
  std::string out_prepare = "split_manifest.tsv", out_train = "model.pvtm", out_finetune = "finetuned.pvtm",
              out_eval = "evaluation.json", out_quant = "model_int8.pvtm", out_export = "export.pvtm",
              out_infer = "infer.json", out_bench = "benchmark.json", out_search = "search.json",
              out_gate = "selection.json";
  std::string base_model, eval_model, quant_model, quant_scheme = "int8", export_model,
              export_scheme = "fp32", export_spec, infer_model, infer_image, bench_model,
              gate_profile = "C", gate_dir;

  {
    auto& c = make("prepare", "Load the dataset, build a variant and folds, write the split manifest");
    add_data(*c.flags, d_prepare);
    c.flags->add("out", out_prepare, "Split manifest path (id, class, fold, partition)");
    cmd_prepare(c, d_prepare, out_prepare);
  }
  {
    auto& c = make("train", "Train a model on all folds but --fold and write an fp32 checkpoint");
    add_data(*c.flags, d_train);
    add_arch(*c.flags, a_train);
    add_train(*c.flags, t_train, false);
    c.flags->add("fold", fold_train, "Validation fold");
    c.flags->add("out", out_train, "Checkpoint path (.pvtm)");
    cmd_train(c, d_train, t_train, a_train, fold_train, out_train);
  }
  {
    auto& c = make("finetune", "Fine-tune a checkpoint under configuration 1, 2 or 3");
    add_data(*c.flags, d_finetune);
    add_train(*c.flags, t_finetune, true);
    c.flags->add("base", base_model, "Base fp32 checkpoint");
    c.flags->add("configuration", configuration,
                 "1 head only, 2 last feature block + head, 3 = 2 with augmentation");
    c.flags->add("fold", fold_finetune, "Validation fold");
    c.flags->add("out", out_finetune, "Checkpoint path (.pvtm)");
    cmd_finetune(c, d_finetune, t_finetune, base_model, configuration, fold_finetune, out_finetune);
  }
  {
    auto& c = make("evaluate", "Evaluate a model blob (any scheme) on a fold or the forced-test set");
    add_data(*c.flags, d_eval);
    c.flags->add("model", eval_model, "Model blob (.pvtm)");
    c.flags->add("fold", fold_eval, "Fold to evaluate");
    c.flags->flag("forced-test", forced, "Evaluate the forced-test partition (variants 04/05)");
    c.flags->add("out", out_eval, "Metrics report (JSON)");
    cmd_evaluate(c, d_eval, eval_model, fold_eval, forced, out_eval);
  }
  {
    auto& c = make("quantize", "Quantize an fp32 checkpoint to int8 (calibrated) or fp16");
    add_data(*c.flags, d_quant);
    c.flags->add("model", quant_model, "fp32 checkpoint");
    c.flags->add("scheme", quant_scheme, "int8 or fp16");
    c.flags->add("fold", fold_quant, "Calibrate on this fold's training partition, report on its validation fold");
    c.flags->add("calib-samples", calib, "Calibration samples");
    c.flags->add("range-quantile", range_quantile,
                 "Quantile of per-image activation extremes used as range (1 = min/max)");
    c.flags->add("out", out_quant, "Output blob (.pvtm)");
    cmd_quantize(c, d_quant, quant_model, quant_scheme, fold_quant, calib, range_quantile, out_quant);
  }
  {
    auto& c = make("export", "Write a float deployment blob from a checkpoint or an untrained architecture");
    add_arch(*c.flags, a_export);
    c.flags->add("model", export_model, "fp32 checkpoint (empty: build --arch untrained)");
    c.flags->add("scheme", export_scheme, "fp32 or fp16");
    c.flags->add("seed", export_seed, "Initialization seed when building --arch");
    c.flags->add("classes", export_classes, "Class count when building --arch");
    c.flags->add("spec-out", export_spec, "Also write the model spec text here");
    c.flags->add("out", out_export, "Output blob (.pvtm)");
    cmd_export(c, a_export, export_model, export_scheme, export_seed, export_classes, export_spec, out_export);
  }
  {
    auto& c = make("infer", "Classify one cell image");
    c.flags->add("model", infer_model, "Model blob (.pvtm)");
    c.flags->add("image", infer_image, "8-bit grayscale PNG (300x300 or the model input size)");
    c.flags->add("out", out_infer, "Result (JSON)");
    cmd_infer(c, infer_model, infer_image, out_infer);
  }
  {
    auto& c = make("benchmark", "Host latency of a model blob on a fixed input");
    c.flags->add("model", bench_model, "Model blob (.pvtm)");
    c.flags->add("runs", runs, "Timed runs");
    c.flags->add("warmup", warmup, "Untimed warmup runs");
    c.flags->add("out", out_bench, "Latency report (JSON)");
    cmd_benchmark(c, bench_model, runs, warmup, out_bench);
  }
  {
    auto& c = make("search", "Random architecture search under an int8 size budget");
    add_data(*c.flags, d_search);
    add_train(*c.flags, t_search, false);
    c.flags->add("trials", s_search.trials, "Sampled architectures");
    c.flags->add("budget-bytes", s_search.budget, "Largest int8 blob accepted");
    c.flags->add("min-blocks", s_search.min_blocks, "Fewest feature blocks");
    c.flags->add("max-blocks", s_search.max_blocks, "Most feature blocks");
    c.flags->add("block-kinds", s_search.block_kinds, "Comma list of vgg, inception");
    c.flags->add("channels", s_search.channels, "Comma list of block widths");
    c.flags->add("heads", s_search.heads, "Comma list of gap, flatten");
    c.flags->add("dense-widths", s_search.dense_widths, "Comma list of hidden dense widths");
    c.flags->add("input-sides", s_search.input_sides, "Comma list of input sides");
    c.flags->add("out", out_search, "Ranked results (JSON); the best spec goes to <out>.best.spec");
    cmd_search(c, d_search, t_search, s_search, out_search);
  }
  {
    auto& c = make("gate", "Check candidate blobs against a deployment budget profile and rank them");
    c.flags->add("profile", gate_profile, "A (no limits), B (8 MB, int8) or C (100 KB blob, 256 KB arena, int8)");
    c.flags->add("candidates", gate_dir, "Directory of .pvtm candidates (accuracy read from <blob>.manifest)");
    c.flags->add("bench-runs", bench_runs, "Timed engine runs per int8 candidate (0 skips latency)");
    c.flags->add("out", out_gate, "Selection report (JSON)");
    cmd_gate(c, gate_profile, gate_dir, bench_runs, out_gate);
  }

  // Config file entries go in front of the user's arguments so flags win.
  std::vector<std::string> argv = args;
  if (!argv.empty()) {
    const std::string& sub = argv[0];
    const bool known = std::any_of(commands.begin(), commands.end(), [&](const auto& c) { return c->name == sub; });
    for (std::size_t i = 1; known && i < argv.size(); ++i) {
      std::string path;
      if (argv[i] == "--config" && i + 1 < argv.size()) path = argv[i + 1];
      else if (argv[i].starts_with("--config=")) path = argv[i].substr(9);
      if (path.empty()) continue;
      std::vector<std::string> injected;
      try {
        for (const auto& [k, v] : read_config_file(path, sub)) injected.push_back("--" + k + "=" + v);
      } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
      } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
      }
      argv.insert(argv.begin() + 1, injected.begin(), injected.end());
      break;
    }
  }

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto& c : commands)
      if (c->app->parsed()) target = c->app;
    std::cout << target->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    const CLI::App* target = &app;
    for (const auto& c : commands)
      if (c->app->parsed()) target = c->app;
    std::cerr << target->help();
    return kExitUsage;
  }

  Command* selected = nullptr;
  for (const auto& c : commands)
    if (c->app->parsed()) selected = c.get();
  if (!selected) {
    std::cerr << app.help();
    return kExitUsage;
  }

  Context ctx;
  ctx.manifest.command = selected->name;
  ctx.manifest.argv = args;
  ctx.manifest.started_utc = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    selected->run(ctx);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  ctx.manifest.config = selected->flags->resolved();
  ctx.manifest.deterministic = selected->common.deterministic;
  if (auto it = ctx.manifest.config.find("variant"); it != ctx.manifest.config.end())
    ctx.manifest.variant = it->second;
  ctx.manifest.finished_utc = utc_now();
  ctx.manifest.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    write_text_file(ctx.manifest_path, ctx.manifest.to_json());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  std::cerr << "run manifest: " << ctx.manifest_path.string() << "\n";
  return kExitOk;
}

}  // namespace pvcrack::cli
