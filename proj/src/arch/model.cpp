#include "pvcrack/arch/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace pvcrack::format {

Scheme parse_scheme(const std::string& s) {
  if (s == "fp32") return Scheme::Fp32;
  if (s == "fp16") return Scheme::Fp16;
  if (s == "int8") return Scheme::Int8;
  throw ParamError("unknown quantization scheme '" + s + "' (fp32, fp16, int8)");
}

}  // namespace pvcrack::format

namespace pvcrack::arch {

std::vector<nn::Shape> propagate_shapes(const ModelSpec& spec) {
  if (spec.input_channels < 1 || spec.input_side < 1) throw SpecError("model: empty input");
  std::vector<nn::Shape> shapes;
  nn::Shape s = spec.input_shape();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    try {
      s = nn::infer_shape(spec.layers[i], s);
    } catch (const ShapeError& e) {
      throw SpecError("layer " + std::to_string(i) + " (" +
                      nn::layer_op_name(spec.layers[i].op) + "): " + e.what());
    }
    shapes.push_back(s);
  }
  return shapes;
}

void validate(const ModelSpec& spec) {
  if (spec.num_classes < 2) throw SpecError("model: num_classes must be >= 2");
  if (spec.layers.empty()) throw SpecError("model: no layers");
  if (spec.input_channels != 1) throw SpecError("model: input_channels must be 1");
  if (spec.input_side < 8) throw SpecError("model: input_side must be >= 8");
  const auto shapes = propagate_shapes(spec);
  if (shapes.back() != nn::Shape{spec.num_classes})
    throw SpecError("model: final layer emits " + nn::shape_str(shapes.back()) + ", expected (" +
                    std::to_string(spec.num_classes) + ") logits");
}

std::size_t param_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& s : nn::param_shapes(spec.layers)) n += nn::shape_size(s);
  return n;
}

std::vector<LayerSpec> make_vgg_block(int in_ch, int out_ch) {
  if (in_ch < 1 || out_ch < 1) throw SpecError("vgg block: channels must be >= 1");
  return {LayerSpec::conv(in_ch, out_ch, 3, 1, 1), LayerSpec::relu(),
          LayerSpec::conv(out_ch, out_ch, 3, 1, 1), LayerSpec::relu(),
          LayerSpec::maxpool(2, 2, 0)};
}

LayerSpec make_inception_block(int in_ch, int b1, int b3_reduce, int b3, int b5_reduce, int b5,
                               int pool_proj) {
  for (int v : {in_ch, b1, b3_reduce, b3, b5_reduce, b5, pool_proj})
    if (v < 1) throw SpecError("inception block: widths must be >= 1");
  std::vector<std::vector<LayerSpec>> branches = {
      {LayerSpec::conv(in_ch, b1, 1), LayerSpec::relu()},
      {LayerSpec::conv(in_ch, b3_reduce, 1), LayerSpec::relu(),
       LayerSpec::conv(b3_reduce, b3, 3, 1, 1), LayerSpec::relu()},
      {LayerSpec::conv(in_ch, b5_reduce, 1), LayerSpec::relu(),
       LayerSpec::conv(b5_reduce, b5, 5, 1, 2), LayerSpec::relu()},
      {LayerSpec::maxpool(3, 1, 1), LayerSpec::conv(in_ch, pool_proj, 1), LayerSpec::relu()},
  };
  LayerSpec l = LayerSpec::inception(in_ch, std::move(branches));
  l.out_ch = b1 + b3 + b5 + pool_proj;
  return l;
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Model m{spec, {}};
  Rng rng(seed);
  for (const auto& shape : nn::param_shapes(spec.layers)) {
    nn::Tensor t(shape);
    if (shape.size() > 1) {
      // fan_in: every extent but the last (output) one.
      std::size_t fan_in = 1;
      for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= static_cast<std::size_t>(shape[i]);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    m.params.push_back(std::move(t));
  }
  return m;
}

namespace {

ModelSpec with_head(std::vector<LayerSpec> stem, int features, int input_side) {
  ModelSpec s;
  s.input_side = input_side;
  s.layers = std::move(stem);
  s.layers.push_back(LayerSpec::global_avg_pool());
  s.layers.push_back(LayerSpec::dense(features, 32));
  s.layers.push_back(LayerSpec::relu());
  s.layers.push_back(LayerSpec::dense(32, 2));
  s.num_classes = 2;
  validate(s);
  return s;
}

void append(std::vector<LayerSpec>& dst, const std::vector<LayerSpec>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

ModelSpec reference_model_1(int input_side) {
  std::vector<LayerSpec> stem;
  append(stem, make_vgg_block(1, 8));
  append(stem, make_vgg_block(8, 16));
  append(stem, make_vgg_block(16, 32));
  return with_head(std::move(stem), 32, input_side);
}

ModelSpec reference_model_2(int input_side) {
  std::vector<LayerSpec> stem;
  append(stem, make_vgg_block(1, 8));
  stem.push_back(make_inception_block(8, 4, 4, 8, 2, 4, 4));
  append(stem, make_vgg_block(20, 32));
  return with_head(std::move(stem), 32, input_side);
}

std::vector<std::size_t> param_unit_starts(const ModelSpec& spec) {
  std::vector<std::size_t> starts;
  std::size_t idx = 0;
  for (const auto& l : spec.layers) {
    const std::size_t n = nn::param_shapes(std::span<const LayerSpec>(&l, 1)).size();
    if (n == 0) continue;
    starts.push_back(idx);
    idx += n;
  }
  starts.push_back(idx);
  return starts;
}

int parameterized_layer_count(const ModelSpec& spec) {
  return static_cast<int>(param_unit_starts(spec).size()) - 1;
}

std::size_t first_trainable_param(const ModelSpec& spec, int freeze_prefix) {
  const auto starts = param_unit_starts(spec);
  const int units = static_cast<int>(starts.size()) - 1;
  if (freeze_prefix < 0 || freeze_prefix > units)
    throw ParamError("freeze_prefix " + std::to_string(freeze_prefix) + " outside [0, " +
                     std::to_string(units) + "]");
  return starts[static_cast<std::size_t>(freeze_prefix)];
}

// ---- text form -------------------------------------------------------------

namespace {

void format_layers(std::ostringstream& os, const std::vector<LayerSpec>& layers, int depth) {
  const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  for (const auto& l : layers) {
    os << indent << nn::layer_op_name(l.op);
    switch (l.op) {
      case LayerOp::Conv:
        os << " in=" << l.in_ch << " out=" << l.out_ch << " k=" << l.kernel
           << " stride=" << l.stride << " pad=" << l.padding;
        break;
      case LayerOp::MaxPool:
        os << " k=" << l.kernel << " stride=" << l.stride << " pad=" << l.padding;
        break;
      case LayerOp::Dense:
        os << " in=" << l.in_ch << " out=" << l.out_ch;
        break;
      case LayerOp::InceptionConcat:
        os << " in=" << l.in_ch;
        break;
      default:
        break;
    }
    os << '\n';
    if (l.op == LayerOp::InceptionConcat) {
      for (const auto& b : l.branches) {
        os << indent << "  branch\n";
        format_layers(os, b, depth + 2);
      }
      os << indent << "end\n";
    }
  }
}

struct Line {
  int number;
  std::string kind;
  std::map<std::string, std::string> kv;
};

int get_int(const Line& ln, const std::string& key, std::optional<int> fallback = std::nullopt) {
  auto it = ln.kv.find(key);
  if (it == ln.kv.end()) {
    if (fallback) return *fallback;
    throw SpecError("spec line " + std::to_string(ln.number) + ": missing '" + key + "'");
  }
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw SpecError("spec line " + std::to_string(ln.number) + ": '" + key +
                    "' is not an integer");
  }
}

class SpecParser {
 public:
  explicit SpecParser(std::vector<Line> lines) : lines_(std::move(lines)) {}

  ModelSpec parse() {
    if (lines_.empty() || lines_[0].kind != "model")
      throw SpecError("spec: first line must be 'model ...'");
    ModelSpec spec;
    spec.input_side = get_int(lines_[0], "input_side");
    spec.input_channels = get_int(lines_[0], "input_channels", 1);
    spec.num_classes = get_int(lines_[0], "num_classes", 2);
    pos_ = 1;
    spec.layers = parse_layers(false);
    if (pos_ != lines_.size())
      throw SpecError("spec line " + std::to_string(lines_[pos_].number) + ": unexpected '" +
                      lines_[pos_].kind + "'");
    validate(spec);
    return spec;
  }

 private:
  std::vector<LayerSpec> parse_layers(bool in_branch) {
    std::vector<LayerSpec> out;
    while (pos_ < lines_.size()) {
      const Line& ln = lines_[pos_];
      if (ln.kind == "branch" || ln.kind == "end") {
        if (!in_branch)
          throw SpecError("spec line " + std::to_string(ln.number) + ": '" + ln.kind +
                          "' outside an inception block");
        return out;
      }
      ++pos_;
      if (ln.kind == "conv") {
        out.push_back(LayerSpec::conv(get_int(ln, "in"), get_int(ln, "out"), get_int(ln, "k"),
                                      get_int(ln, "stride", 1), get_int(ln, "pad", 0)));
      } else if (ln.kind == "relu") {
        out.push_back(LayerSpec::relu());
      } else if (ln.kind == "maxpool") {
        out.push_back(LayerSpec::maxpool(get_int(ln, "k"), get_int(ln, "stride", get_int(ln, "k")),
                                         get_int(ln, "pad", 0)));
      } else if (ln.kind == "gap") {
        out.push_back(LayerSpec::global_avg_pool());
      } else if (ln.kind == "dense") {
        out.push_back(LayerSpec::dense(get_int(ln, "in"), get_int(ln, "out")));
      } else if (ln.kind == "flatten") {
        out.push_back(LayerSpec::flatten());
      } else if (ln.kind == "inception") {
        const int in = get_int(ln, "in");
        std::vector<std::vector<LayerSpec>> branches;
        while (pos_ < lines_.size() && lines_[pos_].kind == "branch") {
          ++pos_;
          branches.push_back(parse_layers(true));
        }
        if (pos_ >= lines_.size() || lines_[pos_].kind != "end")
          throw SpecError("spec line " + std::to_string(ln.number) + ": inception without 'end'");
        ++pos_;
        LayerSpec l = LayerSpec::inception(in, std::move(branches));
        l.out_ch = 0;
        for (const auto& b : l.branches) {
          int ch = in;
          for (const auto& inner : b)
            if (inner.op == LayerOp::Conv) ch = inner.out_ch;
          l.out_ch += ch;
        }
        out.push_back(std::move(l));
      } else {
        throw SpecError("spec line " + std::to_string(ln.number) + ": unknown layer kind '" +
                        ln.kind + "'");
      }
    }
    return out;
  }

  std::vector<Line> lines_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string format_spec(const ModelSpec& spec) {
  std::ostringstream os;
  os << "model input_side=" << spec.input_side << " input_channels=" << spec.input_channels
     << " num_classes=" << spec.num_classes << '\n';
  format_layers(os, spec.layers, 0);
  return os.str();
}

ModelSpec parse_spec(const std::string& text) {
  std::vector<Line> lines;
  std::istringstream is(text);
  std::string raw;
  int number = 0;
  while (std::getline(is, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    Line ln{number, {}, {}};
    if (!(ls >> ln.kind)) continue;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0)
        throw SpecError("spec line " + std::to_string(number) + ": expected key=value, got '" +
                        tok + "'");
      ln.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    lines.push_back(std::move(ln));
  }
  try {
    return SpecParser(std::move(lines)).parse();
  } catch (const ShapeError& e) {
    throw SpecError(std::string("spec: ") + e.what());
  }
}

ModelSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open spec file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

void save_spec_file(const ModelSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write spec file " + path);
  out << format_spec(spec);
}

// ---- size ------------------------------------------------------------------

namespace {

std::size_t record_bytes(const std::vector<LayerSpec>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += format::kRecordBytes;
    if (l.op == LayerOp::InceptionConcat) {
      n += 1 + l.branches.size();
      for (const auto& b : l.branches) n += record_bytes(b);
    }
  }
  return n;
}

}  // namespace

namespace {

std::string record_violation(const std::vector<LayerSpec>& layers, bool nested) {
  if (layers.size() > 255 && nested) return "branch has more than 255 layers";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = std::string(nested ? "branch " : "") + "layer " +
                              std::to_string(i) + " (" + nn::layer_op_name(l.op) + ")";
    for (int v : {l.kernel, l.stride, l.padding})
      if (v < 0 || v > 255) return where + ": kernel/stride/padding exceed u8";
    for (int v : {l.in_ch, l.out_ch})
      if (v < 0 || v > 65535) return where + ": channel count exceeds u16";
    if (l.op == LayerOp::InceptionConcat) {
      if (nested) return where + ": nested inception blocks are not supported";
      if (l.branches.size() > 255) return where + ": more than 255 branches";
      for (const auto& b : l.branches) {
        auto v = record_violation(b, true);
        if (!v.empty()) return where + ": " + v;
      }
    }
  }
  return {};
}

}  // namespace

std::string blob_format_violation(const ModelSpec& spec) {
  if (spec.input_side < 1 || spec.input_side > 65535) return "input_side exceeds u16";
  if (spec.input_channels < 1 || spec.input_channels > 65535)
    return "input_channels exceeds u16";
  if (spec.num_classes < 2 || spec.num_classes > 255) return "num_classes must be in [2, 255]";
  if (spec.layers.size() > 65535) return "more than 65535 layers";
  return record_violation(spec.layers, false);
}

std::size_t blob_bytes(const ModelSpec& spec, format::Scheme scheme) {
  std::size_t weight_width = 4, bias_width = 4;
  if (scheme == format::Scheme::Fp16) weight_width = bias_width = 2;
  if (scheme == format::Scheme::Int8) weight_width = 1;

  std::size_t off = format::kHeaderBytes + record_bytes(spec.layers);
  const auto shapes = nn::param_shapes(spec.layers);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    off = format::align_up(off);
    const bool is_bias = i % 2 == 1;
    off += nn::shape_size(shapes[i]) * (is_bias ? bias_width : weight_width);
  }
  return format::align_up(off);
}

SizeEstimate estimate_size(const ModelSpec& spec) {
  return {param_count(spec), blob_bytes(spec, format::Scheme::Fp32),
          blob_bytes(spec, format::Scheme::Fp16), blob_bytes(spec, format::Scheme::Int8)};
}

}  // namespace pvcrack::arch
