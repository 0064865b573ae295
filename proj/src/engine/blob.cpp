#include "pvcrack/engine/blob.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <functional>

namespace pvcrack::engine {

using nn::LayerOp;
using nn::LayerSpec;

const char* parse_error_name(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::Magic: return "magic";
    case ParseErrorKind::Version: return "version";
    case ParseErrorKind::Scheme: return "scheme";
    case ParseErrorKind::Checksum: return "checksum";
    case ParseErrorKind::Bounds: return "bounds";
    case ParseErrorKind::Opcode: return "opcode";
    case ParseErrorKind::Shape: return "shape";
  }
  return "?";
}

namespace {

constexpr std::size_t kMaxActivationElems = std::size_t{1} << 26;

struct Writer {
  ModelBlob& out;
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void put_u32_at(std::size_t pos, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[pos + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
};

struct Record {
  LayerSpec spec;  // op fields only
  std::vector<std::uint8_t> branch_counts;
  std::vector<std::uint8_t> weights, bias;
  float act_scale = 0.0f;
  std::int8_t act_zp = 0;
  std::int32_t multiplier = 0;
  std::uint8_t shift = 0;
};

template <typename T>
std::vector<std::uint8_t> le_bytes(std::span<const T> values) {
  std::vector<std::uint8_t> b;
  b.reserve(values.size() * sizeof(T));
  for (T v : values) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                 std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>;
    const U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) b.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  return b;
}

// Builds records in tree order; params(i) yields the byte image of
// parameter tensor i.
void float_records(const std::vector<LayerSpec>& layers, std::size_t& param,
                   const std::function<std::vector<std::uint8_t>(std::size_t)>& params,
                   std::vector<Record>& out) {
  for (const auto& l : layers) {
    Record r;
    r.spec = l;
    r.spec.branches.clear();
    if (l.has_params()) {
      r.weights = params(param++);
      r.bias = params(param++);
    }
    if (l.op == LayerOp::InceptionConcat)
      for (const auto& b : l.branches) r.branch_counts.push_back(static_cast<std::uint8_t>(b.size()));
    out.push_back(std::move(r));
    if (l.op == LayerOp::InceptionConcat)
      for (const auto& b : l.branches) float_records(b, param, params, out);
  }
}

void quant_records(const std::vector<quant::QLayer>& layers, std::vector<Record>& out) {
  for (const auto& q : layers) {
    Record r;
    r.spec = q.spec;
    r.spec.branches.clear();
    if (q.spec.has_params()) {
      r.weights = le_bytes<std::int8_t>(q.weights);
      r.bias = le_bytes<std::int32_t>(q.bias);
    }
    r.act_scale = q.output.scale;
    r.act_zp = static_cast<std::int8_t>(q.output.zero_point);
    r.multiplier = q.requant.multiplier;
    r.shift = q.requant.shift;
    for (const auto& b : q.branches) r.branch_counts.push_back(static_cast<std::uint8_t>(b.size()));
    out.push_back(std::move(r));
    for (const auto& b : q.branches) quant_records(b, out);
  }
}

ModelBlob assemble(const arch::ModelSpec& spec, format::Scheme scheme,
                   const std::vector<Record>& records) {
  const std::string bad = arch::blob_format_violation(spec);
  if (!bad.empty()) throw SpecError("model does not fit the blob format: " + bad);
  ModelBlob blob;
  Writer w{blob};
  for (char c : format::kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(format::kVersion);
  w.u8(static_cast<std::uint8_t>(scheme));
  w.u8(static_cast<std::uint8_t>(spec.num_classes));
  w.u16(static_cast<std::uint16_t>(spec.input_side));
  w.u16(static_cast<std::uint16_t>(spec.input_channels));
  w.u16(static_cast<std::uint16_t>(spec.layers.size()));
  w.u16(0);
  w.u32(0);  // payload length, patched below
  w.u32(0);  // crc, patched below

  std::vector<std::size_t> offset_pos;
  for (const auto& r : records) {
    w.u8(static_cast<std::uint8_t>(r.spec.op));
    w.u8(static_cast<std::uint8_t>(r.spec.kernel));
    w.u8(static_cast<std::uint8_t>(r.spec.stride));
    w.u8(static_cast<std::uint8_t>(r.spec.padding));
    w.u16(static_cast<std::uint16_t>(r.spec.in_ch));
    w.u16(static_cast<std::uint16_t>(r.spec.out_ch));
    if (r.spec.op == LayerOp::InceptionConcat) {
      w.u8(static_cast<std::uint8_t>(r.branch_counts.size()));
      for (auto c : r.branch_counts) w.u8(c);
    }
    offset_pos.push_back(blob.size());
    w.u32(0);
    w.u32(0);
    w.f32(r.act_scale);
    w.u8(static_cast<std::uint8_t>(r.act_zp));
    w.i32(r.multiplier);
    w.u8(r.shift);
  }
  auto put_tensor = [&](const std::vector<std::uint8_t>& bytes) {
    blob.resize(format::align_up(blob.size()), 0);
    const auto off = static_cast<std::uint32_t>(blob.size());
    blob.insert(blob.end(), bytes.begin(), bytes.end());
    return off;
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].spec.has_params()) continue;
    w.put_u32_at(offset_pos[i], put_tensor(records[i].weights));
    w.put_u32_at(offset_pos[i] + 4, put_tensor(records[i].bias));
  }
  blob.resize(format::align_up(blob.size()), 0);
  const std::span<const std::uint8_t> payload(blob.data() + format::kHeaderBytes,
                                              blob.size() - format::kHeaderBytes);
  w.put_u32_at(16, static_cast<std::uint32_t>(payload.size()));
  w.put_u32_at(20, crc32(payload));
  return blob;
}

}  // namespace

ModelBlob serialize(const quant::QModel& qm) {
  std::vector<Record> records;
  quant_records(qm.layers, records);
  return assemble(qm.spec, format::Scheme::Int8, records);
}

ModelBlob serialize(const arch::Model& model) {
  const auto shapes = nn::param_shapes(model.spec.layers);
  if (shapes.size() != model.params.size())
    throw SpecError("serialize: parameter count does not match the spec");
  std::vector<Record> records;
  std::size_t param = 0;
  float_records(model.spec.layers, param,
                [&](std::size_t i) {
                  if (model.params[i].shape() != shapes[i])
                    throw SpecError("serialize: parameter " + std::to_string(i) + " has shape " +
                                    nn::shape_str(model.params[i].shape()));
                  return le_bytes<float>(model.params[i].span());
                },
                records);
  return assemble(model.spec, format::Scheme::Fp32, records);
}

ModelBlob serialize(const quant::HModel& hm) {
  const auto shapes = nn::param_shapes(hm.spec.layers);
  if (shapes.size() != hm.params.size())
    throw SpecError("serialize: parameter count does not match the spec");
  std::vector<Record> records;
  std::size_t param = 0;
  float_records(hm.spec.layers, param,
                [&](std::size_t i) {
                  if (hm.params[i].size() != nn::shape_size(shapes[i]))
                    throw SpecError("serialize: fp16 parameter " + std::to_string(i) +
                                    " has the wrong length");
                  return le_bytes<std::uint16_t>(hm.params[i]);
                },
                records);
  return assemble(hm.spec, format::Scheme::Fp16, records);
}

// ---------------------------------------------------------------- parsing

namespace {

struct Reader {
  std::span<const std::uint8_t> b;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (n > b.size() || pos > b.size() - n)
      throw ParseError(ParseErrorKind::Bounds, "read of " + std::to_string(n) + " bytes at " +
                                                   std::to_string(pos) + " past end " +
                                                   std::to_string(b.size()));
  }
  std::uint8_t u8() {
    need(1);
    return b[pos++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(b[pos] | (b[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
};

struct RawRecord {
  LayerSpec spec;
  std::uint32_t weight_off = 0, bias_off = 0;
  float act_scale = 0.0f;
  std::int8_t act_zp = 0;
  std::int32_t multiplier = 0;
  std::uint8_t shift = 0;
  std::vector<std::vector<RawRecord>> branches;
};

std::vector<RawRecord> read_records(Reader& r, std::size_t count, bool nested) {
  std::vector<RawRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    RawRecord rec;
    const std::uint8_t op = r.u8();
    if (op < 1 || op > 7)
      throw ParseError(ParseErrorKind::Opcode, "unknown opcode " + std::to_string(op) +
                                                   " at offset " + std::to_string(r.pos - 1));
    rec.spec.op = static_cast<LayerOp>(op);
    rec.spec.kernel = r.u8();
    rec.spec.stride = r.u8();
    rec.spec.padding = r.u8();
    rec.spec.in_ch = r.u16();
    rec.spec.out_ch = r.u16();
    std::vector<std::uint8_t> counts;
    if (rec.spec.op == LayerOp::InceptionConcat) {
      if (nested) throw ParseError(ParseErrorKind::Shape, "nested inception block");
      const std::uint8_t n = r.u8();
      for (std::uint8_t k = 0; k < n; ++k) counts.push_back(r.u8());
    }
    rec.weight_off = r.u32();
    rec.bias_off = r.u32();
    rec.act_scale = r.f32();
    rec.act_zp = static_cast<std::int8_t>(r.u8());
    rec.multiplier = r.i32();
    rec.shift = r.u8();
    for (std::uint8_t c : counts) rec.branches.push_back(read_records(r, c, true));
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<LayerSpec> to_specs(const std::vector<RawRecord>& recs) {
  std::vector<LayerSpec> out;
  for (const auto& r : recs) {
    LayerSpec l = r.spec;
    for (const auto& b : r.branches) l.branches.push_back(to_specs(b));
    out.push_back(std::move(l));
  }
  return out;
}

struct TensorReader {
  std::span<const std::uint8_t> b;
  std::size_t data_start;

  std::span<const std::uint8_t> get(std::uint32_t off, std::size_t bytes, const char* what) const {
    if (off == 0) throw ParseError(ParseErrorKind::Bounds, std::string(what) + " offset is 0");
    if (off % format::kAlignment != 0)
      throw ParseError(ParseErrorKind::Bounds, std::string(what) + " offset " +
                                                   std::to_string(off) + " is not aligned");
    if (off < data_start)
      throw ParseError(ParseErrorKind::Bounds,
                       std::string(what) + " offset " + std::to_string(off) +
                           " overlaps the layer table");
    if (bytes > b.size() || off > b.size() - bytes)
      throw ParseError(ParseErrorKind::Bounds, std::string(what) + " of " +
                                                   std::to_string(bytes) + " bytes at " +
                                                   std::to_string(off) + " past end");
    return b.subspan(off, bytes);
  }
};

template <typename T>
std::vector<T> from_le(std::span<const std::uint8_t> bytes) {
  std::vector<T> out(bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                 std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>;
    U u = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k)
      u = static_cast<U>(u | static_cast<U>(static_cast<U>(bytes[i * sizeof(T) + k]) << (8 * k)));
    out[i] = std::bit_cast<T>(u);
  }
  return out;
}

void check_quant_fields(const RawRecord& r) {
  if (!(r.act_scale > 0.0f) || !std::isfinite(r.act_scale))
    throw ParseError(ParseErrorKind::Shape, std::string(nn::layer_op_name(r.spec.op)) +
                                                ": activation scale must be positive and finite");
  const bool requant = r.spec.has_params() || r.spec.op == LayerOp::GlobalAvgPool;
  if (requant && (r.multiplier < (1 << 30) || r.shift > 63))
    throw ParseError(ParseErrorKind::Shape, std::string(nn::layer_op_name(r.spec.op)) +
                                                ": requantization multiplier out of range");
}

struct Decoder {
  const TensorReader& tr;
  format::Scheme scheme;
  std::vector<std::size_t> shape_sizes;  // per parameter tensor
  std::size_t param = 0;

  std::span<const std::uint8_t> tensor(std::uint32_t off, std::size_t width, const char* what) {
    const std::size_t n = shape_sizes.at(param++);
    return tr.get(off, n * width, what);
  }

  void floats(const std::vector<RawRecord>& recs, const std::vector<nn::Shape>& shapes,
              std::vector<nn::Tensor>* f32, std::vector<std::vector<std::uint16_t>>* f16) {
    for (const auto& r : recs) {
      if (r.spec.has_params()) {
        for (int k = 0; k < 2; ++k) {
          const std::size_t idx = param;
          const auto off = k == 0 ? r.weight_off : r.bias_off;
          if (f32) {
            f32->emplace_back(shapes[idx], from_le<float>(tensor(off, 4, k ? "bias" : "weights")));
          } else {
            f16->push_back(from_le<std::uint16_t>(tensor(off, 2, k ? "bias" : "weights")));
          }
        }
      } else if (r.weight_off != 0 || r.bias_off != 0) {
        throw ParseError(ParseErrorKind::Shape, std::string(nn::layer_op_name(r.spec.op)) +
                                                    " record carries tensor offsets");
      }
      for (const auto& b : r.branches) floats(b, shapes, f32, f16);
    }
  }

  std::vector<quant::QLayer> quantized(const std::vector<RawRecord>& recs) {
    std::vector<quant::QLayer> out;
    for (const auto& r : recs) {
      check_quant_fields(r);
      quant::QLayer q;
      q.spec = r.spec;
      q.output = {r.act_scale, r.act_zp};
      q.requant = {r.multiplier, r.shift};
      if (r.spec.has_params()) {
        q.weights = from_le<std::int8_t>(tensor(r.weight_off, 1, "weights"));
        q.bias = from_le<std::int32_t>(tensor(r.bias_off, 4, "bias"));
      } else if (r.weight_off != 0 || r.bias_off != 0) {
        throw ParseError(ParseErrorKind::Shape, std::string(nn::layer_op_name(r.spec.op)) +
                                                    " record carries tensor offsets");
      }
      for (const auto& b : r.branches) q.branches.push_back(quantized(b));
      out.push_back(std::move(q));
    }
    return out;
  }
};

}  // namespace

DecodedBlob parse_blob(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < format::kHeaderBytes)
    throw ParseError(ParseErrorKind::Bounds, "blob of " + std::to_string(bytes.size()) +
                                                 " bytes is shorter than the header");
  if (std::memcmp(bytes.data(), format::kMagic, 4) != 0)
    throw ParseError(ParseErrorKind::Magic, "expected PVTM");
  Reader r{bytes, 4};
  const std::uint16_t version = r.u16();
  if (version != format::kVersion)
    throw ParseError(ParseErrorKind::Version, "unsupported version " + std::to_string(version));
  const std::uint8_t scheme = r.u8();
  if (scheme > 2) throw ParseError(ParseErrorKind::Scheme, "unknown scheme " + std::to_string(scheme));
  DecodedBlob out;
  out.scheme = static_cast<format::Scheme>(scheme);
  out.spec.num_classes = r.u8();
  out.spec.input_side = r.u16();
  out.spec.input_channels = r.u16();
  const std::uint16_t layer_count = r.u16();
  r.u16();  // reserved
  const std::uint32_t payload_length = r.u32();
  const std::uint32_t crc = r.u32();
  if (payload_length != bytes.size() - format::kHeaderBytes)
    throw ParseError(ParseErrorKind::Bounds,
                     "payload length " + std::to_string(payload_length) + " but blob carries " +
                         std::to_string(bytes.size() - format::kHeaderBytes));
  if (crc32(bytes.subspan(format::kHeaderBytes)) != crc)
    throw ParseError(ParseErrorKind::Checksum, "crc32 mismatch");

  const auto recs = read_records(r, layer_count, false);
  out.spec.layers = to_specs(recs);

  std::vector<nn::Shape> shapes;
  try {
    if (out.spec.input_channels != 1)
      throw SpecError("input_channels must be 1, got " + std::to_string(out.spec.input_channels));
    arch::validate(out.spec);
    for (const auto& s : arch::propagate_shapes(out.spec))
      if (nn::shape_size(s) > kMaxActivationElems)
        throw SpecError("activation " + nn::shape_str(s) + " is too large");
    if (nn::shape_size(out.spec.input_shape()) > kMaxActivationElems)
      throw SpecError("input is too large");
    shapes = nn::param_shapes(out.spec.layers);
  } catch (const Error& e) {
    throw ParseError(ParseErrorKind::Shape, e.what());
  }

  const TensorReader tr{bytes, format::align_up(r.pos)};
  Decoder d{tr, out.scheme, {}};
  for (const auto& s : shapes) d.shape_sizes.push_back(nn::shape_size(s));
  switch (out.scheme) {
    case format::Scheme::Fp32: {
      arch::Model m;
      m.spec = out.spec;
      d.floats(recs, shapes, &m.params, nullptr);
      out.model = std::move(m);
      break;
    }
    case format::Scheme::Fp16: {
      quant::HModel hm;
      hm.spec = out.spec;
      d.floats(recs, shapes, nullptr, &hm.params);
      out.hmodel = std::move(hm);
      break;
    }
    case format::Scheme::Int8: {
      quant::QModel qm;
      qm.spec = out.spec;
      qm.layers = d.quantized(recs);
      out.qmodel = std::move(qm);
      break;
    }
  }
  return out;
}

arch::Model float_model(const DecodedBlob& blob) {
  if (blob.model) return *blob.model;
  if (blob.hmodel) return quant::dequantize_fp16(*blob.hmodel);
  throw LoadError("blob holds an int8 model; float parameters are not available");
}

ModelBlob load_blob(const std::filesystem::path& path) { return read_file_bytes(path); }

void save_blob(const std::filesystem::path& path, const ModelBlob& blob) {
  write_file_bytes(path, blob);
}

}  // namespace pvcrack::engine
