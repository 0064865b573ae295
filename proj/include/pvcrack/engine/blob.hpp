#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvcrack/arch/model.hpp"
#include "pvcrack/format.hpp"
#include "pvcrack/quant/quant.hpp"

namespace pvcrack::engine {

using ModelBlob = std::vector<std::uint8_t>;

enum class ParseErrorKind { Magic, Version, Scheme, Checksum, Bounds, Opcode, Shape };

const char* parse_error_name(ParseErrorKind k);

class ParseError : public LoadError {
 public:
  ParseError(ParseErrorKind kind, const std::string& what)
      : LoadError(std::string("blob ") + parse_error_name(kind) + " error: " + what),
        kind_(kind) {}
  ParseErrorKind kind() const { return kind_; }

 private:
  ParseErrorKind kind_;
};

// SpecError when the spec does not fit the record fields.
ModelBlob serialize(const quant::QModel& qm);
ModelBlob serialize(const arch::Model& model);  // fp32 scheme
ModelBlob serialize(const quant::HModel& hm);   // fp16 scheme

struct DecodedBlob {
  format::Scheme scheme = format::Scheme::Fp32;
  arch::ModelSpec spec;
  std::optional<arch::Model> model;     // fp32
  std::optional<quant::HModel> hmodel;  // fp16
  std::optional<quant::QModel> qmodel;  // int8; weight_scale is not stored and reads 0
};

// Validates magic, version, scheme, checksum, record and tensor bounds and
// shape consistency; ParseError otherwise. Never reads outside bytes.
DecodedBlob parse_blob(std::span<const std::uint8_t> bytes);

// Float parameters of an fp32 or fp16 blob (fp16 dequantized).
arch::Model float_model(const DecodedBlob& blob);

ModelBlob load_blob(const std::filesystem::path& path);
void save_blob(const std::filesystem::path& path, const ModelBlob& blob);

}  // namespace pvcrack::engine
