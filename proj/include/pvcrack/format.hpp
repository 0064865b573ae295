#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

// Constants of the .pvtm model blob. All integers little-endian.
//
//   header (24 bytes)
//     magic "PVTM" | version u16 | scheme u8 | class_count u8 | input_side u16
//     | input_channels u16 | layer_count u16 | reserved u16 | payload_length u32
//     | crc32 u32 (over the payload, i.e. every byte after the header)
//   layer records, execution-tree order; an Inception record is followed by
//   the records of its branch layers, branch by branch
//     opcode u8 | kernel u8 | stride u8 | padding u8 | in_ch u16 | out_ch u16
//     [opcode 7 only: branch_count u8, branch_count x (layer count u8)]
//     weight_offset u32 | bias_offset u32 | act_scale f32 | act_zero_point i8
//     | requant_multiplier i32 | requant_shift u8
//   zero padding to a 16-byte boundary, then one 16-byte-aligned block per
//   parameter tensor (weights then bias, execution order); the blob length
//   is padded to a multiple of 16. Offsets are absolute; 0 means "none".
//
// Element widths: fp32 scheme 4/4 bytes (weights/bias), fp16 2/2, int8 1/4.
// In the int8 scheme the input grid is fixed: real = (q + 128) / 255.
namespace pvcrack::format {

inline constexpr char kMagic[4] = {'P', 'V', 'T', 'M'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 24;
inline constexpr std::size_t kRecordBytes = 26;
inline constexpr std::size_t kAlignment = 16;
inline constexpr float kInputScale = 1.0f / 255.0f;
inline constexpr std::int32_t kInputZeroPoint = -128;

enum class Scheme : std::uint8_t { Fp32 = 0, Fp16 = 1, Int8 = 2 };

inline std::size_t align_up(std::size_t n) {
  return (n + kAlignment - 1) / kAlignment * kAlignment;
}

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Fp32: return "fp32";
    case Scheme::Fp16: return "fp16";
    case Scheme::Int8: return "int8";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s);

}  // namespace pvcrack::format
