#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace splat {

// Adaptive order-0 range coding of an integer sequence. The alphabet is
// discovered on the fly through an escape symbol; each new value is sent
// raw (zigzag, 32 bits). Stream layout: u32 count, coded bytes, u32 crc32
// of everything before it.
std::vector<uint8_t> entropy_encode(std::span<const int32_t> symbols);

// Throws decode_error on a count mismatch, checksum failure, truncation or
// trailing bytes.
std::vector<int32_t> entropy_decode(std::span<const uint8_t> bytes, size_t n);

// Empirical order-0 entropy of the sequence in bits (count * H).
double empirical_entropy_bits(std::span<const int32_t> symbols);

} // namespace splat
