#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splat {

// Little-endian byte sink used by every on-disk format in the project.
class ByteWriter {
public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v);
  void u32(uint32_t v);
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void f32(float v);
  void f16(float v);
  void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void tag(const char (&magic)[5]) { bytes({reinterpret_cast<const uint8_t*>(magic), 4}); }

  // Overwrite a previously reserved u32 slot.
  void patch_u32(size_t offset, uint32_t v);

  size_t size() const { return buf_.size(); }
  const std::vector<uint8_t>& data() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

private:
  std::vector<uint8_t> buf_;
};

// Bounds-checked little-endian reader; every overrun throws decode_error.
class ByteReader {
public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  int32_t i32() { return static_cast<int32_t>(u32()); }
  float f32();
  float f16();
  std::span<const uint8_t> bytes(size_t n);
  bool tag(const char (&magic)[5]);

  size_t position() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  void seek(size_t pos);

private:
  void need(size_t n) const;

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

// IEEE 754 binary16 conversion, round to nearest even.
uint16_t float_to_half(float f);
float half_to_float(uint16_t h);
inline float round_to_half(float f) { return half_to_float(float_to_half(f)); }

uint32_t crc32(std::span<const uint8_t> data);

// FNV-1a, used for config fingerprints.
uint64_t fnv1a64(std::string_view s);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> data);
// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, std::span<const uint8_t> data);

} // namespace splat
