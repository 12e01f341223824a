#include <doctest.h>

#include "oracles.hpp"
#include "splat/bytes.hpp"
#include "splat/error.hpp"
#include "splat/image.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

using namespace splat;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "splatstream_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

} // namespace

TEST_CASE("byte writer and reader round trip little-endian values") {
  ByteWriter w;
  w.tag("ABCD");
  w.u8(7);
  w.u16(0xBEEF);
  w.u32(0xDEADBEEF);
  w.i32(-5);
  w.f32(3.25f);
  w.f16(0.5f);
  CHECK(w.data()[5] == 0xEF);
  CHECK(w.data()[6] == 0xBE);
  const auto bytes = w.take();
  ByteReader r(bytes);
  CHECK(r.tag("ABCD"));
  CHECK(r.u8() == 7);
  CHECK(r.u16() == 0xBEEF);
  CHECK(r.u32() == 0xDEADBEEFu);
  CHECK(r.i32() == -5);
  CHECK(r.f32() == 3.25f);
  CHECK(r.f16() == 0.5f);
  CHECK(r.remaining() == 0);
  CHECK_THROWS_AS(r.u8(), Error);
}

TEST_CASE("patch_u32 overwrites a reserved slot") {
  ByteWriter w;
  w.u32(0);
  w.u8(1);
  w.patch_u32(0, 42);
  ByteReader r(w.data());
  CHECK(r.u32() == 42);
  CHECK_THROWS_AS(w.patch_u32(2, 1), Error);
}

TEST_CASE("half conversion matches IEEE binary16") {
  CHECK(float_to_half(0.0f) == 0x0000);
  CHECK(float_to_half(-0.0f) == 0x8000);
  CHECK(float_to_half(1.0f) == 0x3C00);
  CHECK(float_to_half(-2.0f) == 0xC000);
  CHECK(float_to_half(65504.0f) == 0x7BFF);
  CHECK(float_to_half(1e6f) == 0x7C00);
  CHECK(float_to_half(std::numeric_limits<float>::infinity()) == 0x7C00);
  CHECK(std::isnan(half_to_float(float_to_half(std::nanf("")))));
  CHECK(half_to_float(0x0001) == std::ldexp(1.0f, -24));
  CHECK(float_to_half(std::ldexp(1.0f, -24)) == 0x0001);
  // 1 + 2^-11 is a tie between 1 and 1 + 2^-10, rounds to even
  CHECK(float_to_half(1.0f + std::ldexp(1.0f, -11)) == 0x3C00);
  CHECK(float_to_half(1.0f + 3 * std::ldexp(1.0f, -11)) == 0x3C02);
  for (uint32_t h = 0; h < 0x7C00; ++h) {
    const float f = half_to_float(static_cast<uint16_t>(h));
    REQUIRE(float_to_half(f) == h);
    REQUIRE(float_to_half(-f) == (h | 0x8000));
  }
}

TEST_CASE("crc32 and fnv1a64 match reference values") {
  const std::string s = "123456789";
  CHECK(crc32({reinterpret_cast<const uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("file helpers write and read bytes") {
  const std::string path = temp_path("bytes.bin");
  const std::vector<uint8_t> data{1, 2, 3, 250};
  write_file_atomic(path, data);
  CHECK(read_file(path) == data);
  write_file(path, std::vector<uint8_t>{9});
  CHECK(read_file(path) == std::vector<uint8_t>{9});
  try {
    read_file(temp_path("does_not_exist.bin"));
    FAIL("expected io_error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io_error);
  }
}

TEST_CASE("dilation grows a single pixel into a square") {
  PixelMask m(9, 9);
  m.set(4, 4, true);
  const PixelMask d = dilate(m, 3);
  CHECK(d.count() == 9);
  CHECK(d(3, 3));
  CHECK(d(5, 5));
  CHECK_FALSE(d(6, 4));
  CHECK(dilate(m, 4).count() == 16);
  CHECK(dilate(m, 1).bits == m.bits);
  PixelMask corner(5, 5);
  corner.set(0, 0, true);
  CHECK(dilate(corner, 3).count() == 4);
}

TEST_CASE("png round trip equals 8-bit quantization") {
  std::mt19937_64 rng(2);
  const Image img = oracle::random_image(rng, 13, 7);
  const std::string path = temp_path("img.png");
  write_png(path, img);
  const Image back = read_png(path);
  REQUIRE(back.same_shape(img));
  CHECK(back.data == quantize8(img).data);
  for (size_t i = 0; i < img.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255 + 1e-12);
}

TEST_CASE("qimg round trip is exact in f32") {
  std::mt19937_64 rng(3);
  Image img = oracle::random_image(rng, 5, 4);
  for (double& v : img.data)
    v = static_cast<float>(v);
  const std::string path = temp_path("img.qimg");
  write_qimg(path, img);
  const Image back = read_qimg(path);
  CHECK(back.same_shape(img));
  CHECK(back.data == img.data);
}

TEST_CASE("truncated qimg raises decode_error") {
  const std::string path = temp_path("bad.qimg");
  write_qimg(path, Image(4, 4));
  auto bytes = read_file(path);
  bytes.resize(bytes.size() - 3);
  write_file(path, bytes);
  try {
    read_qimg(path);
    FAIL("expected decode_error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::decode_error);
  }
}
