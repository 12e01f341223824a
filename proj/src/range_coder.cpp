#include "splat/range_coder.hpp"

#include "splat/bytes.hpp"
#include "splat/error.hpp"

#include <cmath>
#include <unordered_map>

namespace splat {

namespace {

constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kMaxTotal = 1u << 16;
constexpr size_t kMaxSlots = size_t{1} << 22;

uint32_t zigzag(int32_t v) {
  return (static_cast<uint32_t>(v) << 1) ^ static_cast<uint32_t>(v >> 31);
}
int32_t unzigzag(uint32_t u) { return static_cast<int32_t>((u >> 1) ^ (~(u & 1) + 1)); }

class RangeEncoder {
public:
  explicit RangeEncoder(std::vector<uint8_t>& out) : out_(out) {}

  void encode(uint32_t start, uint32_t size, uint32_t total) {
    range_ /= total;
    low_ += static_cast<uint64_t>(start) * range_;
    range_ *= size;
    while (range_ < kTop) {
      range_ <<= 8;
      shift_low();
    }
  }

  void flush() {
    for (int i = 0; i < 5; ++i)
      shift_low();
  }

private:
  void shift_low() {
    if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
      const auto carry = static_cast<uint8_t>(low_ >> 32);
      uint8_t temp = cache_;
      do {
        out_.push_back(static_cast<uint8_t>(temp + carry));
        temp = 0xFF;
      } while (--cache_size_ != 0);
      cache_ = static_cast<uint8_t>(static_cast<uint32_t>(low_) >> 24);
    }
    ++cache_size_;
    low_ = static_cast<uint64_t>(static_cast<uint32_t>(low_) << 8);
  }

  std::vector<uint8_t>& out_;
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
};

class RangeDecoder {
public:
  explicit RangeDecoder(std::span<const uint8_t> in) : in_(in) {
    for (int i = 0; i < 5; ++i)
      code_ = (code_ << 8) | next();
  }

  uint32_t peek(uint32_t total) {
    range_ /= total;
    const uint32_t v = code_ / range_;
    if (v >= total)
      fail(ErrorKind::decode_error, "entropy stream is corrupt");
    return v;
  }

  void consume(uint32_t start, uint32_t size) {
    code_ -= start * range_;
    range_ *= size;
    while (range_ < kTop) {
      code_ = (code_ << 8) | next();
      range_ <<= 8;
    }
  }

  size_t position() const { return pos_; }

private:
  uint32_t next() {
    if (pos_ >= in_.size())
      fail(ErrorKind::decode_error, "entropy stream is truncated");
    return in_[pos_++];
  }

  std::span<const uint8_t> in_;
  size_t pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
};

// Frequency model over discovered symbols. Slot 0 is the escape symbol
// with a fixed count of 1.
class AdaptiveModel {
public:
  AdaptiveModel() { grow(); counts_[0] = 1; add(0, 1); total_ = 1; }

  uint32_t total() const { return total_; }
  size_t slots() const { return used_; }

  uint32_t cumulative(size_t slot) const { // sum of counts below slot
    uint32_t s = 0;
    for (size_t i = slot; i > 0; i -= i & (~i + 1))
      s += tree_[i];
    return s;
  }
  uint32_t count(size_t slot) const { return counts_[slot]; }

  // Largest slot with cumulative(slot) <= target.
  size_t find(uint32_t target) const {
    size_t pos = 0;
    for (size_t step = tree_.size() / 2; step > 0; step >>= 1) {
      if (pos + step < tree_.size() && tree_[pos + step] <= target) {
        pos += step;
        target -= tree_[pos];
      }
    }
    return pos;
  }

  size_t add_symbol() {
    require(used_ < kMaxSlots, ErrorKind::invalid_input, "too many distinct symbols for the entropy coder");
    if (used_ + 1 >= tree_.size())
      grow();
    const size_t slot = used_++;
    counts_[slot] = 1;
    add(slot, 1);
    total_ += 1;
    return slot;
  }

  void bump(size_t slot) {
    counts_[slot] += 1;
    add(slot, 1);
    total_ += 1;
    if (total_ > kMaxTotal && total_ >= 2 * used_)
      halve();
  }

private:
  void add(size_t slot, uint32_t delta) {
    for (size_t i = slot + 1; i < tree_.size(); i += i & (~i + 1))
      tree_[i] += delta;
  }

  void rebuild() {
    std::fill(tree_.begin(), tree_.end(), 0u);
    total_ = 0;
    for (size_t s = 0; s < used_; ++s) {
      add(s, counts_[s]);
      total_ += counts_[s];
    }
  }

  void grow() {
    const size_t cap = tree_.empty() ? 64 : tree_.size() * 2;
    tree_.assign(cap, 0u);
    counts_.resize(cap, 0u);
    rebuild();
  }

  void halve() {
    for (size_t s = 1; s < used_; ++s)
      counts_[s] = (counts_[s] + 1) / 2;
    rebuild();
  }

  std::vector<uint32_t> tree_;   // Fenwick tree, 1-based
  std::vector<uint32_t> counts_;
  size_t used_ = 1;
  uint32_t total_ = 0;
};

} // namespace

std::vector<uint8_t> entropy_encode(std::span<const int32_t> symbols) {
  ByteWriter w;
  w.u32(static_cast<uint32_t>(symbols.size()));
  std::vector<uint8_t> body;
  if (!symbols.empty()) {
    RangeEncoder enc(body);
    AdaptiveModel model;
    std::unordered_map<int32_t, size_t> slot_of;
    for (int32_t s : symbols) {
      auto it = slot_of.find(s);
      if (it == slot_of.end()) {
        enc.encode(0, model.count(0), model.total());
        const uint32_t z = zigzag(s);
        enc.encode(z >> 16, 1, 1u << 16);
        enc.encode(z & 0xFFFFu, 1, 1u << 16);
        const size_t slot = model.add_symbol();
        slot_of.emplace(s, slot);
        model.bump(slot);
      } else {
        enc.encode(model.cumulative(it->second), model.count(it->second), model.total());
        model.bump(it->second);
      }
    }
    enc.flush();
  }
  w.bytes(body);
  w.u32(crc32(w.data()));
  return w.take();
}

std::vector<int32_t> entropy_decode(std::span<const uint8_t> bytes, size_t n) {
  if (bytes.size() < 8)
    fail(ErrorKind::decode_error, "entropy stream shorter than its header");
  ByteReader trailer(bytes.subspan(bytes.size() - 4));
  if (trailer.u32() != crc32(bytes.first(bytes.size() - 4)))
    fail(ErrorKind::decode_error, "entropy stream checksum mismatch");
  ByteReader r(bytes);
  const uint32_t count = r.u32();
  if (count != n)
    fail(ErrorKind::decode_error, "entropy stream holds " + std::to_string(count) +
                                      " symbols, expected " + std::to_string(n));
  const auto body = bytes.subspan(4, bytes.size() - 8);
  std::vector<int32_t> out;
  if (n == 0) {
    if (!body.empty())
      fail(ErrorKind::decode_error, "entropy stream has trailing bytes");
    return out;
  }
  out.reserve(n);
  RangeDecoder dec(body);
  AdaptiveModel model;
  std::vector<int32_t> value_of(1, 0);
  for (size_t i = 0; i < n; ++i) {
    const uint32_t target = dec.peek(model.total());
    const size_t slot = model.find(target);
    if (slot >= model.slots())
      fail(ErrorKind::decode_error, "entropy stream is corrupt");
    dec.consume(model.cumulative(slot), model.count(slot));
    if (slot == 0) {
      const uint32_t hi = dec.peek(1u << 16);
      dec.consume(hi, 1);
      const uint32_t lo = dec.peek(1u << 16);
      dec.consume(lo, 1);
      const int32_t v = unzigzag((hi << 16) | lo);
      const size_t s = model.add_symbol();
      value_of.push_back(v);
      model.bump(s);
      out.push_back(v);
    } else {
      model.bump(slot);
      out.push_back(value_of[slot]);
    }
  }
  if (dec.position() != body.size())
    fail(ErrorKind::decode_error, "entropy stream has trailing bytes");
  return out;
}

double empirical_entropy_bits(std::span<const int32_t> symbols) {
  std::unordered_map<int32_t, size_t> hist;
  for (int32_t s : symbols)
    ++hist[s];
  const double n = static_cast<double>(symbols.size());
  double bits = 0;
  for (const auto& [s, c] : hist)
    bits -= static_cast<double>(c) * std::log2(static_cast<double>(c) / n);
  return bits;
}

} // namespace splat
