#include "splat/codec.hpp"

#include "splat/bytes.hpp"
#include "splat/error.hpp"
#include "splat/range_coder.hpp"

#include <algorithm>
#include <string>

namespace splat {

SparseCOO coo_encode(std::span<const double> dense) {
  require(dense.size() % 3 == 0, ErrorKind::dimension_mismatch, "position residuals must be N x 3");
  SparseCOO coo;
  for (size_t i = 0; i < dense.size() / 3; ++i) {
    const double* row = dense.data() + 3 * i;
    if (row[0] == 0 && row[1] == 0 && row[2] == 0)
      continue;
    coo.indices.push_back(static_cast<uint32_t>(i));
    for (int k = 0; k < 3; ++k)
      coo.values.push_back(static_cast<float>(row[k]));
  }
  return coo;
}

std::vector<double> coo_decode(const SparseCOO& coo, size_t n) {
  require(coo.values.size() == 3 * coo.indices.size(), ErrorKind::decode_error,
          "COO value count does not match its indices");
  std::vector<double> dense(3 * n, 0.0);
  for (size_t j = 0; j < coo.indices.size(); ++j) {
    const uint32_t i = coo.indices[j];
    if (i >= n)
      fail(ErrorKind::decode_error, "COO index " + std::to_string(i) + " out of range for " +
                                        std::to_string(n) + " Gaussians");
    if (j > 0 && i <= coo.indices[j - 1])
      fail(ErrorKind::decode_error, "COO indices are not strictly increasing");
    for (int k = 0; k < 3; ++k)
      dense[3 * i + k] = coo.values[3 * j + k];
  }
  return dense;
}

std::vector<double> AttributeResidual::decode(size_t n) const {
  switch (encoding) {
  case ResidualEncoding::none:
    return std::vector<double>(n * out_dim, 0.0);
  case ResidualEncoding::quantized:
    require(latents.size() == n * latent_dim, ErrorKind::invalid_input, "latent row count mismatch");
    return decode_residuals(latents, decoder);
  case ResidualEncoding::raw:
    require(raw.size() == n * out_dim, ErrorKind::invalid_input, "raw residual row count mismatch");
    return {raw.begin(), raw.end()};
  }
  return {};
}

ResidualSet ResidualSet::empty(uint32_t frame, uint32_t n, int sh_degree) {
  ResidualSet r;
  r.frame_index = frame;
  r.count_before = r.count_after = n;
  r.sh_degree = sh_degree;
  r.additions = GaussianCloud(sh_degree);
  for (AttributeKind k : kAllAttributeKinds) {
    auto& a = r.attributes[static_cast<size_t>(k)];
    a.kind = k;
    a.out_dim = residual_dim(k, sh_degree);
  }
  return r;
}

void ResidualSet::validate() const {
  const size_t n = count_before;
  require(additions.sh_degree == sh_degree, ErrorKind::invalid_input, "addition SH degree mismatch");
  additions.validate();
  for (AttributeKind k : kAllAttributeKinds) {
    const auto& a = attributes[static_cast<size_t>(k)];
    require(a.kind == k && a.out_dim == residual_dim(k, sh_degree), ErrorKind::invalid_input,
            std::string("bad residual shape for ") + std::string(attribute_name(k)));
    if (a.encoding == ResidualEncoding::quantized)
      require(a.latent_dim > 0 && a.latents.size() == n * a.latent_dim &&
                  a.decoder.out_dim == a.out_dim && a.decoder.in_dim == a.latent_dim,
              ErrorKind::invalid_input,
              std::string("bad latent shape for ") + std::string(attribute_name(k)));
    if (a.encoding == ResidualEncoding::raw)
      require(a.raw.size() == n * a.out_dim, ErrorKind::invalid_input,
              std::string("bad raw residual shape for ") + std::string(attribute_name(k)));
  }
  for (size_t j = 0; j < positions.indices.size(); ++j)
    require(positions.indices[j] < n && (j == 0 || positions.indices[j] > positions.indices[j - 1]),
            ErrorKind::invalid_input, "position COO indices out of order or range");
  for (size_t j = 0; j < removals.size(); ++j)
    require(removals[j] < n && (j == 0 || removals[j] > removals[j - 1]), ErrorKind::invalid_input,
            "removal indices out of order or range");
  require(count_after == count_before - removals.size() + additions.size(), ErrorKind::invalid_input,
          "count_after does not match removals and additions");
}

namespace {

constexpr size_t kHeaderBytes = 24;
constexpr size_t kTableEntryBytes = 12;

void write_cloud_f16(ByteWriter& w, const GaussianCloud& c) {
  for (const auto* arr : {&c.positions, &c.rotations, &c.log_scales, &c.opacity_logits, &c.sh})
    for (double v : *arr)
      w.f16(static_cast<float>(v));
}

void read_cloud_f16(ByteReader& r, GaussianCloud& c) {
  for (auto* arr : {&c.positions, &c.rotations, &c.log_scales, &c.opacity_logits, &c.sh})
    for (double& v : *arr)
      v = r.f16();
}

std::vector<uint8_t> attribute_body(const AttributeResidual& a) {
  ByteWriter w;
  w.u8(static_cast<uint8_t>(a.encoding));
  w.u8(0);
  w.u16(static_cast<uint16_t>(a.out_dim));
  w.u16(static_cast<uint16_t>(a.encoding == ResidualEncoding::quantized ? a.latent_dim : 0));
  w.u16(0);
  if (a.encoding == ResidualEncoding::quantized) {
    for (double v : a.decoder.weights)
      w.f32(static_cast<float>(v));
    const auto blob = entropy_encode(a.latents);
    w.u32(static_cast<uint32_t>(blob.size()));
    w.bytes(blob);
  } else if (a.encoding == ResidualEncoding::raw) {
    for (float v : a.raw)
      w.f32(v);
  }
  return w.take();
}

AttributeResidual read_attribute(std::span<const uint8_t> body, AttributeKind kind, size_t n,
                                 int sh_degree) {
  ByteReader r(body);
  AttributeResidual a;
  a.kind = kind;
  const uint8_t enc = r.u8();
  r.u8();
  a.out_dim = r.u16();
  a.latent_dim = r.u16();
  r.u16();
  if (enc > 2)
    fail(ErrorKind::decode_error, "unknown residual encoding " + std::to_string(enc));
  a.encoding = static_cast<ResidualEncoding>(enc);
  if (a.out_dim != residual_dim(kind, sh_degree))
    fail(ErrorKind::decode_error, std::string("residual width mismatch for ") +
                                      std::string(attribute_name(kind)));
  if (a.encoding == ResidualEncoding::quantized) {
    if (a.latent_dim == 0)
      fail(ErrorKind::decode_error, "zero latent width");
    a.decoder = LinearDecoder(a.out_dim, a.latent_dim);
    for (double& v : a.decoder.weights)
      v = r.f32();
    const uint32_t len = r.u32();
    a.latents = entropy_decode(r.bytes(len), n * a.latent_dim);
  } else {
    a.latent_dim = 0;
    if (a.encoding == ResidualEncoding::raw) {
      a.raw.resize(n * a.out_dim);
      for (float& v : a.raw)
        v = r.f32();
    }
  }
  if (r.remaining() != 0)
    fail(ErrorKind::decode_error, "attribute section has trailing bytes");
  return a;
}

} // namespace

std::vector<uint8_t> pack_frame(const ResidualSet& rs) {
  rs.validate();
  std::vector<std::pair<SectionType, std::vector<uint8_t>>> sections;
  for (AttributeKind k : kAllAttributeKinds)
    sections.emplace_back(static_cast<SectionType>(static_cast<int>(k) + 1),
                          attribute_body(rs.attributes[static_cast<size_t>(k)]));
  {
    ByteWriter w;
    w.u32(static_cast<uint32_t>(rs.positions.size()));
    for (uint32_t i : rs.positions.indices)
      w.u32(i);
    for (float v : rs.positions.values)
      w.f32(v);
    sections.emplace_back(SectionType::positions, w.take());
  }
  {
    ByteWriter w;
    w.u32(static_cast<uint32_t>(rs.additions.size()));
    write_cloud_f16(w, rs.additions);
    sections.emplace_back(SectionType::additions, w.take());
  }
  {
    ByteWriter w;
    w.u32(static_cast<uint32_t>(rs.removals.size()));
    for (uint32_t i : rs.removals)
      w.u32(i);
    sections.emplace_back(SectionType::removals, w.take());
  }

  ByteWriter w;
  w.tag("QNFP");
  w.u16(kPacketVersion);
  w.u16(0);
  w.u32(rs.frame_index);
  w.u32(rs.count_before);
  w.u32(rs.count_after);
  w.u8(static_cast<uint8_t>(rs.sh_degree));
  w.u8(static_cast<uint8_t>(sections.size()));
  w.u16(0);
  size_t offset = kHeaderBytes + kTableEntryBytes * sections.size();
  for (const auto& [type, body] : sections) {
    w.u8(static_cast<uint8_t>(type));
    w.u8(0);
    w.u16(0);
    w.u32(static_cast<uint32_t>(offset));
    w.u32(static_cast<uint32_t>(body.size()));
    offset += body.size();
  }
  const uint32_t head_crc = crc32(w.data());
  for (const auto& s : sections)
    w.bytes(s.second);
  for (const auto& s : sections)
    w.u32(crc32(s.second));
  w.u32(head_crc);
  return w.take();
}

std::vector<SectionInfo> packet_sections(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.tag("QNFP"))
    fail(ErrorKind::decode_error, "bad packet magic");
  const uint16_t version = r.u16();
  if (version != kPacketVersion)
    fail(ErrorKind::decode_error, "unsupported packet version " + std::to_string(version));
  r.seek(kHeaderBytes - 3);
  const uint8_t count = r.u8();
  r.u16();
  const size_t body_start = kHeaderBytes + kTableEntryBytes * count;
  const size_t trailer = 4 * (static_cast<size_t>(count) + 1);
  if (bytes.size() < body_start + trailer)
    fail(ErrorKind::decode_error, "packet shorter than its section table");
  std::vector<SectionInfo> out;
  size_t expect = body_start;
  for (int i = 0; i < count; ++i) {
    SectionInfo s{};
    s.type = static_cast<SectionType>(r.u8());
    r.u8();
    r.u16();
    s.offset = r.u32();
    s.length = r.u32();
    if (s.offset != expect || s.offset + static_cast<size_t>(s.length) > bytes.size() - trailer)
      fail(ErrorKind::decode_error, "section " + std::to_string(i) + " has bad bounds");
    expect += s.length;
    out.push_back(s);
  }
  if (expect != bytes.size() - trailer)
    fail(ErrorKind::decode_error, "packet size does not match its sections");
  return out;
}

ResidualSet unpack_frame(std::span<const uint8_t> bytes) {
  const auto sections = packet_sections(bytes);
  const size_t body_start = kHeaderBytes + kTableEntryBytes * sections.size();
  ByteReader trailer(bytes.subspan(bytes.size() - 4 * (sections.size() + 1)));
  for (const auto& s : sections)
    if (trailer.u32() != crc32(bytes.subspan(s.offset, s.length)))
      fail(ErrorKind::decode_error, "section checksum mismatch");
  if (trailer.u32() != crc32(bytes.first(body_start)))
    fail(ErrorKind::decode_error, "header checksum mismatch");

  ByteReader h(bytes);
  h.seek(8);
  ResidualSet rs;
  rs.frame_index = h.u32();
  rs.count_before = h.u32();
  rs.count_after = h.u32();
  rs.sh_degree = h.u8();
  if (rs.sh_degree > kMaxShDegree)
    fail(ErrorKind::decode_error, "bad SH degree in packet");
  rs.additions = GaussianCloud(rs.sh_degree);
  const size_t n = rs.count_before;

  uint32_t seen = 0;
  for (const auto& s : sections) {
    const auto t = static_cast<uint8_t>(s.type);
    if (t < 1 || t > 8)
      fail(ErrorKind::decode_error, "unknown section type " + std::to_string(t));
    if (seen & (1u << t))
      fail(ErrorKind::decode_error, "duplicate section type " + std::to_string(t));
    seen |= 1u << t;
    const auto body = bytes.subspan(s.offset, s.length);
    if (t <= 5) {
      const auto kind = static_cast<AttributeKind>(t - 1);
      rs.attributes[t - 1] = read_attribute(body, kind, n, rs.sh_degree);
      continue;
    }
    ByteReader r(body);
    const uint32_t count = r.u32();
    if (s.type == SectionType::positions) {
      if (static_cast<size_t>(count) * 16 != r.remaining())
        fail(ErrorKind::decode_error, "position section size mismatch");
      rs.positions.indices.resize(count);
      rs.positions.values.resize(3 * static_cast<size_t>(count));
      for (auto& i : rs.positions.indices)
        i = r.u32();
      for (auto& v : rs.positions.values)
        v = r.f32();
    } else if (s.type == SectionType::additions) {
      const size_t per = 2 * (11 + static_cast<size_t>(3 * sh_basis_count(rs.sh_degree)));
      if (count * per != r.remaining())
        fail(ErrorKind::decode_error, "additions section size mismatch");
      rs.additions.resize(count);
      read_cloud_f16(r, rs.additions);
    } else {
      if (static_cast<size_t>(count) * 4 != r.remaining())
        fail(ErrorKind::decode_error, "removals section size mismatch");
      rs.removals.resize(count);
      for (auto& i : rs.removals)
        i = r.u32();
    }
  }
  if (seen != 0x1FEu)
    fail(ErrorKind::decode_error, "packet is missing sections");
  try {
    rs.validate();
  } catch (const Error& e) {
    fail(ErrorKind::decode_error, std::string("inconsistent packet: ") + e.what());
  }
  return rs;
}

GaussianCloud apply_residuals(const GaussianCloud& prev, const ResidualSet& r) {
  r.validate();
  require(prev.size() == r.count_before && prev.sh_degree == r.sh_degree,
          ErrorKind::dimension_mismatch, "residual set does not match the previous cloud");
  const size_t n = prev.size();
  GaussianCloud out = prev;
  const int nb = prev.basis();
  for (AttributeKind k : kAllAttributeKinds) {
    const auto& a = r.attributes[static_cast<size_t>(k)];
    if (a.encoding == ResidualEncoding::none || a.out_dim == 0)
      continue;
    const std::vector<double> res = a.decode(n);
    const size_t m = a.out_dim;
    for (size_t i = 0; i < n; ++i) {
      const double* ri = res.data() + i * m;
      switch (k) {
      case AttributeKind::rotation:
        for (int j = 0; j < 4; ++j)
          out.rotations[4 * i + j] += ri[j];
        break;
      case AttributeKind::scale:
        for (int j = 0; j < 3; ++j)
          out.log_scales[3 * i + j] += ri[j];
        break;
      case AttributeKind::opacity:
        out.opacity_logits[i] += ri[0];
        break;
      case AttributeKind::color_base:
        for (int c = 0; c < 3; ++c)
          out.sh[i * 3 * nb + c * nb] += ri[c];
        break;
      case AttributeKind::color_freq:
        for (int c = 0; c < 3; ++c)
          for (int b = 1; b < nb; ++b)
            out.sh[i * 3 * nb + c * nb + b] += ri[c * (nb - 1) + (b - 1)];
        break;
      }
    }
  }
  for (size_t j = 0; j < r.positions.size(); ++j) {
    const uint32_t i = r.positions.indices[j];
    for (int k = 0; k < 3; ++k)
      out.positions[3 * i + k] += r.positions.values[3 * j + k];
  }
  if (!r.removals.empty()) {
    std::vector<uint8_t> keep(n, 1);
    for (uint32_t i : r.removals)
      keep[i] = 0;
    out = out.select(keep);
  }
  for (size_t i = 0; i < r.additions.size(); ++i)
    out.push_from(r.additions, i);
  return out;
}

GaussianCloud round_to_f16(const GaussianCloud& cloud) {
  GaussianCloud out = cloud;
  for (auto* arr : {&out.positions, &out.rotations, &out.log_scales, &out.opacity_logits, &out.sh})
    for (double& v : *arr)
      v = round_to_half(static_cast<float>(v));
  return out;
}

} // namespace splat
