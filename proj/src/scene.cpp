#include "splat/scene.hpp"

#include "splat/bytes.hpp"
#include "splat/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace splat {

void GaussianCloud::resize(size_t n) {
  positions.resize(3 * n, 0.0);
  rotations.resize(4 * n, 0.0);
  log_scales.resize(3 * n, 0.0);
  opacity_logits.resize(n, 0.0);
  sh.resize(n * static_cast<size_t>(sh_stride()), 0.0);
}

void GaussianCloud::validate() const {
  require(sh_degree >= 0 && sh_degree <= kMaxShDegree, ErrorKind::invalid_input,
          "SH degree must be in [0,3]");
  const size_t n = size();
  require(positions.size() == 3 * n && rotations.size() == 4 * n && log_scales.size() == 3 * n &&
              sh.size() == n * static_cast<size_t>(sh_stride()),
          ErrorKind::dimension_mismatch, "GaussianCloud attribute arrays disagree on N");
}

void GaussianCloud::set_position(size_t i, const Vec3& p) {
  positions[3 * i] = p.x();
  positions[3 * i + 1] = p.y();
  positions[3 * i + 2] = p.z();
}

Vec4 GaussianCloud::rotation(size_t i) const {
  return {rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]};
}

Vec3 GaussianCloud::scale(size_t i) const {
  return {std::exp(log_scales[3 * i]), std::exp(log_scales[3 * i + 1]),
          std::exp(log_scales[3 * i + 2])};
}

double GaussianCloud::opacity(size_t i) const { return sigmoid(opacity_logits[i]); }

void GaussianCloud::push_from(const GaussianCloud& src, size_t i) {
  positions.insert(positions.end(), src.positions.begin() + 3 * i, src.positions.begin() + 3 * i + 3);
  rotations.insert(rotations.end(), src.rotations.begin() + 4 * i, src.rotations.begin() + 4 * i + 4);
  log_scales.insert(log_scales.end(), src.log_scales.begin() + 3 * i,
                    src.log_scales.begin() + 3 * i + 3);
  opacity_logits.push_back(src.opacity_logits[i]);
  auto s = src.sh_of(i);
  sh.insert(sh.end(), s.begin(), s.end());
}

GaussianCloud GaussianCloud::select(std::span<const uint8_t> keep) const {
  require(keep.size() == size(), ErrorKind::dimension_mismatch, "select mask length != N");
  GaussianCloud out(sh_degree);
  for (size_t i = 0; i < size(); ++i)
    if (keep[i])
      out.push_from(*this, i);
  return out;
}

Eigen::Matrix4d Camera::world_to_camera() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

void Camera::validate() const {
  require(width > 0 && height > 0, ErrorKind::invalid_input, "camera image size must be positive");
  require(fx > 0 && fy > 0, ErrorKind::invalid_input, "camera focal lengths must be positive");
  const double err = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  require(err <= 1e-6, ErrorKind::invalid_input, "camera rotation is not orthonormal");
  require(rotation.allFinite() && translation.allFinite(), ErrorKind::invalid_input,
          "camera pose is not finite");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double fov_y_radians) {
  const Vec3 f = (target - eye).normalized();
  const Vec3 r = f.cross(up).normalized();
  const Vec3 d = f.cross(r);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.rotation.row(0) = r.transpose();
  cam.rotation.row(1) = d.transpose();
  cam.rotation.row(2) = f.transpose();
  cam.translation = -cam.rotation * eye;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y_radians);
  cam.fx = cam.fy;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  return cam;
}

Mat3 quaternion_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 build_covariance(const Vec4& q, const Vec3& s) {
  require(q.allFinite() && s.allFinite(), ErrorKind::invalid_input, "non-finite covariance input");
  require((s.array() > 0).all(), ErrorKind::invalid_input, "scales must be positive");
  const double n = q.norm();
  require(n > 0, ErrorKind::invalid_input, "zero quaternion");
  const Mat3 m = quaternion_to_rotation(q / n) * s.asDiagonal();
  return m * m.transpose();
}

Projection project_point(const Vec3& p, const Camera& cam) {
  const Vec3 c = cam.to_camera(p);
  Projection out;
  out.depth = c.z();
  if (c.z() <= cam.near_clip)
    return out;
  out.visible = true;
  out.pixel = {cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy};
  return out;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& pc, const Camera& cam) {
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0, -cam.fx * pc.x() * iz * iz,
      0, cam.fy * iz, -cam.fy * pc.y() * iz * iz;
  return j;
}

ProjectedCovariance project_covariance(const Mat3& sigma, const Vec3& p_cam, const Camera& cam,
                                       double floor) {
  require(p_cam.z() > cam.near_clip, ErrorKind::invalid_input, "point in front of near plane");
  const Eigen::Matrix<double, 2, 3> t = projection_jacobian(p_cam, cam) * cam.rotation;
  ProjectedCovariance out;
  out.cov = t * sigma * t.transpose();
  out.cov(0, 0) += floor;
  out.cov(1, 1) += floor;
  out.cov(0, 1) = out.cov(1, 0) = 0.5 * (out.cov(0, 1) + out.cov(1, 0));
  const double det = out.cov.determinant();
  if (!(det > 1e-18) || out.cov(0, 0) <= 0) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(out.cov);
    Vec2 ev = es.eigenvalues().cwiseMax(1e-9);
    out.cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    out.clamped = true;
  }
  return out;
}

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

} // namespace

void sh_basis(const Vec3& d, int degree, std::span<double> b, std::span<Vec3> db) {
  const double x = d.x(), y = d.y(), z = d.z();
  const bool grad = !db.empty();
  b[0] = kShC0;
  if (grad)
    db[0] = Vec3::Zero();
  if (degree < 1)
    return;
  b[1] = -kC1 * y;
  b[2] = kC1 * z;
  b[3] = -kC1 * x;
  if (grad) {
    db[1] = {0, -kC1, 0};
    db[2] = {0, 0, kC1};
    db[3] = {-kC1, 0, 0};
  }
  if (degree < 2)
    return;
  const double xx = x * x, yy = y * y, zz = z * z;
  b[4] = kC2[0] * x * y;
  b[5] = kC2[1] * y * z;
  b[6] = kC2[2] * (2 * zz - xx - yy);
  b[7] = kC2[3] * x * z;
  b[8] = kC2[4] * (xx - yy);
  if (grad) {
    db[4] = {kC2[0] * y, kC2[0] * x, 0};
    db[5] = {0, kC2[1] * z, kC2[1] * y};
    db[6] = {-2 * kC2[2] * x, -2 * kC2[2] * y, 4 * kC2[2] * z};
    db[7] = {kC2[3] * z, 0, kC2[3] * x};
    db[8] = {2 * kC2[4] * x, -2 * kC2[4] * y, 0};
  }
  if (degree < 3)
    return;
  b[9] = kC3[0] * y * (3 * xx - yy);
  b[10] = kC3[1] * x * y * z;
  b[11] = kC3[2] * y * (4 * zz - xx - yy);
  b[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
  b[13] = kC3[4] * x * (4 * zz - xx - yy);
  b[14] = kC3[5] * z * (xx - yy);
  b[15] = kC3[6] * x * (xx - 3 * yy);
  if (grad) {
    db[9] = {6 * kC3[0] * x * y, kC3[0] * (3 * xx - 3 * yy), 0};
    db[10] = {kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y};
    db[11] = {-2 * kC3[2] * x * y, kC3[2] * (4 * zz - xx - 3 * yy), 8 * kC3[2] * y * z};
    db[12] = {-6 * kC3[3] * x * z, -6 * kC3[3] * y * z, kC3[3] * (6 * zz - 3 * xx - 3 * yy)};
    db[13] = {kC3[4] * (4 * zz - 3 * xx - yy), -2 * kC3[4] * x * y, 8 * kC3[4] * x * z};
    db[14] = {2 * kC3[5] * x * z, -2 * kC3[5] * y * z, kC3[5] * (xx - yy)};
    db[15] = {kC3[6] * (3 * xx - 3 * yy), -6 * kC3[6] * x * y, 0};
  }
}

Vec3 eval_sh(std::span<const double> coeffs, const Vec3& dir, int degree) {
  require(degree >= 0 && degree <= kMaxShDegree, ErrorKind::invalid_input, "SH degree out of range");
  const int nb = sh_basis_count(degree);
  require(coeffs.size() == static_cast<size_t>(3 * nb), ErrorKind::invalid_input,
          "SH coefficient count does not match degree");
  std::array<double, 16> b{};
  sh_basis(dir, degree, b);
  Vec3 rgb;
  for (int c = 0; c < 3; ++c) {
    double acc = 0;
    for (int k = 0; k < nb; ++k)
      acc += b[k] * coeffs[c * nb + k];
    rgb[c] = std::max(acc + 0.5, 0.0);
  }
  return rgb;
}

namespace {
constexpr uint16_t kCloudVersion = 1;
}

std::vector<uint8_t> encode_cloud(const GaussianCloud& cloud) {
  cloud.validate();
  ByteWriter w;
  w.tag("QGSC");
  w.u16(kCloudVersion);
  w.u32(static_cast<uint32_t>(cloud.size()));
  w.u8(static_cast<uint8_t>(cloud.sh_degree));
  for (const auto* arr : {&cloud.positions, &cloud.rotations, &cloud.log_scales,
                          &cloud.opacity_logits, &cloud.sh})
    for (double v : *arr)
      w.f32(static_cast<float>(v));
  return w.take();
}

GaussianCloud decode_cloud(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.tag("QGSC"))
    fail(ErrorKind::decode_error, "bad cloud magic (expected QGSC)");
  const uint16_t version = r.u16();
  if (version != kCloudVersion)
    fail(ErrorKind::decode_error, "unsupported cloud version " + std::to_string(version));
  const uint32_t n = r.u32();
  const int degree = r.u8();
  if (degree > kMaxShDegree)
    fail(ErrorKind::decode_error, "cloud SH degree out of range");
  GaussianCloud cloud(degree);
  const size_t floats = static_cast<size_t>(n) * (3 + 4 + 3 + 1 + 3 * sh_basis_count(degree));
  if (r.remaining() != floats * 4)
    fail(ErrorKind::decode_error, "cloud payload length does not match N");
  cloud.resize(n);
  for (auto* arr : {&cloud.positions, &cloud.rotations, &cloud.log_scales, &cloud.opacity_logits,
                    &cloud.sh})
    for (double& v : *arr)
      v = r.f32();
  return cloud;
}

void save_cloud(const std::string& path, const GaussianCloud& cloud) {
  write_file_atomic(path, encode_cloud(cloud));
}

GaussianCloud load_cloud(const std::string& path) { return decode_cloud(read_file(path)); }

GaussianCloud round_to_f32(const GaussianCloud& cloud) {
  GaussianCloud out = cloud;
  for (auto* arr : {&out.positions, &out.rotations, &out.log_scales, &out.opacity_logits, &out.sh})
    for (double& v : *arr)
      v = static_cast<float>(v);
  return out;
}

size_t raw_attribute_bytes(const GaussianCloud& cloud) {
  return 4 * (cloud.positions.size() + cloud.rotations.size() + cloud.log_scales.size() +
              cloud.opacity_logits.size() + cloud.sh.size());
}

} // namespace splat
