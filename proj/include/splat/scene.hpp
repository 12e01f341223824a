#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

constexpr int kMaxShDegree = 3;

constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

// Per-Gaussian attributes of one time-step, stored structure-of-arrays.
// Scales are log-encoded, opacities are logits and quaternions are (w,x,y,z)
// and normalized at use.
struct GaussianCloud {
  int sh_degree = 2;
  std::vector<double> positions;      // N x 3
  std::vector<double> rotations;      // N x 4
  std::vector<double> log_scales;     // N x 3
  std::vector<double> opacity_logits; // N
  std::vector<double> sh;             // N x 3 x B, [gaussian][channel][basis]

  GaussianCloud() = default;
  explicit GaussianCloud(int degree, size_t n = 0) : sh_degree(degree) { resize(n); }

  size_t size() const { return opacity_logits.size(); }
  bool empty() const { return opacity_logits.empty(); }
  int basis() const { return sh_basis_count(sh_degree); }
  int sh_stride() const { return 3 * basis(); }

  void resize(size_t n);
  // Throws dimension_mismatch when array lengths disagree.
  void validate() const;

  Vec3 position(size_t i) const { return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]}; }
  void set_position(size_t i, const Vec3& p);
  Vec4 rotation(size_t i) const;
  Vec3 scale(size_t i) const; // activated
  double opacity(size_t i) const; // activated
  std::span<const double> sh_of(size_t i) const {
    return {sh.data() + i * sh_stride(), static_cast<size_t>(sh_stride())};
  }
  std::span<double> sh_of(size_t i) { return {sh.data() + i * sh_stride(), static_cast<size_t>(sh_stride())}; }

  // Append Gaussian `i` of `src` (same SH degree).
  void push_from(const GaussianCloud& src, size_t i);
  // Keep the rows with keep[i] != 0, preserving order.
  GaussianCloud select(std::span<const uint8_t> keep) const;

  bool operator==(const GaussianCloud&) const = default;
};

// Pinhole camera, OpenCV convention (x right, y down, z forward).
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 1, fy = 1, cx = 0, cy = 0;
  Mat3 rotation = Mat3::Identity(); // world -> camera
  Vec3 translation = Vec3::Zero();
  double near_clip = 0.01;

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }
  Eigen::Matrix4d world_to_camera() const;
  // Throws invalid_input when intrinsics or rotation are malformed.
  void validate() const;

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width,
                        int height, double fov_y_radians);
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

Mat3 quaternion_to_rotation(const Vec4& unit_q);

// R S S^T R^T for a unit quaternion and activated scales.
Mat3 build_covariance(const Vec4& q, const Vec3& s);

struct Projection {
  bool visible = false; // false: in front of the near plane (cull)
  Vec2 pixel = Vec2::Zero();
  double depth = 0;
};
Projection project_point(const Vec3& p, const Camera& cam);

// 2x3 Jacobian of the perspective projection at a camera-space point.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& p_cam, const Camera& cam);

constexpr double kCovarianceFloor = 0.3;

struct ProjectedCovariance {
  Mat2 cov = Mat2::Zero();
  bool clamped = false; // eigenvalue floor had to be applied
};
// J W Sigma W^T J^T + floor * I, with a PSD clamp at 1e-9.
ProjectedCovariance project_covariance(const Mat3& sigma, const Vec3& p_cam, const Camera& cam,
                                       double floor = kCovarianceFloor);

// Real SH basis values (and optional derivative with respect to a unit
// direction) in the ordering l^2 + l + m.
void sh_basis(const Vec3& dir, int degree, std::span<double> out,
              std::span<Vec3> d_out = {});

// coeffs is 3 x B in [channel][basis] order. Returns the clamped color.
Vec3 eval_sh(std::span<const double> coeffs, const Vec3& dir, int degree);

constexpr double kShC0 = 0.28209479177387814;

// "QGSC" file: magic, version u16, N u32, degree u8, then positions,
// rotations, log_scales, opacity_logits, sh as little-endian f32.
std::vector<uint8_t> encode_cloud(const GaussianCloud& cloud);
GaussianCloud decode_cloud(std::span<const uint8_t> bytes);
void save_cloud(const std::string& path, const GaussianCloud& cloud);
GaussianCloud load_cloud(const std::string& path);

// Rounds every attribute to the nearest f32, i.e. what a save/load round
// trip produces.
GaussianCloud round_to_f32(const GaussianCloud& cloud);

// Raw f32 size of the attribute arrays, no header.
size_t raw_attribute_bytes(const GaussianCloud& cloud);

} // namespace splat
