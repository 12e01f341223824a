#include <doctest.h>

#include "oracles.hpp"
#include "splat/bytes.hpp"
#include "splat/error.hpp"
#include "splat/scene.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace splat;

TEST_CASE("SH basis matches the explicit polynomial table") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
    for (int deg = 0; deg <= kMaxShDegree; ++deg) {
      std::vector<double> b(sh_basis_count(deg));
      sh_basis(d, deg, b);
      const std::vector<double> ref = oracle::sh_table(d, deg);
      for (size_t k = 0; k < b.size(); ++k)
        CHECK(b[k] == doctest::Approx(ref[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("SH basis derivatives match finite differences") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
  const int nb = sh_basis_count(3);
  std::vector<double> b(nb);
  std::vector<Vec3> db(nb);
  sh_basis(d, 3, b, db);
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 dp = d, dm = d;
    dp[axis] += 1e-6;
    dm[axis] -= 1e-6;
    std::vector<double> bp(nb), bm(nb);
    sh_basis(dp, 3, bp);
    sh_basis(dm, 3, bm);
    for (int k = 0; k < nb; ++k)
      CHECK(db[k][axis] == doctest::Approx((bp[k] - bm[k]) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("degree-0 color is 0.5 + C0 * dc, clamped at zero") {
  const std::vector<double> c{1.0, -3.0, 0.0};
  const Vec3 rgb = eval_sh(c, Vec3(0, 0, 1), 0);
  CHECK(rgb[0] == doctest::Approx(0.5 + kShC0));
  CHECK(rgb[1] == 0.0);
  CHECK(rgb[2] == doctest::Approx(0.5));
}

TEST_CASE("projection agrees with homogeneous K [R|t]") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Camera cam = oracle::random_camera(rng, 40, 30);
    const GaussianCloud c = oracle::random_cloud(rng, 5, 0);
    for (size_t i = 0; i < c.size(); ++i) {
      const Projection p = project_point(c.position(i), cam);
      REQUIRE(p.visible);
      const Vec2 ref = oracle::project_homogeneous(c.position(i), cam);
      CHECK((p.pixel - ref).norm() <= 1e-9);
    }
  }
}

TEST_CASE("points behind the near plane are culled") {
  Camera cam;
  cam.width = cam.height = 8;
  CHECK_FALSE(project_point(Vec3(0, 0, -1), cam).visible);
  CHECK_FALSE(project_point(Vec3(0, 0, 0.001), cam).visible);
  CHECK(project_point(Vec3(0, 0, 1), cam).visible);
}

TEST_CASE("look_at puts the target on the principal point") {
  const Camera cam = Camera::look_at({3, 1, -2}, {0.2, 0.1, 0.3}, {0, -1, 0}, 64, 48, 0.7);
  const Projection p = project_point({0.2, 0.1, 0.3}, cam);
  CHECK(p.pixel.x() == doctest::Approx(cam.cx));
  CHECK(p.pixel.y() == doctest::Approx(cam.cy));
  CHECK((cam.rotation * cam.rotation.transpose() - Mat3::Identity()).norm() < 1e-12);
  CHECK((cam.center() - Vec3(3, 1, -2)).norm() < 1e-12);
}

TEST_CASE("3D covariance is symmetric PSD and projects to a positive definite 2D covariance") {
  std::mt19937_64 rng(5);
  const GaussianCloud c = oracle::random_cloud(rng, 20, 0);
  const Camera cam = oracle::random_camera(rng, 32, 32);
  for (size_t i = 0; i < c.size(); ++i) {
    const Mat3 s = build_covariance(c.rotation(i), c.scale(i));
    CHECK((s - s.transpose()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> es(s);
    CHECK(es.eigenvalues().minCoeff() > -1e-12);
    const ProjectedCovariance pc = project_covariance(s, cam.to_camera(c.position(i)), cam);
    CHECK(pc.cov.determinant() > 0);
    CHECK(pc.cov(0, 0) >= kCovarianceFloor);
  }
}

TEST_CASE("normalized quaternions give proper rotations") {
  const Vec4 q(2, 0.4, -0.6, 1.0);
  GaussianCloud c(0, 1);
  c.rotations = {q[0], q[1], q[2], q[3]};
  CHECK(c.rotation(0) == q);
  const Mat3 r = quaternion_to_rotation(q.normalized());
  CHECK((r * r.transpose() - Mat3::Identity()).norm() < 1e-12);
  CHECK(r.determinant() == doctest::Approx(1.0));
}

TEST_CASE("cloud file round trip is exact after f32 rounding") {
  std::mt19937_64 rng(6);
  const GaussianCloud c = oracle::random_cloud(rng, 17, 2);
  const GaussianCloud back = decode_cloud(encode_cloud(c));
  CHECK(back == round_to_f32(c));
  CHECK(decode_cloud(encode_cloud(back)) == back);
  CHECK(raw_attribute_bytes(c) == 17 * (3 + 4 + 3 + 1 + 27) * 4);
}

TEST_CASE("corrupted cloud files raise decode_error") {
  std::mt19937_64 rng(7);
  auto bytes = encode_cloud(oracle::random_cloud(rng, 4, 1));
  auto expect_decode_error = [](std::span<const uint8_t> b) {
    try {
      decode_cloud(b);
      FAIL("expected decode_error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::decode_error);
    }
  };
  auto truncated = bytes;
  truncated.pop_back();
  expect_decode_error(truncated);
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xFF;
  expect_decode_error(bad_magic);
  auto trailing = bytes;
  trailing.push_back(0);
  expect_decode_error(trailing);
}

TEST_CASE("select and push_from preserve rows") {
  std::mt19937_64 rng(8);
  const GaussianCloud c = oracle::random_cloud(rng, 5, 1);
  const std::vector<uint8_t> keep{1, 0, 1, 0, 1};
  const GaussianCloud s = c.select(keep);
  REQUIRE(s.size() == 3);
  CHECK(s.position(1) == c.position(2));
  GaussianCloud p(1);
  p.push_from(c, 4);
  CHECK(p.position(0) == c.position(4));
  CHECK(std::vector<double>(p.sh_of(0).begin(), p.sh_of(0).end()) ==
        std::vector<double>(c.sh_of(4).begin(), c.sh_of(4).end()));
}

TEST_CASE("validate catches inconsistent arrays") {
  GaussianCloud c(1, 3);
  c.validate();
  c.rotations.pop_back();
  CHECK_THROWS_AS(c.validate(), Error);
  Camera cam;
  cam.width = 0;
  CHECK_THROWS_AS(cam.validate(), Error);
}
