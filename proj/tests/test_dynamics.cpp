#include <doctest.h>

#include "oracles.hpp"
#include "splat/dynamics.hpp"
#include "splat/error.hpp"
#include "splat/rasterizer.hpp"
#include "splat/synth.hpp"

#include <algorithm>
#include <cmath>

using namespace splat;

namespace {

std::vector<Image> render_all(const GaussianCloud& c, const std::vector<Camera>& cams) {
  std::vector<Image> out;
  for (const Camera& cam : cams)
    out.push_back(rasterize(c, cam).image);
  return out;
}

ScoreVector make_scores(std::vector<double> norms) {
  ScoreVector s;
  s.norms = norms;
  for (double n : norms) {
    s.d.push_back(n);
    s.d.push_back(0);
  }
  return s;
}

} // namespace

TEST_CASE("identical frames give zero scores") {
  std::mt19937_64 rng(1);
  const GaussianCloud c = oracle::random_cloud(rng, 15, 1);
  std::vector<Camera> cams{oracle::random_camera(rng, 32, 32), oracle::random_camera(rng, 32, 32)};
  std::vector<Image> frames = render_all(c, cams);
  for (Image& f : frames)
    for (double& v : f.data)
      v = std::clamp(v + 0.05, 0.0, 1.0);
  const ScoreVector s = score_vector(c, cams, frames, frames);
  REQUIRE(s.size() == c.size());
  for (double d : s.d)
    CHECK(std::abs(d) <= 1e-7);
}

TEST_CASE("the moving Gaussian gets the largest score") {
  SynthConfig cfg;
  cfg.n_gaussians = 30;
  cfg.dynamic_fraction = 1.0 / 30;
  cfg.n_views = 4;
  cfg.n_frames = 2;
  cfg.seed = 3;
  const SynthScene scene = generate(cfg);
  const ScoreVector s = score_vector(scene.clouds[0], scene.cameras, scene.frames[0], scene.frames[1]);
  const size_t top = std::max_element(s.norms.begin(), s.norms.end()) - s.norms.begin();
  CHECK(scene.labels[top] == 1);
}

TEST_CASE("a color change in one isolated Gaussian gives it the largest score") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  GaussianCloud c(0, 9);
  for (size_t i = 0; i < 9; ++i) {
    c.set_position(i, {(static_cast<int>(i % 3) - 1) * 0.8 + jitter(rng),
                       (static_cast<int>(i / 3) - 1) * 0.8 + jitter(rng), jitter(rng)});
    c.rotations[4 * i] = 1;
    c.rotations[4 * i + 1] = jitter(rng);
    c.log_scales[3 * i] = std::log(0.08);
    c.log_scales[3 * i + 1] = std::log(0.05);
    c.log_scales[3 * i + 2] = std::log(0.06);
    c.opacity_logits[i] = 1.0;
    for (int ch = 0; ch < 3; ++ch)
      c.sh[3 * i + ch] = jitter(rng) * 10;
  }
  GaussianCloud changed = c;
  changed.sh[3 * 5 + 0] += 1.0;
  changed.sh[3 * 5 + 2] -= 0.5;
  const std::vector<Camera> cams{Camera::look_at({0.3, -0.2, -3}, {0, 0, 0}, {0, -1, 0}, 48, 48, 0.8),
                                 Camera::look_at({-0.4, 0.3, -3}, {0, 0, 0}, {0, -1, 0}, 48, 48, 0.8)};
  const ScoreVector s = score_vector(c, cams, render_all(c, cams), render_all(changed, cams));
  const size_t top = std::max_element(s.norms.begin(), s.norms.end()) - s.norms.begin();
  CHECK(top == 5);
  CHECK(s.norms[5] > 0);
}

TEST_CASE("scores average over views") {
  std::mt19937_64 rng(4);
  const GaussianCloud c = oracle::random_cloud(rng, 10, 1);
  GaussianCloud moved = c;
  moved.positions[0] += 0.1;
  const std::vector<Camera> one{oracle::random_camera(rng, 32, 32)};
  const std::vector<Camera> two{one[0], oracle::random_camera(rng, 32, 32)};
  const auto prev = render_all(c, two);
  auto next = render_all(moved, two);
  next[1] = prev[1];
  const ScoreVector single = score_vector(c, one, {prev.data(), 1}, {next.data(), 1});
  const ScoreVector both = score_vector(c, two, prev, next);
  for (size_t i = 0; i < single.d.size(); ++i)
    CHECK(both.d[i] == doctest::Approx(single.d[i] / 2).epsilon(1e-12));
  CHECK_THROWS_AS(score_vector(c, two, prev, {next.data(), 1}), Error);
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int n = 1; n < 40; ++n) {
    std::vector<double> v(n);
    for (double& x : v)
      x = u(rng);
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    const double ref = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
    CHECK(median(v) == ref);
  }
}

TEST_CASE("gate initialization probabilities") {
  const auto p = gate_init_probs(make_scores({0.0, 1.0, 2.0, 4.0, 2.0}));
  CHECK(p[0] == 0.0);
  CHECK(p[2] == doctest::Approx(0.5));
  CHECK(p[3] == doctest::Approx(4.0 / 6.0));
  for (size_t i = 1; i < p.size(); ++i)
    CHECK(p[i] < 1.0);
  const auto z = gate_init_probs(make_scores({0.0, 0.0, 0.0, 3.0}));
  CHECK(z == std::vector<double>{0, 0, 0, 1});
  const auto scaled = gate_init_probs(make_scores({0.0, 7.0, 14.0, 28.0, 14.0}));
  for (size_t i = 0; i < p.size(); ++i)
    CHECK(scaled[i] == doctest::Approx(p[i]).epsilon(1e-12));
}

TEST_CASE("dynamic masks: nothing above threshold") {
  std::mt19937_64 rng(6);
  const GaussianCloud c = oracle::random_cloud(rng, 5, 0);
  const std::vector<Camera> cams{oracle::random_camera(rng, 32, 32)};
  const DynamicMasks m = dynamic_masks(c, make_scores({0, 1e-4, 0, 0, 0.001}), 0.001, cams, 48);
  CHECK(m.dynamic.empty());
  REQUIRE(m.masks.size() == 1);
  CHECK(m.masks[0].count() == 0);
}

TEST_CASE("a one-pixel dynamic Gaussian dilates to a clipped 48x48 block") {
  Camera cam;
  cam.width = cam.height = 64;
  cam.fx = cam.fy = 50;
  cam.cx = cam.cy = 31.5;
  GaussianCloud c(0, 2);
  for (size_t i = 0; i < 2; ++i) {
    c.rotations[4 * i] = 1;
    for (int k = 0; k < 3; ++k)
      c.log_scales[3 * i + k] = std::log(1e-4);
    c.opacity_logits[i] = logit(0.02);
  }
  // pixel (10, 10) at depth 5
  c.set_position(0, {(10 - 31.5) * 5 / 50, (10 - 31.5) * 5 / 50, 5});
  c.set_position(1, {0.5, 0.5, 5});
  const std::vector<Camera> cams{cam};
  const DynamicMasks undilated = dynamic_masks(c, make_scores({1, 0}), 0.001, cams, 1);
  REQUIRE(undilated.masks[0].count() == 1);
  CHECK(undilated.masks[0](10, 10));
  const DynamicMasks m = dynamic_masks(c, make_scores({1, 0}), 0.001, cams, 48);
  CHECK(m.dynamic == std::vector<uint32_t>{0});
  // offsets -24..23 around 10, clipped to 0..33
  CHECK(m.masks[0].count() == 34 * 34);
  CHECK(m.masks[0](0, 0));
  CHECK(m.masks[0](33, 33));
  CHECK_FALSE(m.masks[0](34, 10));
}

TEST_CASE("raising the threshold never adds mask pixels") {
  std::mt19937_64 rng(7);
  const GaussianCloud c = oracle::random_cloud(rng, 20, 0);
  const std::vector<Camera> cams{oracle::random_camera(rng, 32, 32)};
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> norms(20);
  for (double& x : norms)
    x = u(rng);
  const ScoreVector s = make_scores(norms);
  size_t prev = SIZE_MAX;
  for (double t : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    const DynamicMasks m = dynamic_masks(c, s, t, cams, 5);
    CHECK(m.masks[0].count() <= prev);
    prev = m.masks[0].count();
  }
}
