#include <doctest.h>

#include "splat/codec.hpp"
#include "splat/error.hpp"
#include "splat/rasterizer.hpp"
#include "splat/synth.hpp"
#include "splat/trainer.hpp"

#include <sstream>

using namespace splat;

namespace {

TrainConfig desk() {
  TrainConfig c = preset_a();
  apply_config(c, load_key_values(SPLAT_CONFIG_DIR "/desk.cfg"));
  return c;
}

SynthScene small_scene(int frames = 2, int views = 4) {
  SynthConfig sc;
  sc.n_gaussians = 60;
  sc.n_views = views;
  sc.n_frames = frames;
  sc.width = sc.height = 32;
  sc.seed = 11;
  return generate(sc);
}

ColoredPoints points_of(const GaussianCloud& c) {
  ColoredPoints p;
  for (size_t i = 0; i < c.size(); ++i) {
    p.points.push_back(c.position(i));
    p.colors.push_back(Vec3::Constant(0.5));
  }
  return p;
}

} // namespace

TEST_CASE("scene extent") {
  std::vector<Camera> cams;
  cams.push_back(Camera::look_at({2, 0, 0}, {0, 0, 0}, {0, 1, 0}, 8, 8, 1));
  cams.push_back(Camera::look_at({-2, 0, 0}, {0, 0, 0}, {0, 1, 0}, 8, 8, 1));
  CHECK(scene_extent(cams) == doctest::Approx(2.2));
  CHECK(scene_extent(std::span(cams).first(1)) == 1.0);
}

TEST_CASE("initialization from points") {
  ColoredPoints p;
  p.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  p.colors = {{1, 0, 0}, {0.5, 0.5, 0.5}, {0, 0, 1}, {0.2, 0.4, 0.6}};
  const GaussianCloud c = init_from_points(p, 2);
  REQUIRE(c.size() == 4);
  CHECK(c.opacity(0) == doctest::Approx(0.1));
  CHECK(eval_sh(c.sh_of(0), Vec3(0, 0, 1), 2)[0] == doctest::Approx(1.0));
  CHECK(eval_sh(c.sh_of(3), Vec3(1, 0, 0), 2)[1] == doctest::Approx(0.4));
  CHECK(c.scale(0).x() == doctest::Approx(1.0));
}

TEST_CASE("first frame: zero epochs returns the initialization") {
  const SynthScene s = small_scene(1);
  TrainConfig cfg = desk();
  cfg.first_frame_epochs = 0;
  const ColoredPoints pts = points_of(s.clouds[0]);
  const FirstFrameResult r = train_first_frame(s.frames[0], s.cameras, pts, cfg);
  CHECK(r.iterations == 0);
  CHECK(r.cloud == init_from_points(pts, cfg.sh_degree));
  CHECK_THROWS_AS(train_first_frame(s.frames[0], s.cameras, ColoredPoints{}, cfg), Error);
}

TEST_CASE("first frame: seeded runs are bit-identical") {
  const SynthScene s = small_scene(1);
  TrainConfig cfg = desk();
  cfg.first_frame_epochs = 30;
  cfg.ff_densify_from = 10;
  cfg.ff_densify_interval = 10;
  const ColoredPoints pts = points_of(s.clouds[0]);
  const FirstFrameResult a = train_first_frame(s.frames[0], s.cameras, pts, cfg);
  const FirstFrameResult b = train_first_frame(s.frames[0], s.cameras, pts, cfg);
  CHECK(a.cloud == b.cloud);
  CHECK(a.iterations == 30 * s.cameras.size());
}

TEST_CASE("first frame reaches 35 dB on four 64x64 views") {
  SynthConfig sc;
  sc.n_views = 4;
  sc.n_frames = 1;
  const SynthScene s = generate(sc);
  const FirstFrameResult r = train_first_frame(s.frames[0], s.cameras, points_of(s.clouds[0]), desk());
  CHECK(r.psnr >= 35.0);
  CHECK(evaluate(r.cloud, s.cameras, s.frames[0]).psnr == doctest::Approx(r.psnr).epsilon(1e-9));
  CHECK(r.sh_rest_bytes > 0);
}

TEST_CASE("residual frame: zero epochs is the identity") {
  const SynthScene s = small_scene();
  TrainConfig cfg = desk();
  cfg.residual_epochs = 0;
  const ResidualFrameResult r = train_residual_frame(s.clouds[0], s.frames[0], s.frames[1], s.cameras, cfg, 1);
  CHECK(r.cloud == s.clouds[0]);
  CHECK(r.residuals.positions.size() == 0);
  CHECK(r.residuals.additions.empty());
  for (const auto& a : r.residuals.attributes)
    for (int32_t l : a.latents)
      CHECK(l == 0);
}

TEST_CASE("residual frame: an identical frame needs no updates") {
  const SynthScene s = small_scene();
  const TrainConfig cfg = desk();
  const ResidualFrameResult r = train_residual_frame(s.clouds[0], s.frames[0], s.frames[0], s.cameras, cfg, 1);
  CHECK(r.stats.active_gates == 0);
  CHECK(r.residuals.positions.size() == 0);
  for (const auto& a : r.residuals.attributes)
    for (int32_t l : a.latents)
      CHECK(l == 0);
  CHECK(std::abs(r.stats.psnr - r.stats.initial_psnr) < 0.05);
}

TEST_CASE("residual frame: deterministic and decodable") {
  const SynthScene s = small_scene();
  TrainConfig cfg = desk();
  cfg.densify_residual = true;
  cfg.densify_threshold = 0.002;
  const ResidualFrameResult a = train_residual_frame(s.clouds[0], s.frames[0], s.frames[1], s.cameras, cfg, 1);
  const ResidualFrameResult b = train_residual_frame(s.clouds[0], s.frames[0], s.frames[1], s.cameras, cfg, 1);
  const auto bytes = pack_frame(a.residuals);
  CHECK(bytes == pack_frame(b.residuals));
  CHECK(a.stats.packet_bytes == bytes.size());
  CHECK(apply_residuals(s.clouds[0], unpack_frame(bytes)) == a.cloud);
  CHECK(a.cloud.size() == a.residuals.count_after);
  CHECK(a.stats.added + a.stats.removed > 0);
}

TEST_CASE("residual frame: loss does not increase on synthetic seeds") {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    SynthConfig sc;
    sc.n_gaussians = 60;
    sc.n_views = 4;
    sc.n_frames = 2;
    sc.width = sc.height = 32;
    sc.seed = seed;
    const SynthScene s = generate(sc);
    const ResidualFrameResult r = train_residual_frame(s.clouds[0], s.frames[0], s.frames[1], s.cameras, desk(), 1);
    CHECK(r.stats.final_loss <= r.stats.initial_loss);
  }
}

TEST_CASE("residual frame: raw mode and forced gates") {
  const SynthScene s = small_scene();
  TrainConfig cfg = desk();
  cfg.residual_mode = ResidualMode::raw;
  cfg.gate_mode = GateMode::always_on;
  const ResidualFrameResult r = train_residual_frame(s.clouds[0], s.frames[0], s.frames[1], s.cameras, cfg, 1);
  for (const auto& a : r.residuals.attributes)
    if (a.out_dim > 0)
      CHECK(a.encoding == ResidualEncoding::raw);
  for (double g : r.gates)
    CHECK(g == 1.0);
  CHECK(apply_residuals(s.clouds[0], unpack_frame(pack_frame(r.residuals))) == r.cloud);
}

TEST_CASE("residual frame: masked phase renders only masked pixels") {
  SynthConfig sc;
  sc.n_gaussians = 80;
  sc.localized = true;
  sc.n_views = 4;
  sc.n_frames = 2;
  const SynthScene s = generate(sc);
  const ResidualFrameResult r = train_residual_frame(s.clouds[0], s.frames[0], s.frames[1], s.cameras, desk(), 1);
  CHECK(r.stats.masked_iterations == static_cast<int>(0.3 * r.stats.iterations));
  CHECK(r.stats.masked_phase_rendered < r.stats.masked_phase_full);
  CHECK(r.stats.rendered_pixels < r.stats.full_pixels);
}

TEST_CASE("residual frame: mismatched inputs") {
  const SynthScene s = small_scene();
  CHECK_THROWS_AS(train_residual_frame(s.clouds[0], s.frames[0], std::span(s.frames[1]).first(2), s.cameras, desk(), 1),
                  Error);
}

TEST_CASE("stats rows") {
  std::ostringstream os;
  write_stats_header(os);
  write_stats_row(os, IterStat{2, 5, 0.5, 30.0, 3, 100, 1.5});
  CHECK(os.str().rfind("frame,iter,loss,psnr,active_gates,packet_bytes,wall_ms\n", 0) == 0);
  CHECK(os.str().find("\n2,5,") != std::string::npos);
}
