#include "splat/synth.hpp"

#include "splat/bytes.hpp"
#include "splat/config.hpp"
#include "splat/error.hpp"
#include "splat/rasterizer.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace splat {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct MotionParams {
  MotionKind kind = MotionKind::translate;
  Vec3 direction = Vec3::UnitX();
  Vec3 color_dir = Vec3::UnitX();
};

struct SynthBase {
  GaussianCloud cloud;
  std::vector<uint8_t> labels;
  std::vector<MotionParams> motion;
  Vec3 dynamic_center = Vec3::Zero();
};

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

SynthBase make_base(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const size_t n = static_cast<size_t>(cfg.n_gaussians);
  SynthBase b;
  b.cloud = GaussianCloud(cfg.sh_degree, n);
  const int nb = b.cloud.basis();
  for (size_t i = 0; i < n; ++i) {
    b.cloud.set_position(i, Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5));
    const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
    const Eigen::Quaterniond q = Eigen::Quaterniond(std::sqrt(1 - u1) * std::sin(2 * kPi * u2), std::sqrt(1 - u1) * std::cos(2 * kPi * u2),
                           std::sqrt(u1) * std::sin(2 * kPi * u3), std::sqrt(u1) * std::cos(2 * kPi * u3));
    b.cloud.rotations[4 * i] = q.w();
    b.cloud.rotations[4 * i + 1] = q.x();
    b.cloud.rotations[4 * i + 2] = q.y();
    b.cloud.rotations[4 * i + 3] = q.z();
    for (int a = 0; a < 3; ++a)
      b.cloud.log_scales[3 * i + a] = std::log(0.03 + 0.05 * u(rng));
    b.cloud.opacity_logits[i] = logit(0.5 + 0.45 * u(rng));
    for (int c = 0; c < 3; ++c) {
      b.cloud.sh[i * 3 * nb + c * nb] = (0.1 + 0.8 * u(rng) - 0.5) / kShC0;
      for (int k = 1; k < nb; ++k)
        b.cloud.sh[i * 3 * nb + c * nb + k] = 0.1 * u(rng) - 0.05;
    }
  }

  // Dynamic subset.
  const size_t k = cfg.dynamic_count();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  if (cfg.localized && n > 0) {
    const Vec3 anchor = b.cloud.position(static_cast<size_t>(u(rng) * static_cast<double>(n)) % n);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t c) {
      return (b.cloud.position(a) - anchor).squaredNorm() < (b.cloud.position(c) - anchor).squaredNorm();
    });
  } else {
    std::shuffle(order.begin(), order.end(), rng);
  }
  b.labels.assign(n, 0);
  for (size_t j = 0; j < k; ++j)
    b.labels[order[j]] = 1;

  b.motion.resize(n);
  size_t dyn_index = 0;
  size_t dyn_total = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!b.labels[i])
      continue;
    MotionParams& mp = b.motion[i];
    mp.direction = random_unit(rng);
    mp.color_dir = random_unit(rng);
    mp.kind = cfg.motion;
    if (cfg.motion == MotionKind::mixed)
      mp.kind = static_cast<MotionKind>(dyn_index % 4);
    ++dyn_index;
    b.dynamic_center += b.cloud.position(i);
    ++dyn_total;
  }
  if (dyn_total)
    b.dynamic_center /= static_cast<double>(dyn_total);
  return b;
}

GaussianCloud cloud_at(const SynthBase& b, const SynthConfig& cfg, int frame) {
  GaussianCloud c = b.cloud;
  const double s = cfg.n_frames > 1 ? static_cast<double>(frame) / (cfg.n_frames - 1) : 0.0;
  const int nb = c.basis();
  const double a = cfg.amplitude;
  for (size_t i = 0; i < c.size(); ++i) {
    if (!b.labels[i])
      continue;
    const MotionParams& mp = b.motion[i];
    switch (mp.kind) {
    case MotionKind::translate:
      c.set_position(i, c.position(i) + a * s * mp.direction);
      break;
    case MotionKind::orbit: {
      const Eigen::AngleAxisd rot(a * s, Vec3::UnitY());
      c.set_position(i, b.dynamic_center + rot * (c.position(i) - b.dynamic_center));
      const Vec4 q = c.rotation(i);
      const Eigen::Quaterniond qr = Eigen::Quaterniond(rot) * Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
      c.rotations[4 * i] = qr.w();
      c.rotations[4 * i + 1] = qr.x();
      c.rotations[4 * i + 2] = qr.y();
      c.rotations[4 * i + 3] = qr.z();
      break;
    }
    case MotionKind::color_shift:
      for (int ch = 0; ch < 3; ++ch)
        c.sh[i * 3 * nb + ch * nb] += a * s * mp.color_dir[ch] / kShC0;
      break;
    case MotionKind::opacity_pulse:
      c.opacity_logits[i] += a * std::sin(kPi * s);
      break;
    case MotionKind::mixed:
      break;
    }
  }
  return c;
}

std::vector<Camera> make_cameras(const SynthConfig& cfg, int count, double phase) {
  std::vector<Camera> cams;
  const double fov = cfg.fov_deg * kPi / 180.0;
  for (int v = 0; v < count; ++v) {
    const double ang = 2 * kPi * (v + phase) / std::max(count, 1);
    const double elev = (v % 2 == 0 ? 0.25 : -0.25) * cfg.camera_distance;
    const Vec3 eye(cfg.camera_distance * std::cos(ang), elev, cfg.camera_distance * std::sin(ang));
    cams.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3::UnitY(), cfg.width, cfg.height, fov));
  }
  return cams;
}

std::string two_digits(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", v);
  return buf;
}

} // namespace

void SynthConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok)
      fail(ErrorKind::config_error, what);
  };
  check(n_gaussians >= 1, "n_gaussians must be >= 1");
  check(dynamic_fraction >= 0 && dynamic_fraction <= 1, "dynamic_fraction must be in [0,1]");
  check(n_views >= 1, "n_views must be >= 1");
  check(n_frames >= 1, "n_frames must be >= 1");
  check(n_test_views >= 0, "n_test_views must be >= 0");
  check(width >= 16 && height >= 16, "image size must be at least 16x16");
  check(sh_degree >= 0 && sh_degree <= kMaxShDegree, "sh_degree must be in 0..3");
  check(camera_distance > 1, "camera_distance must exceed 1");
  check(fov_deg > 1 && fov_deg < 170, "fov_deg must be in (1,170)");
}

size_t SynthConfig::dynamic_count() const {
  return static_cast<size_t>(std::lround(dynamic_fraction * n_gaussians));
}

std::string motion_name(MotionKind kind) {
  switch (kind) {
  case MotionKind::translate: return "translate";
  case MotionKind::orbit: return "orbit";
  case MotionKind::color_shift: return "color_shift";
  case MotionKind::opacity_pulse: return "opacity_pulse";
  case MotionKind::mixed: return "mixed";
  }
  return "translate";
}

MotionKind parse_motion(const std::string& name) {
  for (MotionKind k : {MotionKind::translate, MotionKind::orbit, MotionKind::color_shift,
                       MotionKind::opacity_pulse, MotionKind::mixed})
    if (motion_name(k) == name)
      return k;
  fail(ErrorKind::config_error, "invalid motion kind '" + name +
                                    "' (valid: translate, orbit, color_shift, opacity_pulse, mixed)");
}

void apply_synth_config(SynthConfig& cfg, const std::map<std::string, std::string>& kv) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : kv) {
    auto num = [&](auto& field) {
      std::istringstream is(value);
      is >> field;
      if (!is || !is.eof())
        fail(ErrorKind::config_error, "bad value for " + key + ": '" + value + "'");
    };
    if (key == "n_gaussians") num(cfg.n_gaussians);
    else if (key == "dynamic_fraction") num(cfg.dynamic_fraction);
    else if (key == "motion") cfg.motion = parse_motion(value);
    else if (key == "amplitude") num(cfg.amplitude);
    else if (key == "localized") {
      if (value != "true" && value != "false")
        fail(ErrorKind::config_error, "bad value for localized: '" + value + "'");
      cfg.localized = value == "true";
    }
    else if (key == "n_views") num(cfg.n_views);
    else if (key == "n_test_views") num(cfg.n_test_views);
    else if (key == "width") num(cfg.width);
    else if (key == "height") num(cfg.height);
    else if (key == "n_frames") num(cfg.n_frames);
    else if (key == "sh_degree") num(cfg.sh_degree);
    else if (key == "camera_distance") num(cfg.camera_distance);
    else if (key == "fov_deg") num(cfg.fov_deg);
    else if (key == "seed") num(cfg.seed);
    else unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown scene keys:";
    for (const auto& k : unknown)
      msg += " " + k;
    fail(ErrorKind::config_error, msg);
  }
}

std::string synth_config_to_text(const SynthConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "n_gaussians = " << c.n_gaussians << "\n"
     << "dynamic_fraction = " << c.dynamic_fraction << "\n"
     << "motion = " << motion_name(c.motion) << "\n"
     << "amplitude = " << c.amplitude << "\n"
     << "localized = " << (c.localized ? "true" : "false") << "\n"
     << "n_views = " << c.n_views << "\n"
     << "n_test_views = " << c.n_test_views << "\n"
     << "width = " << c.width << "\n"
     << "height = " << c.height << "\n"
     << "n_frames = " << c.n_frames << "\n"
     << "sh_degree = " << c.sh_degree << "\n"
     << "camera_distance = " << c.camera_distance << "\n"
     << "fov_deg = " << c.fov_deg << "\n"
     << "seed = " << c.seed << "\n";
  return os.str();
}

GaussianCloud synth_cloud(const SynthConfig& cfg, int frame, std::vector<uint8_t>* labels) {
  const SynthBase b = make_base(cfg);
  if (labels)
    *labels = b.labels;
  return cloud_at(b, cfg, frame);
}

SynthScene generate(const SynthConfig& cfg) {
  const SynthBase b = make_base(cfg);
  SynthScene s;
  s.config = cfg;
  s.labels = b.labels;
  s.cameras = make_cameras(cfg, cfg.n_views, 0.0);
  s.test_cameras = make_cameras(cfg, cfg.n_test_views, 0.5);
  for (int t = 0; t < cfg.n_frames; ++t) {
    // Stored clouds are what a QGSC round trip gives, so the frames can be
    // reproduced from the files.
    GaussianCloud c = round_to_f32(cloud_at(b, cfg, t));
    std::vector<Image> views, tests;
    for (const Camera& cam : s.cameras)
      views.push_back(rasterize(c, cam).image);
    for (const Camera& cam : s.test_cameras)
      tests.push_back(rasterize(c, cam).image);
    s.clouds.push_back(std::move(c));
    s.frames.push_back(std::move(views));
    s.test_frames.push_back(std::move(tests));
  }
  return s;
}

std::string camera_to_line(const Camera& cam) {
  std::ostringstream os;
  os.precision(17);
  os << cam.width << " " << cam.height << " " << cam.fx << " " << cam.fy << " " << cam.cx << " "
     << cam.cy << " " << cam.near_clip;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      os << " " << cam.rotation(r, c);
  for (int k = 0; k < 3; ++k)
    os << " " << cam.translation[k];
  return os.str();
}

Camera camera_from_line(const std::string& line) {
  std::istringstream is(line);
  Camera cam;
  is >> cam.width >> cam.height >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> cam.near_clip;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      is >> cam.rotation(r, c);
  for (int k = 0; k < 3; ++k)
    is >> cam.translation[k];
  if (!is)
    fail(ErrorKind::decode_error, "malformed camera line: " + line);
  std::string rest;
  if (is >> rest)
    fail(ErrorKind::decode_error, "trailing fields in camera line: " + line);
  cam.validate();
  return cam;
}

void save_cameras(const std::string& path, const std::vector<Camera>& cams) {
  std::string text;
  for (const Camera& c : cams)
    text += camera_to_line(c) + "\n";
  write_file(path, {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

std::vector<Camera> load_cameras(const std::string& path) {
  const auto bytes = read_file(path);
  std::istringstream is(std::string(bytes.begin(), bytes.end()));
  std::vector<Camera> cams;
  std::string line;
  while (std::getline(is, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos)
      cams.push_back(camera_from_line(line));
  return cams;
}

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d", t);
  return buf;
}

void save_bundle(const std::string& dir, const SynthScene& scene) {
  fs::create_directories(fs::path(dir) / "gt");
  fs::create_directories(fs::path(dir) / "frames");
  const std::string cfg = synth_config_to_text(scene.config);
  write_file(dir + "/scene.cfg", {reinterpret_cast<const uint8_t*>(cfg.data()), cfg.size()});
  save_cameras(dir + "/cameras.txt", scene.cameras);
  save_cameras(dir + "/test_cameras.txt", scene.test_cameras);
  write_file(dir + "/labels.u8", scene.labels);
  for (size_t t = 0; t < scene.clouds.size(); ++t) {
    const std::string name = frame_name(static_cast<int>(t));
    save_cloud(dir + "/gt/" + name + ".qgsc", scene.clouds[t]);
    const fs::path fdir = fs::path(dir) / "frames" / name;
    fs::create_directories(fdir);
    for (size_t v = 0; v < scene.frames[t].size(); ++v)
      write_png((fdir / ("view_" + two_digits(static_cast<int>(v)) + ".png")).string(), scene.frames[t][v]);
    for (size_t v = 0; v < scene.test_frames[t].size(); ++v)
      write_png((fdir / ("test_" + two_digits(static_cast<int>(v)) + ".png")).string(),
                scene.test_frames[t][v]);
  }
}

SceneBundle load_bundle(const std::string& dir) {
  if (!fs::is_directory(dir))
    fail(ErrorKind::io_error, "scene directory not found: " + dir);
  SceneBundle b;
  b.dir = dir;
  apply_synth_config(b.config, load_key_values(dir + "/scene.cfg"));
  b.cameras = load_cameras(dir + "/cameras.txt");
  if (fs::exists(dir + "/test_cameras.txt"))
    b.test_cameras = load_cameras(dir + "/test_cameras.txt");
  if (fs::exists(dir + "/labels.u8"))
    b.labels = read_file(dir + "/labels.u8");
  while (fs::is_directory(fs::path(dir) / "frames" / frame_name(b.n_frames)))
    ++b.n_frames;
  if (b.cameras.empty())
    fail(ErrorKind::missing_data, "scene has no cameras: " + dir);
  if (b.n_frames == 0)
    fail(ErrorKind::missing_data, "scene has no frames: " + dir);
  return b;
}

std::vector<Image> SceneBundle::frames(int t) const {
  std::vector<Image> out;
  for (size_t v = 0; v < cameras.size(); ++v) {
    const fs::path p = fs::path(dir) / "frames" / frame_name(t) / ("view_" + two_digits(static_cast<int>(v)) + ".png");
    if (!fs::exists(p))
      fail(ErrorKind::missing_data, "missing frame image " + p.string());
    out.push_back(read_png(p.string()));
  }
  return out;
}

std::vector<Image> SceneBundle::test_frames(int t) const {
  std::vector<Image> out;
  for (size_t v = 0; v < test_cameras.size(); ++v) {
    const fs::path p = fs::path(dir) / "frames" / frame_name(t) / ("test_" + two_digits(static_cast<int>(v)) + ".png");
    if (!fs::exists(p))
      fail(ErrorKind::missing_data, "missing test image " + p.string());
    out.push_back(read_png(p.string()));
  }
  return out;
}

GaussianCloud SceneBundle::ground_truth(int t) const {
  return load_cloud(dir + "/gt/" + frame_name(t) + ".qgsc");
}

} // namespace splat
