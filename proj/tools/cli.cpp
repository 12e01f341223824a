#include "cli.hpp"

#include "plot.hpp"

#include "splat/bytes.hpp"
#include "splat/codec.hpp"
#include "splat/error.hpp"
#include "splat/image.hpp"
#include "splat/rasterizer.hpp"
#include "splat/synth.hpp"
#include "splat/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace splat::cli {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    fail(ErrorKind::io_error, "cannot create directory " + dir);
}

std::string read_text(const std::string& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

json row_to_json(const FrameRow& r) {
  return {{"frame", r.frame},         {"file", r.file},         {"bytes", r.bytes},
          {"gaussians", r.gaussians}, {"psnr_db", r.psnr_db},   {"ssim", r.ssim},
          {"active_gates", r.active_gates}, {"train_ms", r.train_ms}, {"render_fps", r.render_fps}};
}

FrameRow row_from_json(const json& j) {
  FrameRow r;
  r.frame = j.at("frame").get<int>();
  r.file = j.at("file").get<std::string>();
  r.bytes = j.at("bytes").get<size_t>();
  r.gaussians = j.at("gaussians").get<size_t>();
  r.psnr_db = j.at("psnr_db").get<double>();
  r.ssim = j.at("ssim").get<double>();
  r.active_gates = j.at("active_gates").get<size_t>();
  r.train_ms = j.at("train_ms").get<double>();
  r.render_fps = j.at("render_fps").get<double>();
  return r;
}

// Views rendered per second over one pass of every camera.
double measure_fps(const GaussianCloud& cloud, const std::vector<Camera>& cams) {
  const auto t0 = Clock::now();
  for (const Camera& c : cams)
    rasterize(cloud, c);
  const double s = ms_since(t0) / 1000.0;
  return s > 0 ? static_cast<double>(cams.size()) / s : 0.0;
}

// Positions of the reference frame-0 cloud, colored by the mean of the
// training pixels they project to. Stand-in for a structure-from-motion
// point cloud.
ColoredPoints initial_points(const SceneBundle& b, const std::vector<Image>& frames) {
  const GaussianCloud gt = b.ground_truth(0);
  ColoredPoints pts;
  for (size_t i = 0; i < gt.size(); ++i) {
    const Vec3 p = gt.position(i);
    Vec3 sum = Vec3::Zero();
    int hits = 0;
    for (size_t v = 0; v < b.cameras.size(); ++v) {
      const Projection pr = project_point(p, b.cameras[v]);
      const int x = static_cast<int>(std::lround(pr.pixel.x()));
      const int y = static_cast<int>(std::lround(pr.pixel.y()));
      if (!pr.visible || x < 0 || y < 0 || x >= frames[v].width || y >= frames[v].height)
        continue;
      for (int c = 0; c < 3; ++c)
        sum[c] += frames[v].at(x, y, c);
      ++hits;
    }
    pts.points.push_back(p);
    pts.colors.push_back(hits ? Vec3(sum / hits) : Vec3::Constant(0.5));
  }
  return pts;
}

std::vector<std::vector<double>> load_depths(const SceneBundle& b) {
  std::vector<std::vector<double>> out;
  for (size_t v = 0; v < b.cameras.size(); ++v) {
    const fs::path p = fs::path(b.dir) / "depth" / ("view_" + std::string(v < 10 ? "0" : "") + std::to_string(v) + ".qimg");
    if (!fs::exists(p))
      fail(ErrorKind::missing_data, "depth_init needs depth maps; missing " + p.string());
    const Image d = read_qimg(p.string());
    require(d.channels == 1 && d.width == b.cameras[v].width && d.height == b.cameras[v].height,
            ErrorKind::dimension_mismatch, "depth map does not match its camera: " + p.string());
    out.push_back(d.data);
  }
  return out;
}

// Highest frame index with a stream file, or -1.
int last_stream_frame(const std::string& dir) {
  int last = -1;
  if (!fs::is_directory(dir))
    return last;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    int t = 0;
    char ext[8] = {};
    if (std::sscanf(n.c_str(), "frame_%d.%5s", &t, ext) == 2 && n.size() == 15 &&
        (std::string(ext) == "qgsc" || std::string(ext) == "qnfp"))
      last = std::max(last, t);
  }
  return last;
}

std::vector<Camera> stream_cameras(const std::string& dir, bool test) {
  const std::string p = path_in(dir, test ? "test_cameras.txt" : "cameras.txt");
  if (!fs::exists(p))
    fail(ErrorKind::missing_data, "stream has no " + std::string(test ? "test " : "") + "cameras: " + p);
  return load_cameras(p);
}

} // namespace

std::string cloud_file(int t) { return frame_name(t) + ".qgsc"; }
std::string packet_file(int t) { return frame_name(t) + ".qnfp"; }

RunManifest load_manifest(const std::string& stream_dir) {
  const std::string p = path_in(stream_dir, "manifest.json");
  if (!fs::exists(p))
    fail(ErrorKind::missing_data, "no manifest.json in " + stream_dir);
  try {
    const json j = json::parse(read_text(p));
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.scene_hash = j.at("scene_hash").get<std::string>();
    m.config_text = j.at("config").get<std::string>();
    m.scene_dir = j.at("scene").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    for (const json& r : j.at("frames"))
      m.rows.push_back(row_from_json(r));
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::decode_error, "malformed manifest " + p + ": " + e.what());
  }
}

void save_manifest(const std::string& stream_dir, const RunManifest& m) {
  json rows = json::array();
  for (const FrameRow& r : m.rows)
    rows.push_back(row_to_json(r));
  const json j = {{"format", "splatstream"}, {"version", 1},          {"config_hash", m.config_hash},
                  {"scene_hash", m.scene_hash}, {"scene", m.scene_dir}, {"seed", m.seed},
                  {"config", m.config_text},  {"frames", rows}};
  write_text_atomic(path_in(stream_dir, "manifest.json"), j.dump(2) + "\n");
}

TrainConfig resolve_config(const ConfigSources& src) {
  TrainConfig cfg = preset(src.preset);
  if (!src.config_path.empty()) {
    if (!fs::exists(src.config_path))
      fail(ErrorKind::io_error, "config file not found: " + src.config_path);
    apply_config(cfg, load_key_values(src.config_path));
  }
  if (src.seed)
    cfg.seed = *src.seed;
  cfg.validate();
  return cfg;
}

void cmd_synth(const SynthOptions& opt, std::ostream& log) {
  SynthConfig cfg;
  if (!opt.config_path.empty()) {
    if (!fs::exists(opt.config_path))
      fail(ErrorKind::io_error, "config file not found: " + opt.config_path);
    apply_synth_config(cfg, load_key_values(opt.config_path));
  }
  if (opt.seed)
    cfg.seed = *opt.seed;
  if (opt.frames)
    cfg.n_frames = *opt.frames;
  cfg.validate();
  ensure_dir(opt.out_dir);
  const SynthScene scene = generate(cfg);
  save_bundle(opt.out_dir, scene);
  log << "synth: " << cfg.n_frames << " frames, " << cfg.n_views << " views, " << cfg.n_gaussians
      << " gaussians (" << cfg.dynamic_count() << " dynamic) -> " << opt.out_dir << "\n";
}

RunManifest cmd_encode(const EncodeOptions& opt, std::ostream& log) {
  const TrainConfig cfg = resolve_config(opt.config);
  const SceneBundle bundle = load_bundle(opt.scene_dir);
  int n_frames = bundle.n_frames;
  if (opt.frames) {
    require(*opt.frames >= 1 && *opt.frames <= bundle.n_frames, ErrorKind::invalid_input,
            "--frames must be in 1.." + std::to_string(bundle.n_frames));
    n_frames = *opt.frames;
  }
  const std::vector<Camera>& cams = bundle.cameras;

  RunManifest m;
  m.config_text = config_to_text(cfg);
  m.config_hash = hex64(config_hash(cfg));
  m.scene_hash = hex64(fnv1a64(synth_config_to_text(bundle.config)));
  m.scene_dir = fs::absolute(opt.scene_dir).lexically_normal().string();
  m.seed = cfg.seed;

  ensure_dir(opt.out_dir);
  const std::string out = opt.out_dir;

  // Resume: keep every frame that has both a valid file and a manifest row.
  GaussianCloud cloud;
  int done = -1;
  if (fs::exists(path_in(out, "manifest.json"))) {
    const RunManifest old = load_manifest(out);
    if (old.config_hash != m.config_hash)
      fail(ErrorKind::config_mismatch, "stream " + out + " was encoded with config " + old.config_hash +
                                           ", current config is " + m.config_hash);
    if (old.scene_hash != m.scene_hash)
      fail(ErrorKind::config_mismatch, "stream " + out + " was encoded from a different scene");
    for (const FrameRow& r : old.rows) {
      if (r.frame != done + 1 || r.frame >= n_frames)
        break;
      try {
        if (r.frame == 0) {
          cloud = load_cloud(path_in(out, cloud_file(0)));
        } else {
          const ResidualSet rs = unpack_frame(read_file(path_in(out, packet_file(r.frame))));
          require(rs.frame_index == static_cast<uint32_t>(r.frame), ErrorKind::decode_error,
                  "packet frame index mismatch");
          cloud = apply_residuals(cloud, rs);
        }
      } catch (const Error&) {
        break;
      }
      m.rows.push_back(r);
      done = r.frame;
    }
    if (done >= 0)
      log << "encode: resuming after frame " << done << "\n";
  }

  write_text_atomic(path_in(out, "config.txt"), m.config_text);
  save_cameras(path_in(out, "cameras.txt"), bundle.cameras);
  save_cameras(path_in(out, "test_cameras.txt"), bundle.test_cameras);

  // Per-iteration stats, truncated to the frames being kept.
  const std::string stats_path = path_in(out, "stats.csv");
  {
    std::vector<std::string> keep;
    if (done >= 0 && fs::exists(stats_path)) {
      std::ifstream in(stats_path);
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line))
        if (std::atoi(line.c_str()) <= done)
          keep.push_back(line);
    }
    std::ostringstream os;
    write_stats_header(os);
    for (const auto& l : keep)
      os << l << "\n";
    write_text_atomic(stats_path, os.str());
  }
  std::ofstream stats(stats_path, std::ios::app);
  const StatsSink sink = [&](const IterStat& s) { write_stats_row(stats, s); };

  std::vector<Image> prev_frames;
  if (done >= 0)
    prev_frames = bundle.frames(done);
  for (int t = done + 1; t < n_frames; ++t) {
    std::vector<Image> frames = bundle.frames(t);
    FrameRow row;
    row.frame = t;
    const auto t0 = Clock::now();
    if (t == 0) {
      ColoredPoints pts = initial_points(bundle, frames);
      if (cfg.depth_init) {
        const auto depths = load_depths(bundle);
        pts = augment_with_depth(pts, frames, cams, depths, cfg);
      }
      const FirstFrameResult ff = train_first_frame(frames, cams, pts, cfg, sink);
      cloud = round_to_f32(ff.cloud);
      row.train_ms = ms_since(t0);
      const auto bytes = encode_cloud(cloud);
      write_file_atomic(path_in(out, cloud_file(0)), bytes);
      row.file = cloud_file(0);
      row.bytes = bytes.size();
    } else {
      const ResidualFrameResult r =
          train_residual_frame(cloud, prev_frames, frames, cams, cfg, static_cast<uint32_t>(t), sink);
      row.train_ms = ms_since(t0);
      const auto bytes = pack_frame(r.residuals);
      write_file_atomic(path_in(out, packet_file(t)), bytes);
      cloud = r.cloud;
      row.file = packet_file(t);
      row.bytes = bytes.size();
      row.active_gates = r.stats.active_gates;
    }
    stats.flush();
    const ViewQuality q = evaluate(cloud, cams, frames, cfg.lambda_dssim);
    row.psnr_db = q.psnr;
    row.ssim = q.ssim;
    row.gaussians = cloud.size();
    row.render_fps = measure_fps(cloud, cams);
    m.rows.push_back(row);
    save_manifest(out, m);
    log << "encode: frame " << t << "  " << row.bytes << " B  psnr " << row.psnr_db << " dB  gates "
        << row.active_gates << "  " << static_cast<long long>(row.train_ms) << " ms\n";
    prev_frames = std::move(frames);
  }
  save_manifest(out, m);
  return m;
}

GaussianCloud decode_stream(const std::string& stream_dir, int t) {
  if (!fs::is_directory(stream_dir))
    fail(ErrorKind::io_error, "stream directory not found: " + stream_dir);
  const int last = last_stream_frame(stream_dir);
  require(last >= 0, ErrorKind::missing_data, "no stream files in " + stream_dir);
  require(t >= 0 && t <= last, ErrorKind::invalid_input,
          "frame " + std::to_string(t) + " out of range; stream holds frames 0.." + std::to_string(last));
  const std::string first = path_in(stream_dir, cloud_file(0));
  if (!fs::exists(first))
    fail(ErrorKind::missing_data, "missing frame 0 cloud " + first);
  GaussianCloud cloud = load_cloud(first);
  for (int k = 1; k <= t; ++k) {
    const std::string p = path_in(stream_dir, packet_file(k));
    if (!fs::exists(p))
      fail(ErrorKind::missing_data, "missing packet for frame " + std::to_string(k) + " (gap after frame " +
                                        std::to_string(k - 1) + ")");
    const ResidualSet rs = unpack_frame(read_file(p));
    require(rs.frame_index == static_cast<uint32_t>(k), ErrorKind::decode_error,
            p + " holds frame " + std::to_string(rs.frame_index));
    cloud = apply_residuals(cloud, rs);
  }
  return cloud;
}

void cmd_decode(const std::string& stream_dir, int t, const std::string& out_path) {
  const GaussianCloud c = decode_stream(stream_dir, t);
  const fs::path parent = fs::path(out_path).parent_path();
  if (!parent.empty())
    ensure_dir(parent.string());
  save_cloud(out_path, c);
}

void cmd_render(const RenderOptions& opt) {
  Camera cam;
  if (!opt.camera_path.empty()) {
    const auto cams = load_cameras(opt.camera_path);
    require(!cams.empty(), ErrorKind::missing_data, "no camera in " + opt.camera_path);
    cam = cams.front();
  } else {
    const auto cams = stream_cameras(opt.stream_dir, opt.test_view);
    const int v = opt.view.value_or(0);
    require(v >= 0 && static_cast<size_t>(v) < cams.size(), ErrorKind::invalid_input,
            "view " + std::to_string(v) + " out of range; stream has " + std::to_string(cams.size()));
    cam = cams[static_cast<size_t>(v)];
  }
  const GaussianCloud c = decode_stream(opt.stream_dir, opt.frame);
  const fs::path parent = fs::path(opt.out_png).parent_path();
  if (!parent.empty())
    ensure_dir(parent.string());
  write_png(opt.out_png, rasterize(c, cam).image);
}

std::vector<FrameRow> cmd_metrics(const MetricsOptions& opt) {
  const RunManifest m = load_manifest(opt.stream_dir);
  const SceneBundle bundle = load_bundle(opt.scene_dir);
  const int n = static_cast<int>(m.rows.size());
  require(n > 0, ErrorKind::missing_data, "stream has no encoded frames");
  require(n <= bundle.n_frames, ErrorKind::dimension_mismatch,
          "stream has " + std::to_string(n) + " frames but the scene has " + std::to_string(bundle.n_frames));
  const auto cams = opt.test_views ? bundle.test_cameras : bundle.cameras;
  require(!cams.empty(), ErrorKind::missing_data, "scene has no test views");
  const auto stream_cams = stream_cameras(opt.stream_dir, opt.test_views);
  require(stream_cams.size() == cams.size(), ErrorKind::dimension_mismatch,
          "stream and scene camera counts differ");

  std::vector<FrameRow> rows;
  GaussianCloud cloud;
  for (int t = 0; t < n; ++t) {
    const FrameRow& rec = m.rows[static_cast<size_t>(t)];
    require(rec.frame == t, ErrorKind::decode_error, "manifest rows out of order");
    const std::string p = path_in(opt.stream_dir, t == 0 ? cloud_file(0) : packet_file(t));
    if (!fs::exists(p))
      fail(ErrorKind::missing_data, "missing stream file " + p);
    const auto bytes = read_file(p);
    if (t == 0) {
      cloud = decode_cloud(bytes);
    } else {
      const ResidualSet rs = unpack_frame(bytes);
      cloud = apply_residuals(cloud, rs);
    }
    const auto frames = opt.test_views ? bundle.test_frames(t) : bundle.frames(t);
    const ViewQuality q = evaluate(cloud, cams, frames);
    FrameRow r = rec;
    r.bytes = bytes.size();
    r.gaussians = cloud.size();
    r.psnr_db = q.psnr;
    r.ssim = q.ssim;
    r.render_fps = measure_fps(cloud, cams);
    rows.push_back(r);
  }

  std::ostringstream csv;
  csv << "frame,psnr_db,ssim,bytes,active_gates,train_ms,render_fps\n";
  csv.precision(10);
  for (const FrameRow& r : rows)
    csv << r.frame << "," << r.psnr_db << "," << r.ssim << "," << r.bytes << "," << r.active_gates << ","
        << r.train_ms << "," << r.render_fps << "\n";
  const fs::path parent = fs::path(opt.out_csv).parent_path();
  if (!parent.empty())
    ensure_dir(parent.string());
  write_text_atomic(opt.out_csv, csv.str());

  if (!opt.plots_dir.empty()) {
    ensure_dir(opt.plots_dir);
    LineChart rate, psnr;
    for (const FrameRow& r : rows) {
      rate.xs.push_back(r.frame);
      rate.ys.push_back(static_cast<double>(r.bytes));
      psnr.xs.push_back(r.frame);
      psnr.ys.push_back(r.psnr_db);
    }
    psnr.color = {0.8, 0.3, 0.1};
    write_chart(path_in(opt.plots_dir, "rate.png"), rate);
    write_chart(path_in(opt.plots_dir, "psnr.png"), psnr);
  }
  return rows;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming Gaussian splat encoder", "splatstream"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic scene bundle");
  s->add_option("--config", synth.config_path, "Scene config file (key = value)");
  s->add_option("--out", synth.out_dir, "Output bundle directory")->required();
  s->add_option("--seed", synth.seed, "Override the scene seed");
  s->add_option("--frames", synth.frames, "Override the frame count");

  EncodeOptions enc;
  auto* e = app.add_subcommand("encode", "Train and pack a stream from a scene bundle");
  e->add_option("scene", enc.scene_dir, "Scene bundle directory")->required();
  e->add_option("--out", enc.out_dir, "Stream directory")->required();
  e->add_option("--preset", enc.config.preset, "Built-in preset")->check(CLI::IsMember({"a", "b"}));
  e->add_option("--config", enc.config.config_path, "Training config file (key = value)");
  e->add_option("--seed", enc.config.seed, "Override the training seed");
  e->add_option("--frames", enc.frames, "Encode only the first n frames");

  std::string dec_stream, dec_out;
  int dec_frame = 0;
  auto* d = app.add_subcommand("decode", "Reconstruct the cloud of one frame");
  d->add_option("stream", dec_stream, "Stream directory")->required();
  d->add_option("--frame", dec_frame, "Frame index")->required();
  d->add_option("--out", dec_out, "Output cloud file")->required();

  RenderOptions ren;
  auto* r = app.add_subcommand("render", "Render one frame of a stream to PNG");
  r->add_option("stream", ren.stream_dir, "Stream directory")->required();
  r->add_option("--frame", ren.frame, "Frame index")->required();
  auto* view_opt = r->add_option("--view", ren.view, "Training camera index");
  r->add_flag("--test", ren.test_view, "Index into the held-out cameras");
  r->add_option("--camera", ren.camera_path, "Camera file; the first line is used")->excludes(view_opt);
  r->add_option("--out", ren.out_png, "Output PNG")->required();

  MetricsOptions met;
  auto* mt = app.add_subcommand("metrics", "Per-frame quality, size and timing table");
  mt->add_option("stream", met.stream_dir, "Stream directory")->required();
  mt->add_option("--scene", met.scene_dir, "Scene bundle with the reference frames")->required();
  mt->add_option("--out", met.out_csv, "Output CSV")->required();
  mt->add_option("--plots", met.plots_dir, "Directory for rate.png and psnr.png");
  mt->add_flag("--test-views", met.test_views, "Score the held-out cameras");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "error: invalid_input: " << ex.what() << "\n";
    return 2;
  }

  try {
    if (s->parsed())
      cmd_synth(synth, out);
    else if (e->parsed())
      cmd_encode(enc, out);
    else if (d->parsed())
      cmd_decode(dec_stream, dec_frame, dec_out);
    else if (r->parsed())
      cmd_render(ren);
    else if (mt->parsed()) {
      const auto rows = cmd_metrics(met);
      out << "metrics: " << rows.size() << " frames -> " << met.out_csv << "\n";
    }
  } catch (const Error& ex) {
    err << "error: " << error_kind_name(ex.kind()) << ": " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    err << "error: internal: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}

} // namespace splat::cli
