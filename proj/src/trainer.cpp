#include "splat/trainer.hpp"

#include "splat/adam.hpp"
#include "splat/densify.hpp"
#include "splat/dynamics.hpp"
#include "splat/error.hpp"
#include "splat/gating.hpp"
#include "splat/losses.hpp"
#include "splat/quantizer.hpp"
#include "splat/range_coder.hpp"
#include "splat/rasterizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace splat {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void check_views(std::span<const Image> frames, std::span<const Camera> cams) {
  require(!cams.empty(), ErrorKind::invalid_input, "training needs at least one view");
  require(frames.size() == cams.size(), ErrorKind::dimension_mismatch,
          "frame count differs from camera count");
  for (size_t v = 0; v < cams.size(); ++v)
    require(frames[v].width == cams[v].width && frames[v].height == cams[v].height &&
                frames[v].channels == 3,
            ErrorKind::dimension_mismatch, "frame " + std::to_string(v) + " size differs from its camera");
}

std::vector<size_t> shuffled_views(size_t n, std::mt19937_64& rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void append_copies(ParamTensor& t, std::span<const uint32_t> parent) {
  std::vector<double> rows;
  rows.reserve(parent.size() * t.width);
  for (uint32_t p : parent)
    rows.insert(rows.end(), t.value.begin() + static_cast<ptrdiff_t>(p) * t.width,
                t.value.begin() + static_cast<ptrdiff_t>(p + 1) * t.width);
  t.append_rows(rows);
}

void append_fill(ParamTensor& t, size_t count, double fill) {
  const std::vector<double> rows(count * t.width, fill);
  t.append_rows(rows);
}

// Keep mask for tensors that already hold appended rows.
std::vector<uint8_t> extended_keep(const DensifyResult& r) {
  std::vector<uint8_t> keep = r.keep;
  keep.resize(keep.size() + r.added.size(), 1);
  return keep;
}

LinearDecoder as_decoder(const ParamTensor& t, int out_dim, int in_dim) {
  LinearDecoder d(out_dim, in_dim);
  d.weights = t.value;
  return d;
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct DensifyAccumulator {
  std::vector<double> sum;
  std::vector<double> count;

  void reset(size_t n) {
    sum.assign(n, 0.0);
    count.assign(n, 0.0);
  }
  void add(const RenderOutput& out, const AttributeGrads& g, const Camera& cam) {
    const double sx = 0.5 * cam.width, sy = 0.5 * cam.height;
    for (size_t i = 0; i < out.gaussians.size(); ++i) {
      if (!out.gaussians[i].visible)
        continue;
      sum[i] += std::hypot(g.viewspace[2 * i] * sx, g.viewspace[2 * i + 1] * sy);
      count[i] += 1;
    }
  }
  std::vector<double> mean() const {
    std::vector<double> m(sum.size(), 0.0);
    for (size_t i = 0; i < m.size(); ++i)
      m[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;
    return m;
  }
};

bool densify_epoch(int epoch, int from, int until, int interval) {
  return epoch >= from && epoch <= until && (epoch - from) % interval == 0;
}

// Masked copy of an image: pixels outside the mask become 0.
Image masked(const Image& img, const PixelMask& m) {
  Image out = img;
  for (size_t p = 0; p < m.bits.size(); ++p)
    if (!m.bits[p])
      for (int c = 0; c < img.channels; ++c)
        out.data[p * img.channels + c] = 0.0;
  return out;
}

} // namespace

void write_stats_header(std::ostream& os) {
  os << "frame,iter,loss,psnr,active_gates,packet_bytes,wall_ms\n";
}

void write_stats_row(std::ostream& os, const IterStat& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%u,%d,%.8g,%.6f,%zu,%zu,%.3f\n", s.frame, s.iter, s.loss, s.psnr,
                s.active_gates, s.packet_bytes, s.wall_ms);
  os << buf;
}

uint64_t frame_seed(uint64_t seed, uint32_t frame_index) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), frame_index};
  std::array<uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<uint64_t>(words[0]) << 32) | words[1];
}

double scene_extent(std::span<const Camera> cams) {
  if (cams.empty())
    return 1.0;
  Vec3 centroid = Vec3::Zero();
  for (const Camera& c : cams)
    centroid += c.center();
  centroid /= static_cast<double>(cams.size());
  double r = 0;
  for (const Camera& c : cams)
    r = std::max(r, (c.center() - centroid).norm());
  return r > 1e-9 ? 1.1 * r : 1.0;
}

GaussianCloud init_from_points(const ColoredPoints& pts, int sh_degree) {
  require(!pts.points.empty(), ErrorKind::missing_data,
          "no initial points; generate a scene with synth or backproject depth maps");
  require(pts.colors.size() == pts.points.size(), ErrorKind::dimension_mismatch,
          "point and color counts differ");
  const size_t n = pts.size();
  GaussianCloud c(sh_degree, n);
  const int nb = c.basis();
  for (size_t i = 0; i < n; ++i) {
    // Brute-force 3-NN, fine for desk-scale point counts.
    std::array<double, 3> best = {1e300, 1e300, 1e300};
    for (size_t j = 0; j < n; ++j) {
      if (j == i)
        continue;
      const double d2 = (pts.points[i] - pts.points[j]).squaredNorm();
      if (d2 < best[2]) {
        best[2] = d2;
        std::sort(best.begin(), best.end());
      }
    }
    double mean_d = 0;
    int k = 0;
    for (double d2 : best)
      if (d2 < 1e300) {
        mean_d += std::sqrt(d2);
        ++k;
      }
    mean_d = k ? mean_d / k : 0.01;
    const double log_s = std::log(std::max(mean_d, 1e-7));
    c.set_position(i, pts.points[i]);
    c.rotations[4 * i] = 1.0;
    for (int a = 0; a < 3; ++a)
      c.log_scales[3 * i + a] = log_s;
    c.opacity_logits[i] = logit(0.1);
    for (int ch = 0; ch < 3; ++ch)
      c.sh[i * 3 * nb + ch * nb] = (pts.colors[i][ch] - 0.5) / kShC0;
  }
  return c;
}

ColoredPoints augment_with_depth(const ColoredPoints& pts, std::span<const Image> frames,
                                 std::span<const Camera> cams,
                                 std::span<const std::vector<double>> depths, const TrainConfig& cfg) {
  check_views(frames, cams);
  require(depths.size() == cams.size(), ErrorKind::dimension_mismatch,
          "depth map count differs from camera count");
  ColoredPoints out = pts;
  const GaussianCloud init = init_from_points(pts, cfg.sh_degree);
  for (size_t v = 0; v < cams.size(); ++v) {
    const Camera& cam = cams[v];
    const auto& depth = depths[v];
    require(depth.size() == static_cast<size_t>(cam.width) * cam.height, ErrorKind::dimension_mismatch,
            "depth map size differs from its camera");
    std::vector<double> pred, truth;
    for (const Vec3& p : pts.points) {
      const Projection pr = project_point(p, cam);
      if (!pr.visible)
        continue;
      const long x = std::lround(pr.pixel.x()), y = std::lround(pr.pixel.y());
      if (x < 0 || y < 0 || x >= cam.width || y >= cam.height)
        continue;
      pred.push_back(depth[static_cast<size_t>(y) * cam.width + x]);
      truth.push_back(pr.depth);
    }
    if (pred.size() < 2)
      continue;
    const ScaleShift ab = align_scale_shift(pred, truth);
    std::vector<double> aligned(depth.size());
    for (size_t i = 0; i < depth.size(); ++i)
      aligned[i] = ab.scale * depth[i] + ab.shift;
    const RenderOutput r = rasterize(init, cam);
    const PixelMask holes = low_alpha_mask(r.alpha, cam.width, cam.height, cfg.t_z);
    const ColoredPoints extra = backproject_fill(aligned, holes, cam, cfg.depth_stride, &frames[v]);
    out.points.insert(out.points.end(), extra.points.begin(), extra.points.end());
    out.colors.insert(out.colors.end(), extra.colors.begin(), extra.colors.end());
  }
  return out;
}

ViewQuality evaluate(const GaussianCloud& cloud, std::span<const Camera> cams,
                     std::span<const Image> frames, double lambda_dssim) {
  check_views(frames, cams);
  ViewQuality q;
  for (size_t v = 0; v < cams.size(); ++v) {
    const RenderOutput r = rasterize(cloud, cams[v]);
    q.loss += combined_loss(r.image, frames[v], lambda_dssim).value;
    q.psnr += psnr(r.image, frames[v]);
    q.ssim += ssim(r.image, frames[v]).value;
  }
  const double inv = 1.0 / static_cast<double>(cams.size());
  q.loss *= inv;
  q.psnr *= inv;
  q.ssim *= inv;
  return q;
}

// ---------------------------------------------------------------------------
// First frame

namespace {

struct FirstFrameModel {
  int degree = 0;
  int nb = 1;
  int rest_dim = 0;
  bool quantized = false;
  ParamTensor pos, rot, logs, opa, dc, rest, dec;

  size_t size() const { return opa.value.size(); }

  std::vector<int32_t> rounded_rest() const { return quantize_round(rest.value); }

  GaussianCloud build(std::vector<int32_t>* rounded = nullptr) const {
    GaussianCloud c(degree, size());
    c.positions = pos.value;
    c.rotations = rot.value;
    c.log_scales = logs.value;
    c.opacity_logits = opa.value;
    std::vector<double> rest_values;
    if (rest_dim > 0) {
      if (quantized) {
        const auto q = rounded_rest();
        rest_values = decode_residuals(q, as_decoder(dec, rest_dim, rest.width));
        if (rounded)
          *rounded = q;
      } else {
        rest_values = rest.value;
      }
    }
    for (size_t i = 0; i < size(); ++i)
      for (int ch = 0; ch < 3; ++ch) {
        c.sh[i * 3 * nb + ch * nb] = dc.value[3 * i + ch];
        for (int b = 1; b < nb; ++b)
          c.sh[i * 3 * nb + ch * nb + b] = rest_values[i * rest_dim + ch * (nb - 1) + (b - 1)];
      }
    return c;
  }

  std::vector<ParamTensor*> row_tensors() {
    std::vector<ParamTensor*> t = {&pos, &rot, &logs, &opa, &dc};
    if (rest_dim > 0)
      t.push_back(&rest);
    return t;
  }
};

} // namespace

FirstFrameResult train_first_frame(std::span<const Image> frames, std::span<const Camera> cams,
                                   const ColoredPoints& init_points, const TrainConfig& cfg,
                                   const StatsSink& sink) {
  cfg.validate();
  check_views(frames, cams);
  const GaussianCloud init = init_from_points(init_points, cfg.sh_degree);
  const auto start = Clock::now();
  std::mt19937_64 rng(frame_seed(cfg.seed, 0));
  const double extent = scene_extent(cams);
  const size_t n = init.size();

  FirstFrameModel m;
  m.degree = cfg.sh_degree;
  m.nb = init.basis();
  m.rest_dim = 3 * (m.nb - 1);
  m.quantized = cfg.quantize_first_frame_sh && m.rest_dim > 0;
  m.pos = ParamTensor(n, 3, cfg.lr_position * extent);
  m.pos.value = init.positions;
  m.rot = ParamTensor(n, 4, cfg.lr_rotation);
  m.rot.value = init.rotations;
  m.logs = ParamTensor(n, 3, cfg.lr_scale);
  m.logs.value = init.log_scales;
  m.opa = ParamTensor(n, 1, cfg.lr_opacity);
  m.opa.value = init.opacity_logits;
  m.dc = ParamTensor(n, 3, cfg.lr_sh_dc);
  for (size_t i = 0; i < n; ++i)
    for (int ch = 0; ch < 3; ++ch)
      m.dc.value[3 * i + ch] = init.sh[i * 3 * m.nb + ch * m.nb];
  if (m.quantized) {
    m.rest = ParamTensor(n, cfg.ff_sh_latent_dim, cfg.ff_sh_latent_lr);
    m.dec = ParamTensor(m.rest_dim, cfg.ff_sh_latent_dim, cfg.ff_sh_decoder_lr);
    m.dec.value = LinearDecoder::random(m.rest_dim, cfg.ff_sh_latent_dim, rng, cfg.decoder_init_scale).weights;
  } else if (m.rest_dim > 0) {
    m.rest = ParamTensor(n, m.rest_dim, cfg.lr_sh_rest);
  }

  FirstFrameResult result;
  DensifyAccumulator acc;
  acc.reset(n);
  int iter = 0;
  for (int epoch = 1; epoch <= cfg.first_frame_epochs; ++epoch) {
    for (size_t v : shuffled_views(cams.size(), rng)) {
      std::vector<int32_t> rounded;
      const GaussianCloud cloud = m.build(&rounded);
      const RenderOutput out = rasterize(cloud, cams[v]);
      const LossValue loss = combined_loss(out.image, frames[v], cfg.lambda_dssim);
      const AttributeGrads g = rasterize_backward(out, loss.gradient, cloud, cams[v]);

      m.pos.grad = g.positions;
      m.rot.grad = g.rotations;
      m.logs.grad = g.log_scales;
      m.opa.grad = g.opacity_logits;
      std::vector<double> rest_grad(m.size() * m.rest_dim, 0.0);
      for (size_t i = 0; i < m.size(); ++i)
        for (int ch = 0; ch < 3; ++ch) {
          m.dc.grad[3 * i + ch] = g.sh[i * 3 * m.nb + ch * m.nb];
          for (int b = 1; b < m.nb; ++b)
            rest_grad[i * m.rest_dim + ch * (m.nb - 1) + (b - 1)] = g.sh[i * 3 * m.nb + ch * m.nb + b];
        }
      if (m.quantized) {
        const SteGrads sg = ste_grads(rest_grad, as_decoder(m.dec, m.rest_dim, m.rest.width), rounded);
        m.rest.grad = sg.latents;
        m.dec.grad = sg.decoder;
        m.dec.step();
      } else if (m.rest_dim > 0) {
        m.rest.grad = rest_grad;
      }
      for (ParamTensor* t : m.row_tensors())
        t->step();
      acc.add(out, g, cams[v]);
      ++iter;
      if (sink)
        sink({0, iter, loss.value, psnr(out.image, frames[v]), 0, 0, elapsed_ms(start)});
    }

    if (densify_epoch(epoch, cfg.ff_densify_from, cfg.ff_densify_until, cfg.ff_densify_interval)) {
      const GaussianCloud cloud = m.build();
      const DensifySettings ds{cfg.ff_densify_threshold, cfg.opacity_floor, extent, cfg.percent_dense};
      const DensifyResult dr = densify_and_prune(cloud, acc.mean(), ds, rng);
      if (dr.changed()) {
        const size_t before = m.size();
        for (ParamTensor* t : m.row_tensors())
          append_copies(*t, dr.parent);
        for (size_t j = 0; j < dr.added.size(); ++j)
          for (int k = 0; k < 3; ++k) {
            m.pos.value[3 * (before + j) + k] = dr.added.positions[3 * j + k];
            m.logs.value[3 * (before + j) + k] = dr.added.log_scales[3 * j + k];
          }
        const auto keep = extended_keep(dr);
        for (ParamTensor* t : m.row_tensors())
          t->compact(keep);
        ++result.densify_events;
      }
      acc.reset(m.size());
    }
  }

  result.cloud = m.build();
  result.iterations = static_cast<size_t>(iter);
  if (m.quantized)
    result.sh_rest_bytes = entropy_encode(m.rounded_rest()).size() + 4 * m.dec.value.size();
  else
    result.sh_rest_bytes = 4 * m.size() * m.rest_dim;
  result.psnr = evaluate(result.cloud, cams, frames, cfg.lambda_dssim).psnr;
  return result;
}

// ---------------------------------------------------------------------------
// Residual frames

namespace {

struct ResidualModel {
  const TrainConfig* cfg = nullptr;
  int nb = 1;
  GaussianCloud base;
  std::vector<int64_t> origin; // index in cloud_prev, -1 for additions
  std::array<int, kAttributeKinds> out_dims{};
  std::array<ParamTensor, kAttributeKinds> res;  // latents or raw residuals
  std::array<ParamTensor, kAttributeKinds> dec;  // quantized only
  ParamTensor lp;
  ParamTensor log_alpha;

  bool quantized() const { return cfg->residual_mode == ResidualMode::quantized; }
  bool gated() const { return cfg->gate_mode == GateMode::learned; }
  size_t size() const { return base.size(); }

  bool active(AttributeKind k) const { return out_dims[static_cast<size_t>(k)] > 0; }

  std::vector<ParamTensor*> row_tensors() {
    std::vector<ParamTensor*> t = {&lp, &log_alpha};
    for (AttributeKind k : kAllAttributeKinds)
      if (active(k))
        t.push_back(&res[static_cast<size_t>(k)]);
    return t;
  }

  double gate(size_t i) const { return gated() ? gate_value(log_alpha.value[i], cfg->gate) : 1.0; }

  LinearDecoder decoder(AttributeKind k, bool f32) const {
    const size_t a = static_cast<size_t>(k);
    LinearDecoder d = as_decoder(dec[a], out_dims[a], res[a].width);
    if (f32)
      for (double& w : d.weights)
        w = round_f32(w);
    return d;
  }

  // Decoded residual rows for an attribute (N x M).
  std::vector<double> residual(AttributeKind k, bool f32, std::vector<int32_t>* rounded) const {
    const size_t a = static_cast<size_t>(k);
    if (!quantized()) {
      if (!f32)
        return res[a].value;
      std::vector<double> r = res[a].value;
      for (double& v : r)
        v = round_f32(v);
      return r;
    }
    const auto q = quantize_round(res[a].value);
    auto r = decode_residuals(q, decoder(k, f32));
    if (rounded)
      *rounded = q;
    return r;
  }

  // base + residuals. `gates` receives the gate values used.
  GaussianCloud build(std::array<std::vector<int32_t>, kAttributeKinds>* rounded,
                      std::vector<double>* gates, std::span<const double> noise = {}) const {
    GaussianCloud c = base;
    for (AttributeKind k : kAllAttributeKinds) {
      if (!active(k))
        continue;
      const size_t a = static_cast<size_t>(k);
      const auto r = residual(k, false, rounded ? &(*rounded)[a] : nullptr);
      add_residual(c, k, r);
    }
    if (gates)
      gates->assign(size(), 1.0);
    for (size_t i = 0; i < size(); ++i) {
      double g = 1.0;
      if (gated())
        g = noise.empty() ? gate_value(log_alpha.value[i], cfg->gate)
                          : gate_sample(log_alpha.value[i], noise[i], cfg->gate);
      if (gates)
        (*gates)[i] = g;
      if (g == 0)
        continue;
      for (int k = 0; k < 3; ++k)
        c.positions[3 * i + k] += g * lp.value[3 * i + k];
    }
    return c;
  }

  void add_residual(GaussianCloud& c, AttributeKind k, const std::vector<double>& r) const {
    const size_t m = out_dims[static_cast<size_t>(k)];
    for (size_t i = 0; i < c.size(); ++i) {
      const double* ri = r.data() + i * m;
      switch (k) {
      case AttributeKind::rotation:
        for (int j = 0; j < 4; ++j)
          c.rotations[4 * i + j] += ri[j];
        break;
      case AttributeKind::scale:
        for (int j = 0; j < 3; ++j)
          c.log_scales[3 * i + j] += ri[j];
        break;
      case AttributeKind::opacity:
        c.opacity_logits[i] += ri[0];
        break;
      case AttributeKind::color_base:
        for (int ch = 0; ch < 3; ++ch)
          c.sh[i * 3 * nb + ch * nb] += ri[ch];
        break;
      case AttributeKind::color_freq:
        for (int ch = 0; ch < 3; ++ch)
          for (int b = 1; b < nb; ++b)
            c.sh[i * 3 * nb + ch * nb + b] += ri[ch * (nb - 1) + (b - 1)];
        break;
      }
    }
  }

  // dL/dr for an attribute from the cloud gradients.
  std::vector<double> residual_grad(AttributeKind k, const AttributeGrads& g) const {
    const size_t m = out_dims[static_cast<size_t>(k)];
    std::vector<double> out(size() * m);
    for (size_t i = 0; i < size(); ++i) {
      double* o = out.data() + i * m;
      switch (k) {
      case AttributeKind::rotation:
        for (int j = 0; j < 4; ++j)
          o[j] = g.rotations[4 * i + j];
        break;
      case AttributeKind::scale:
        for (int j = 0; j < 3; ++j)
          o[j] = g.log_scales[3 * i + j];
        break;
      case AttributeKind::opacity:
        o[0] = g.opacity_logits[i];
        break;
      case AttributeKind::color_base:
        for (int ch = 0; ch < 3; ++ch)
          o[ch] = g.sh[i * 3 * nb + ch * nb];
        break;
      case AttributeKind::color_freq:
        for (int ch = 0; ch < 3; ++ch)
          for (int b = 1; b < nb; ++b)
            o[ch * (nb - 1) + (b - 1)] = g.sh[i * 3 * nb + ch * nb + b];
        break;
      }
    }
    return out;
  }
};

} // namespace

ResidualFrameResult train_residual_frame(const GaussianCloud& cloud_prev,
                                         std::span<const Image> frames_prev,
                                         std::span<const Image> frames_t,
                                         std::span<const Camera> cams, const TrainConfig& cfg,
                                         uint32_t frame_index, const StatsSink& sink) {
  cfg.validate();
  check_views(frames_t, cams);
  check_views(frames_prev, cams);
  require(cloud_prev.sh_degree == cfg.sh_degree, ErrorKind::config_error,
          "cloud SH degree differs from sh_degree in the config");
  const auto start = Clock::now();
  std::mt19937_64 rng(frame_seed(cfg.seed, frame_index));
  const double extent = scene_extent(cams);
  const size_t n_prev = cloud_prev.size();

  ResidualFrameResult result;
  ResidualFrameStats& st = result.stats;
  st.frame = frame_index;
  const ViewQuality q0 = evaluate(cloud_prev, cams, frames_t, cfg.lambda_dssim);
  st.initial_loss = q0.loss;
  st.initial_psnr = q0.psnr;

  // Scores, gate initialization and dynamic masks.
  const ScoreVector scores = score_vector(cloud_prev, cams, frames_prev, frames_t);
  result.scores = scores.norms;
  const std::vector<double> probs = gate_init_probs(scores);
  const DynamicMasks dm = dynamic_masks(cloud_prev, scores, cfg.t_d, cams, cfg.dilation, cfg.mask_alpha);
  st.dynamic_count = dm.dynamic.size();

  ResidualModel m;
  m.cfg = &cfg;
  m.nb = cloud_prev.basis();
  m.base = cloud_prev;
  m.origin.resize(n_prev);
  std::iota(m.origin.begin(), m.origin.end(), int64_t{0});
  for (AttributeKind k : kAllAttributeKinds) {
    const size_t a = static_cast<size_t>(k);
    m.out_dims[a] = residual_dim(k, cfg.sh_degree);
    if (m.out_dims[a] == 0)
      continue;
    if (m.quantized()) {
      m.res[a] = ParamTensor(n_prev, cfg.latent_dims[a], cfg.latent_lrs[a]);
      m.dec[a] = ParamTensor(m.out_dims[a], cfg.latent_dims[a], cfg.decoder_lrs[a]);
      m.dec[a].value = LinearDecoder::random(m.out_dims[a], cfg.latent_dims[a], rng, cfg.decoder_init_scale).weights;
    } else {
      m.res[a] = ParamTensor(n_prev, m.out_dims[a], cfg.raw_lrs[a]);
    }
  }
  m.lp = ParamTensor(n_prev, 3, cfg.lr_position_residual * extent);
  m.log_alpha = ParamTensor(n_prev, 1, cfg.lr_gate);
  m.log_alpha.value = gates_from_probs(probs, cfg.gate);

  const int views = static_cast<int>(cams.size());
  const int total = cfg.residual_epochs * views;
  const int masked_iters = static_cast<int>(std::floor(cfg.masked_fraction * total));
  st.iterations = total;
  st.masked_iterations = masked_iters;
  const double added_log_alpha = gates_from_probs(std::array{cfg.added_gate_prob}, cfg.gate)[0];
  std::uniform_real_distribution<double> unit(1e-6, 1 - 1e-6);

  DensifyAccumulator acc;
  acc.reset(n_prev);
  int iter = 0;
  for (int epoch = 1; epoch <= cfg.residual_epochs; ++epoch) {
    for (size_t v : shuffled_views(cams.size(), rng)) {
      const bool masked_phase = iter < masked_iters;
      std::vector<double> noise;
      if (m.gated() && cfg.stochastic_gates) {
        noise.resize(m.size());
        for (double& u : noise)
          u = unit(rng);
      }
      std::array<std::vector<int32_t>, kAttributeKinds> rounded;
      std::vector<double> gates;
      const GaussianCloud cloud = m.build(&rounded, &gates, noise);
      const PixelMask* mask = masked_phase ? &dm.masks[v] : nullptr;
      const RenderOutput out = rasterize(cloud, cams[v], mask);
      const Image target = masked_phase ? masked(frames_t[v], dm.masks[v]) : frames_t[v];
      const LossValue loss = combined_loss(out.image, target, cfg.lambda_dssim);
      const AttributeGrads g = rasterize_backward(out, loss.gradient, cloud, cams[v]);
      const size_t full = static_cast<size_t>(cams[v].width) * cams[v].height;
      st.rendered_pixels += out.rendered_pixels;
      st.full_pixels += full;
      if (masked_phase) {
        st.masked_phase_rendered += out.rendered_pixels;
        st.masked_phase_full += full;
      }

      double total_loss = loss.value;
      for (AttributeKind k : kAllAttributeKinds) {
        if (!m.active(k))
          continue;
        const size_t a = static_cast<size_t>(k);
        const std::vector<double> gr = m.residual_grad(k, g);
        if (m.quantized()) {
          const SteGrads sg = ste_grads(gr, m.decoder(k, false), rounded[a]);
          m.res[a].grad = sg.latents;
          m.dec[a].grad = sg.decoder;
          if (cfg.lambda_std > 0) {
            const Penalty p = latent_std_penalty(m.res[a].value, m.res[a].width);
            total_loss += cfg.lambda_std * p.value;
            for (size_t j = 0; j < p.grad.size(); ++j)
              m.res[a].grad[j] += cfg.lambda_std * p.grad[j];
          }
          m.dec[a].step();
        } else {
          m.res[a].grad = gr;
        }
      }
      m.lp.zero_grad();
      m.log_alpha.zero_grad();
      for (size_t i = 0; i < m.size(); ++i) {
        const double gi = gates[i];
        double dg = 0;
        for (int k = 0; k < 3; ++k) {
          m.lp.grad[3 * i + k] = gi * g.positions[3 * i + k];
          dg += g.positions[3 * i + k] * m.lp.value[3 * i + k];
        }
        if (m.gated())
          m.log_alpha.grad[i] = noise.empty() ? gate_backward(m.log_alpha.value[i], cfg.gate, dg)
                                              : gate_sample_backward(m.log_alpha.value[i], noise[i], cfg.gate, dg);
      }
      if (m.gated()) {
        const L0Loss l0 = gate_l0_loss(m.log_alpha.value, cfg.gate);
        total_loss += cfg.lambda_reg * l0.value;
        for (size_t i = 0; i < m.size(); ++i)
          m.log_alpha.grad[i] += cfg.lambda_reg * l0.grad[i];
      }
      for (ParamTensor* t : m.row_tensors())
        if (t != &m.log_alpha || m.gated())
          t->step();

      acc.add(out, g, cams[v]);
      ++iter;
      if (sink) {
        size_t active = 0;
        for (double gi : gates)
          active += gi > 0 ? 1 : 0;
        sink({frame_index, iter, total_loss, psnr(out.image, target), active, 0, elapsed_ms(start)});
      }
    }

    if (cfg.densify_residual &&
        densify_epoch(epoch, cfg.densify_from, cfg.densify_until, cfg.densify_interval)) {
      const GaussianCloud cloud = m.build(nullptr, nullptr);
      const DensifySettings ds{cfg.densify_threshold, cfg.opacity_floor, extent, cfg.percent_dense};
      const DensifyResult dr = densify_and_prune(cloud, acc.mean(), ds, rng);
      if (dr.changed()) {
        const size_t count = dr.added.size();
        for (size_t j = 0; j < count; ++j)
          m.base.push_from(dr.added, j);
        m.origin.resize(m.origin.size() + count, -1);
        for (AttributeKind k : kAllAttributeKinds)
          if (m.active(k))
            append_fill(m.res[static_cast<size_t>(k)], count, 0.0);
        append_fill(m.lp, count, 0.0);
        append_fill(m.log_alpha, count, added_log_alpha);
        const auto keep = extended_keep(dr);
        m.base = m.base.select(keep);
        std::vector<int64_t> origin;
        for (size_t i = 0; i < keep.size(); ++i)
          if (keep[i])
            origin.push_back(m.origin[i]);
        m.origin = std::move(origin);
        for (ParamTensor* t : m.row_tensors())
          t->compact(keep);
      }
      acc.reset(m.size());
    }
  }

  // Assemble the residual set from the values the decoder will see.
  ResidualSet& rs = result.residuals;
  rs = ResidualSet::empty(frame_index, static_cast<uint32_t>(n_prev), cfg.sh_degree);
  std::vector<int64_t> row_of(n_prev, -1);
  for (size_t i = 0; i < m.size(); ++i)
    if (m.origin[i] >= 0)
      row_of[static_cast<size_t>(m.origin[i])] = static_cast<int64_t>(i);

  for (AttributeKind k : kAllAttributeKinds) {
    if (!m.active(k))
      continue;
    const size_t a = static_cast<size_t>(k);
    AttributeResidual& ar = rs.attributes[a];
    const int w = m.res[a].width;
    if (m.quantized()) {
      ar.encoding = ResidualEncoding::quantized;
      ar.latent_dim = w;
      ar.decoder = m.decoder(k, true);
      const auto q = quantize_round(m.res[a].value);
      ar.latents.assign(n_prev * w, 0);
      for (size_t j = 0; j < n_prev; ++j)
        if (row_of[j] >= 0)
          std::copy_n(q.begin() + row_of[j] * w, w, ar.latents.begin() + static_cast<ptrdiff_t>(j) * w);
    } else {
      ar.encoding = ResidualEncoding::raw;
      ar.raw.assign(n_prev * w, 0.0f);
      for (size_t j = 0; j < n_prev; ++j)
        if (row_of[j] >= 0)
          for (int c = 0; c < w; ++c)
            ar.raw[j * w + c] = static_cast<float>(m.res[a].value[row_of[j] * w + c]);
    }
  }
  std::vector<double> dp(3 * n_prev, 0.0);
  result.gates.assign(n_prev, 0.0);
  for (size_t j = 0; j < n_prev; ++j) {
    if (row_of[j] < 0)
      continue;
    const auto i = static_cast<size_t>(row_of[j]);
    const double g = m.gate(i);
    result.gates[j] = g;
    if (g == 0)
      continue;
    for (int k = 0; k < 3; ++k)
      dp[3 * j + k] = g * m.lp.value[3 * i + k];
  }
  rs.positions = coo_encode(dp);
  for (uint32_t j = 0; j < n_prev; ++j)
    if (row_of[j] < 0)
      rs.removals.push_back(j);

  // Additions carry their final attributes.
  GaussianCloud final_rows = m.base;
  for (AttributeKind k : kAllAttributeKinds)
    if (m.active(k))
      m.add_residual(final_rows, k, m.residual(k, true, nullptr));
  for (size_t i = 0; i < m.size(); ++i) {
    if (m.origin[i] >= 0)
      continue;
    const double g = m.gate(i);
    for (int k = 0; k < 3; ++k)
      final_rows.positions[3 * i + k] += g * m.lp.value[3 * i + k];
    rs.additions.push_from(final_rows, i);
  }
  rs.additions = round_to_f16(rs.additions);
  rs.count_after = static_cast<uint32_t>(n_prev - rs.removals.size() + rs.additions.size());

  result.cloud = apply_residuals(cloud_prev, rs);
  const ViewQuality q1 = evaluate(result.cloud, cams, frames_t, cfg.lambda_dssim);
  st.final_loss = q1.loss;
  st.psnr = q1.psnr;
  st.active_gates = static_cast<size_t>(std::count_if(result.gates.begin(), result.gates.end(), [](double g) { return g > 0; }));
  st.added = rs.additions.size();
  st.removed = rs.removals.size();
  st.packet_bytes = pack_frame(rs).size();
  st.wall_ms = elapsed_ms(start);
  if (sink)
    sink({frame_index, iter, st.final_loss, st.psnr, st.active_gates, st.packet_bytes, st.wall_ms});
  return result;
}

} // namespace splat
