#include "splat/rasterizer.hpp"

#include "splat/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splat {

AttributeGrads::AttributeGrads(const GaussianCloud& like)
    : positions(like.positions.size(), 0.0), rotations(like.rotations.size(), 0.0),
      log_scales(like.log_scales.size(), 0.0), opacity_logits(like.opacity_logits.size(), 0.0),
      sh(like.sh.size(), 0.0), viewspace(2 * like.size(), 0.0) {}

std::vector<ScreenGaussian> preprocess(const GaussianCloud& cloud, const Camera& cam,
                                       const RasterSettings& settings, size_t* clamped) {
  cloud.validate();
  const int degree = cloud.sh_degree;
  const Vec3 center = cam.center();
  std::vector<ScreenGaussian> out(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    ScreenGaussian& g = out[i];
    const Vec3 p = cloud.position(i);
    g.p_cam = cam.to_camera(p);
    g.depth = g.p_cam.z();
    if (g.p_cam.z() <= cam.near_clip)
      continue;

    const Vec4 q = cloud.rotation(i);
    const Mat3 sigma = build_covariance(q, cloud.scale(i));
    const ProjectedCovariance pc = project_covariance(sigma, g.p_cam, cam, settings.covariance_floor);
    g.cov = pc.cov;
    g.cov_clamped = pc.clamped;
    if (pc.clamped && clamped)
      ++*clamped;
    const double det = g.cov.determinant();
    if (!(det > 0))
      continue;
    g.conic = {g.cov(1, 1) / det, -g.cov(0, 1) / det, g.cov(0, 0) / det};

    const double iz = 1.0 / g.p_cam.z();
    g.mean = {cam.fx * g.p_cam.x() * iz + cam.cx, cam.fy * g.p_cam.y() * iz + cam.cy};

    const double mid = 0.5 * (g.cov(0, 0) + g.cov(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
    g.radius = static_cast<int>(std::ceil(settings.extent_sigma * std::sqrt(lambda_max)));
    g.x0 = std::max(0, static_cast<int>(std::ceil(g.mean.x() - g.radius)));
    g.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(g.mean.x() + g.radius)));
    g.y0 = std::max(0, static_cast<int>(std::ceil(g.mean.y() - g.radius)));
    g.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(g.mean.y() + g.radius)));
    if (g.radius <= 0 || g.x0 > g.x1 || g.y0 > g.y1)
      continue;

    g.view_dir = p - center;
    const Vec3 dir = g.view_dir.normalized();
    std::array<double, 16> basis{};
    sh_basis(dir, degree, basis);
    const int nb = cloud.basis();
    auto coeffs = cloud.sh_of(i);
    for (int c = 0; c < 3; ++c) {
      double acc = 0.5;
      for (int k = 0; k < nb; ++k)
        acc += basis[k] * coeffs[c * nb + k];
      g.color_clamped[c] = acc < 0;
      g.color[c] = std::max(acc, 0.0);
    }
    g.opacity = cloud.opacity(i);
    g.visible = true;
  }
  return out;
}

RenderOutput rasterize(const GaussianCloud& cloud, const Camera& cam, const PixelMask* pixel_mask,
                       const RasterSettings& settings) {
  cam.validate();
  const int w = cam.width, h = cam.height;
  if (pixel_mask)
    require(pixel_mask->width == w && pixel_mask->height == h, ErrorKind::dimension_mismatch,
            "pixel mask size differs from camera");

  RenderOutput out;
  out.settings = settings;
  out.image = Image(w, h, 3);
  out.alpha.assign(static_cast<size_t>(w) * h, 0.0);
  out.gaussians = preprocess(cloud, cam, settings, &out.clamped_covariances);
  if (pixel_mask)
    out.mask = *pixel_mask;

  // Bin visible Gaussians into tiles and depth-sort each tile; ties go to
  // the lower index.
  const int ts = settings.tile_size;
  const int tiles_x = (w + ts - 1) / ts, tiles_y = (h + ts - 1) / ts;
  std::vector<std::vector<uint32_t>> tiles(static_cast<size_t>(tiles_x) * tiles_y);
  for (uint32_t i = 0; i < out.gaussians.size(); ++i) {
    const ScreenGaussian& g = out.gaussians[i];
    if (!g.visible)
      continue;
    for (int ty = g.y0 / ts; ty <= g.y1 / ts; ++ty)
      for (int tx = g.x0 / ts; tx <= g.x1 / ts; ++tx)
        tiles[static_cast<size_t>(ty) * tiles_x + tx].push_back(i);
  }
  const auto& gs = out.gaussians;
  for (auto& list : tiles)
    std::sort(list.begin(), list.end(), [&](uint32_t a, uint32_t b) {
      return gs[a].depth < gs[b].depth || (gs[a].depth == gs[b].depth && a < b);
    });

  // Per-pixel lists are collected per row-major pixel so the CSR layout is
  // independent of the tiling.
  std::vector<std::vector<uint32_t>> lists(static_cast<size_t>(w) * h);
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      const auto& list = tiles[static_cast<size_t>(ty) * tiles_x + tx];
      for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
        for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
          if (pixel_mask && !(*pixel_mask)(x, y))
            continue;
          ++out.rendered_pixels;
          const size_t pix = static_cast<size_t>(y) * w + x;
          double t = 1.0;
          Vec3 color = Vec3::Zero();
          auto& contrib = lists[pix];
          for (uint32_t idx : list) {
            const ScreenGaussian& g = gs[idx];
            if (!g.covers(x, y))
              continue;
            const double dx = g.mean.x() - x, dy = g.mean.y() - y;
            const double power =
                -0.5 * (g.conic[0] * dx * dx + g.conic[2] * dy * dy) - g.conic[1] * dx * dy;
            if (power > 0)
              continue;
            const double a = std::min(settings.alpha_max, g.opacity * std::exp(power));
            if (a < settings.alpha_min)
              continue;
            const double t_next = t * (1 - a);
            if (t_next < settings.transmittance_min)
              break;
            color += g.color * (a * t);
            t = t_next;
            contrib.push_back(idx);
          }
          for (int c = 0; c < 3; ++c)
            out.image.at(x, y, c) = color[c];
          out.alpha[pix] = 1.0 - t;
        }
      }
    }
  }

  out.pixel_offsets.resize(lists.size() + 1);
  out.pixel_offsets[0] = 0;
  for (size_t p = 0; p < lists.size(); ++p)
    out.pixel_offsets[p + 1] = out.pixel_offsets[p] + static_cast<uint32_t>(lists[p].size());
  out.contributors.reserve(out.pixel_offsets.back());
  for (const auto& l : lists)
    out.contributors.insert(out.contributors.end(), l.begin(), l.end());
  return out;
}

namespace {

// Derivatives of the rotation matrix entries with respect to (w, x, y, z).
std::array<Mat3, 4> rotation_partials(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

struct ScreenGrad {
  Vec2 mean = Vec2::Zero();
  Vec3 conic = Vec3::Zero();
  double opacity = 0;
  Vec3 color = Vec3::Zero();
};

} // namespace

AttributeGrads rasterize_backward(const RenderOutput& out, const Image& dL_dimage,
                                  const GaussianCloud& cloud, const Camera& cam) {
  require(out.gaussians.size() == cloud.size(), ErrorKind::invalid_input,
          "render aux does not match the cloud");
  require(dL_dimage.width == out.image.width && dL_dimage.height == out.image.height &&
              dL_dimage.channels == 3,
          ErrorKind::invalid_input, "image gradient shape does not match the render");
  const int w = out.image.width, h = out.image.height;
  const RasterSettings& st = out.settings;
  const auto& gs = out.gaussians;

  std::vector<ScreenGrad> sg(gs.size());
  std::vector<double> alphas, trans;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t pix = static_cast<size_t>(y) * w + x;
      auto list = out.contributors_of(pix);
      if (list.empty())
        continue;
      const Vec3 dl(dL_dimage.at(x, y, 0), dL_dimage.at(x, y, 1), dL_dimage.at(x, y, 2));
      if (dl.isZero(0))
        continue;
      // Replay the forward pass for this pixel.
      alphas.resize(list.size());
      trans.resize(list.size());
      double t = 1.0;
      for (size_t k = 0; k < list.size(); ++k) {
        const ScreenGaussian& g = gs[list[k]];
        const double dx = g.mean.x() - x, dy = g.mean.y() - y;
        const double power =
            -0.5 * (g.conic[0] * dx * dx + g.conic[2] * dy * dy) - g.conic[1] * dx * dy;
        alphas[k] = std::min(st.alpha_max, g.opacity * std::exp(power));
        trans[k] = t;
        t *= 1 - alphas[k];
      }
      Vec3 behind = Vec3::Zero();
      for (size_t k = list.size(); k-- > 0;) {
        const uint32_t idx = list[k];
        const ScreenGaussian& g = gs[idx];
        ScreenGrad& gr = sg[idx];
        const double a = alphas[k], tk = trans[k];
        gr.color += dl * (a * tk);
        const double dl_da = dl.dot(g.color * tk - behind / (1 - a));
        behind += g.color * (a * tk);

        const double dx = g.mean.x() - x, dy = g.mean.y() - y;
        const double power =
            -0.5 * (g.conic[0] * dx * dx + g.conic[2] * dy * dy) - g.conic[1] * dx * dy;
        const double gauss = std::exp(power);
        if (g.opacity * gauss >= st.alpha_max)
          continue; // clamped alpha has no gradient
        gr.opacity += gauss * dl_da;
        const double dl_dpower = g.opacity * gauss * dl_da;
        gr.mean.x() += dl_dpower * -(g.conic[0] * dx + g.conic[1] * dy);
        gr.mean.y() += dl_dpower * -(g.conic[1] * dx + g.conic[2] * dy);
        gr.conic[0] += dl_dpower * (-0.5 * dx * dx);
        gr.conic[1] += dl_dpower * (-dx * dy);
        gr.conic[2] += dl_dpower * (-0.5 * dy * dy);
      }
    }
  }

  AttributeGrads grads(cloud);
  const int nb = cloud.basis();
  const Mat3& wrot = cam.rotation;
  for (size_t i = 0; i < gs.size(); ++i) {
    const ScreenGaussian& g = gs[i];
    if (!g.visible)
      continue;
    const ScreenGrad& gr = sg[i];
    grads.viewspace[2 * i] = gr.mean.x();
    grads.viewspace[2 * i + 1] = gr.mean.y();

    // Color: SH coefficients and view direction.
    const double vnorm = g.view_dir.norm();
    const Vec3 dir = g.view_dir / vnorm;
    std::array<double, 16> basis{};
    std::array<Vec3, 16> dbasis;
    sh_basis(dir, cloud.sh_degree, basis, dbasis);
    auto coeffs = cloud.sh_of(i);
    Vec3 dl_ddir = Vec3::Zero();
    for (int c = 0; c < 3; ++c) {
      if (g.color_clamped[c])
        continue;
      const double gc = gr.color[c];
      for (int k = 0; k < nb; ++k) {
        grads.sh[i * 3 * nb + c * nb + k] = basis[k] * gc;
        dl_ddir += dbasis[k] * (coeffs[c * nb + k] * gc);
      }
    }
    Vec3 dl_dp = (dl_ddir - dir * dir.dot(dl_ddir)) / vnorm;

    // Opacity.
    grads.opacity_logits[i] = gr.opacity * g.opacity * (1 - g.opacity);

    // Conic -> 2D covariance. G_conic uses half the off-diagonal gradient
    // since B appears twice in the symmetric matrix.
    Mat2 conic_m;
    conic_m << g.conic[0], g.conic[1], g.conic[1], g.conic[2];
    Mat2 g_conic;
    g_conic << gr.conic[0], 0.5 * gr.conic[1], 0.5 * gr.conic[1], gr.conic[2];
    const Mat2 g_cov2 = -conic_m * g_conic * conic_m;

    // 2D covariance -> 3D covariance and the projection Jacobian.
    const Vec3& pc = g.p_cam;
    const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(pc, cam);
    const Eigen::Matrix<double, 2, 3> tmat = jac * wrot;
    const Vec4 qraw = cloud.rotation(i);
    const double qn = qraw.norm();
    const Vec4 q = qraw / qn;
    const Mat3 rot = quaternion_to_rotation(q);
    const Vec3 s = cloud.scale(i);
    const Mat3 m = rot * s.asDiagonal();
    const Mat3 sigma = m * m.transpose();

    const Mat3 g_sigma = tmat.transpose() * g_cov2 * tmat;
    const Eigen::Matrix<double, 2, 3> g_t = 2.0 * g_cov2 * tmat * sigma;
    const Eigen::Matrix<double, 2, 3> g_j = g_t * wrot.transpose();

    const double iz = 1.0 / pc.z(), iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 dl_dpc = Vec3::Zero();
    dl_dpc.x() += g_j(0, 2) * (-cam.fx * iz2);
    dl_dpc.y() += g_j(1, 2) * (-cam.fy * iz2);
    dl_dpc.z() += g_j(0, 0) * (-cam.fx * iz2) + g_j(0, 2) * (2 * cam.fx * pc.x() * iz3) +
                  g_j(1, 1) * (-cam.fy * iz2) + g_j(1, 2) * (2 * cam.fy * pc.y() * iz3);
    // Mean projection.
    dl_dpc.x() += gr.mean.x() * cam.fx * iz;
    dl_dpc.y() += gr.mean.y() * cam.fy * iz;
    dl_dpc.z() += -gr.mean.x() * cam.fx * pc.x() * iz2 - gr.mean.y() * cam.fy * pc.y() * iz2;
    dl_dp += wrot.transpose() * dl_dpc;
    for (int k = 0; k < 3; ++k)
      grads.positions[3 * i + k] = dl_dp[k];

    // Sigma = M M^T with M = R S.
    const Mat3 g_m = 2.0 * g_sigma * m;
    Mat3 g_rot;
    for (int c = 0; c < 3; ++c) {
      g_rot.col(c) = g_m.col(c) * s[c];
      grads.log_scales[3 * i + c] = g_m.col(c).dot(rot.col(c)) * s[c];
    }
    const auto dr = rotation_partials(q);
    Vec4 g_q;
    for (int k = 0; k < 4; ++k)
      g_q[k] = (g_rot.array() * dr[k].array()).sum();
    const Vec4 g_qraw = (g_q - q * q.dot(g_q)) / qn;
    for (int k = 0; k < 4; ++k)
      grads.rotations[4 * i + k] = g_qraw[k];
  }
  return grads;
}

} // namespace splat
