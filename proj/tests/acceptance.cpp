// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include "oracles.hpp"

#include "splat/bytes.hpp"
#include "splat/codec.hpp"
#include "splat/config.hpp"
#include "splat/dynamics.hpp"
#include "splat/gating.hpp"
#include "splat/losses.hpp"
#include "splat/quantizer.hpp"
#include "splat/range_coder.hpp"
#include "splat/synth.hpp"
#include "splat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>
#include <string>

using namespace splat;

namespace {

// Pinned tolerances and limits.
constexpr double kFdRel = 2e-3, kFdAbs = 1e-6;
constexpr int kFdScenes = 20, kFdGaussians = 20, kFdSize = 32;
constexpr double kIdentityPsnrDelta = 0.05;
constexpr double kStaticOffMin = 0.95, kDynamicOnMin = 0.80;
constexpr uint64_t kGateSeeds[] = {0, 1, 2};
constexpr double kRateMaxFraction = 0.20, kRatePsnrSlack = 0.3;
constexpr double kQualityGainMin = 3.0;
constexpr double kMaskPsnrSlack = 0.2, kMaskPixelReductionMin = 0.30;
constexpr int kCodecCases = 1000;
constexpr double kUniformSlack = 0.02;
constexpr int kDriftFrames = 10;
constexpr double kDriftPsnrMin = 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

TrainConfig desk() {
  TrainConfig c = preset_a();
  apply_config(c, load_key_values(SPLAT_CONFIG_DIR "/desk.cfg"));
  return c;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

ColoredPoints points_of(const GaussianCloud& c) {
  ColoredPoints p;
  for (size_t i = 0; i < c.size(); ++i) {
    p.points.push_back(c.position(i));
    p.colors.push_back(Vec3::Constant(0.5));
  }
  return p;
}

double image_psnr(const Image& a, const Image& b) {
  const double m = mse_loss(a, b).value;
  return m == 0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(m);
}

struct StreamRun {
  GaussianCloud cloud0;
  std::vector<std::vector<uint8_t>> packets; // frames 1..F-1
  std::vector<ResidualFrameResult> results;
};

// Residual frames 1..F-1 from a given frame-0 cloud.
StreamRun encode_stream(const SynthScene& s, const GaussianCloud& cloud0, const TrainConfig& cfg) {
  StreamRun run;
  run.cloud0 = cloud0;
  GaussianCloud c = cloud0;
  for (int t = 1; t < s.config.n_frames; ++t) {
    ResidualFrameResult r = train_residual_frame(c, s.frames[t - 1], s.frames[t], s.cameras, cfg,
                                                 static_cast<uint32_t>(t));
    run.packets.push_back(pack_frame(r.residuals));
    c = r.cloud;
    run.results.push_back(std::move(r));
  }
  return run;
}

// Clouds 0..F-1 reconstructed from the stored frame-0 bytes and the packets.
std::vector<GaussianCloud> decode_all(const StreamRun& run) {
  std::vector<GaussianCloud> out{decode_cloud(encode_cloud(run.cloud0))};
  for (const auto& p : run.packets)
    out.push_back(apply_residuals(out.back(), unpack_frame(p)));
  return out;
}

// Mean training-view PSNR over frames 1..F-1.
double mean_psnr(const SynthScene& s, const std::vector<GaussianCloud>& clouds) {
  double sum = 0;
  for (int t = 1; t < s.config.n_frames; ++t)
    sum += evaluate(clouds[static_cast<size_t>(t)], s.cameras, s.frames[t]).psnr;
  return sum / (s.config.n_frames - 1);
}

Outcome c1_gradients() {
  size_t checked = 0, excluded = 0, failures = 0;
  double worst = 0;
  std::string first;
  for (int seed = 0; seed < kFdScenes; ++seed) {
    std::mt19937_64 rng(5000 + seed);
    const GaussianCloud c = oracle::random_cloud(rng, kFdGaussians, 2);
    const Camera cam = oracle::random_camera(rng, kFdSize, kFdSize);
    const Image dl = oracle::random_image(rng, kFdSize, kFdSize, -1, 1);
    const oracle::FdReport rep = oracle::fd_check(c, cam, dl, kFdRel, kFdAbs);
    checked += rep.checked;
    excluded += rep.excluded;
    failures += rep.failures;
    worst = std::max(worst, rep.worst_rel);
    if (first.empty() && !rep.messages.empty())
      first = rep.messages.front();
  }
  std::ostringstream os;
  os << kFdScenes << " scenes x " << kFdGaussians << " gaussians, " << checked << " coords checked, " << excluded
     << " excluded at kinks, " << failures << " failures, worst rel " << fmt("%.2e", worst);
  if (!first.empty())
    os << " [" << first << "]";
  return {failures == 0 && checked > 0 && excluded * 10 < checked, os.str()};
}

Outcome c2_identity() {
  SynthConfig sc;
  sc.n_frames = 2;
  const SynthScene s = generate(sc);
  const TrainConfig cfg = desk();
  const GaussianCloud prev = round_to_f32(s.clouds[0]);
  const ResidualFrameResult r = train_residual_frame(prev, s.frames[0], s.frames[0], s.cameras, cfg, 1);
  bool zero_latents = true;
  for (const auto& a : r.residuals.attributes) {
    zero_latents = zero_latents && std::all_of(a.latents.begin(), a.latents.end(), [](int32_t v) { return v == 0; });
    zero_latents = zero_latents && std::all_of(a.raw.begin(), a.raw.end(), [](float v) { return v == 0; });
  }
  const double before = evaluate(prev, s.cameras, s.frames[0]).psnr;
  const double after = evaluate(r.cloud, s.cameras, s.frames[0]).psnr;
  const double delta = std::abs(after - before);
  std::ostringstream os;
  os << "active gates " << r.stats.active_gates << ", latents all zero " << (zero_latents ? "yes" : "no")
     << ", position rows " << r.residuals.positions.size() << ", packet " << pack_frame(r.residuals).size()
     << " B, psnr change " << fmt("%.2e", delta) << " dB";
  return {r.stats.active_gates == 0 && zero_latents && r.residuals.positions.size() == 0 &&
              delta < kIdentityPsnrDelta,
          os.str()};
}

Outcome c3_gate_separation() {
  size_t st = 0, st_off = 0, dy = 0, dy_on = 0;
  for (uint64_t seed : kGateSeeds) {
    SynthConfig sc;
    sc.seed = seed;
    sc.motion = MotionKind::translate;
    sc.dynamic_fraction = 0.1;
    const SynthScene s = generate(sc);
    const ResidualFrameResult r =
        train_residual_frame(round_to_f32(s.clouds[0]), s.frames[0], s.frames[1], s.cameras, desk(), 1);
    for (size_t i = 0; i < s.labels.size(); ++i) {
      if (s.labels[i]) {
        ++dy;
        dy_on += r.gates[i] > 0;
      } else {
        ++st;
        st_off += r.gates[i] == 0.0;
      }
    }
  }
  const double off = static_cast<double>(st_off) / st, on = static_cast<double>(dy_on) / dy;
  std::ostringstream os;
  os << std::size(kGateSeeds) << " scenes, static gates exactly 0: " << st_off << "/" << st << " ("
     << fmt("%.1f", 100 * off) << "%), dynamic gates > 0: " << dy_on << "/" << dy << " (" << fmt("%.1f", 100 * on)
     << "%)";
  return {off >= kStaticOffMin && on >= kDynamicOnMin, os.str()};
}

Outcome c4_rate() {
  SynthConfig sc;
  sc.dynamic_fraction = 0.05;
  sc.n_frames = 5;
  const SynthScene s = generate(sc);
  const GaussianCloud c0 = round_to_f32(s.clouds[0]);
  const TrainConfig cfg = desk();
  TrainConfig base = cfg;
  base.residual_mode = ResidualMode::raw;
  base.gate_mode = GateMode::always_on;

  const StreamRun q = encode_stream(s, c0, cfg);
  const StreamRun b = encode_stream(s, c0, base);
  const auto qc = decode_all(q), bc = decode_all(b);
  double worst_fraction = 0;
  for (size_t k = 0; k < q.packets.size(); ++k)
    worst_fraction = std::max(worst_fraction, static_cast<double>(q.packets[k].size()) /
                                                  raw_attribute_bytes(qc[k + 1]));
  const double pq = mean_psnr(s, qc), pb = mean_psnr(s, bc);
  std::ostringstream os;
  os << "largest packet " << fmt("%.1f", 100 * worst_fraction) << "% of the raw f32 cloud ("
     << raw_attribute_bytes(qc.back()) << " B), psnr " << fmt("%.2f", pq) << " dB vs uncompressed "
     << fmt("%.2f", pb) << " dB";
  return {worst_fraction <= kRateMaxFraction && pq >= pb - kRatePsnrSlack, os.str()};
}

Outcome c5_quality() {
  SynthConfig sc;
  sc.n_frames = 5;
  const SynthScene s = generate(sc);
  const TrainConfig cfg = desk();
  const FirstFrameResult ff = train_first_frame(s.frames[0], s.cameras, points_of(s.clouds[0]), cfg);
  const StreamRun run = encode_stream(s, round_to_f32(ff.cloud), cfg);
  const auto clouds = decode_all(run);
  const std::vector<GaussianCloud> frozen(clouds.size(), clouds[0]);
  const double ps = mean_psnr(s, clouds), pf = mean_psnr(s, frozen);
  std::ostringstream os;
  os << "frame 0 trained to " << fmt("%.2f", ff.psnr) << " dB; frames 1.." << sc.n_frames - 1 << " stream "
     << fmt("%.2f", ps) << " dB vs frozen " << fmt("%.2f", pf) << " dB (gain " << fmt("%+.2f", ps - pf) << ")";
  return {ps - pf >= kQualityGainMin, os.str()};
}

Outcome c6_masked() {
  SynthConfig sc;
  sc.n_frames = 5;
  sc.localized = true;
  const SynthScene s = generate(sc);
  TrainConfig masked = desk();
  masked.masked_fraction = 0.3;
  TrainConfig full = masked;
  full.masked_fraction = 0.0;
  const FirstFrameResult ff = train_first_frame(s.frames[0], s.cameras, points_of(s.clouds[0]), masked);
  const GaussianCloud c0 = round_to_f32(ff.cloud);
  const StreamRun m = encode_stream(s, c0, masked);
  const StreamRun u = encode_stream(s, c0, full);
  const double pm = mean_psnr(s, decode_all(m)), pu = mean_psnr(s, decode_all(u));
  size_t phase_rendered = 0, phase_full = 0, run_m = 0, run_u = 0;
  for (const auto& r : m.results) {
    phase_rendered += r.stats.masked_phase_rendered;
    phase_full += r.stats.masked_phase_full;
    run_m += r.stats.rendered_pixels;
  }
  for (const auto& r : u.results)
    run_u += r.stats.rendered_pixels;
  const double phase_cut = phase_full ? 1.0 - static_cast<double>(phase_rendered) / phase_full : 0.0;
  const double run_cut = run_u ? 1.0 - static_cast<double>(run_m) / run_u : 0.0;
  std::ostringstream os;
  os << "psnr masked " << fmt("%.2f", pm) << " dB vs unmasked " << fmt("%.2f", pu) << " dB; masked-phase pixels "
     << phase_rendered << "/" << phase_full << " (" << fmt("%.1f", 100 * phase_cut) << "% fewer); whole run "
     << run_m << "/" << run_u << " (" << fmt("%.1f", 100 * run_cut) << "% fewer)";
  return {std::abs(pm - pu) <= kMaskPsnrSlack && phase_cut >= kMaskPixelReductionMin, os.str()};
}

Outcome c7_codec() {
  std::mt19937_64 rng(7);
  size_t mismatches = 0;
  for (int i = 0; i < kCodecCases; ++i) {
    const auto v = oracle::random_symbols(rng);
    if (entropy_decode(entropy_encode(v), v.size()) != v)
      ++mismatches;

    std::uniform_int_distribution<int> rows(0, 60);
    std::normal_distribution<double> g(0, 1);
    std::vector<double> dense(3 * static_cast<size_t>(rows(rng)), 0.0);
    for (size_t r = 0; r < dense.size() / 3; ++r)
      if (rng() % 3 == 0)
        for (int k = 0; k < 3; ++k)
          dense[3 * r + k] = static_cast<float>(g(rng));
    if (coo_decode(coo_encode(dense), dense.size() / 3) != dense)
      ++mismatches;

    const ResidualSet rs =
        oracle::random_residuals(rng, 20 + static_cast<uint32_t>(i % 50), static_cast<int>(i % 4));
    if (!(unpack_frame(pack_frame(rs)) == rs))
      ++mismatches;
  }
  auto uniform_overhead = [&](int alphabet) {
    std::vector<int32_t> u(1 << 16);
    for (auto& x : u)
      x = static_cast<int32_t>(rng() % static_cast<uint64_t>(alphabet));
    const auto bytes = entropy_encode(u);
    if (entropy_decode(bytes, u.size()) != u)
      ++mismatches;
    return bytes.size() / (empirical_entropy_bits(u) / 8.0) - 1.0;
  };
  double worst_over = -1;
  for (int alphabet : {2, 16, 256})
    worst_over = std::max(worst_over, uniform_overhead(alphabet));
  const double wide = uniform_overhead(4096);
  std::ostringstream os;
  os << 3 * kCodecCases << " round trips (entropy, COO, packet), " << mismatches
     << " mismatches; uniform 65536 symbols over alphabets 2..256: worst size " << fmt("%+.2f", 100 * worst_over)
     << "% vs empirical entropy (4096 symbols, not bounded: " << fmt("%+.1f", 100 * wide) << "%)";
  return {mismatches == 0 && worst_over <= kUniformSlack, os.str()};
}

Outcome c8_drift() {
  SynthConfig sc;
  sc.n_frames = kDriftFrames + 1;
  sc.motion = MotionKind::mixed;
  sc.n_test_views = 2;
  const SynthScene s = generate(sc);
  TrainConfig cfg = desk();
  cfg.densify_residual = true;
  cfg.densify_threshold = 0.002;
  const StreamRun run = encode_stream(s, round_to_f32(s.clouds[0]), cfg);
  const auto dec = decode_all(run);
  const GaussianCloud& enc = run.results.back().cloud;
  const GaussianCloud& out = dec.back();

  size_t added = 0, removed = 0;
  bool additions_f16 = true;
  for (size_t k = 0; k < run.results.size(); ++k) {
    added += run.results[k].stats.added;
    removed += run.results[k].stats.removed;
    const GaussianCloud& a = run.results[k].residuals.additions;
    additions_f16 = additions_f16 && round_to_f16(a) == a;
  }
  bool same_size = enc.size() == out.size();
  double worst = 0;
  if (same_size) {
    auto cmp = [&](const std::vector<double>& x, const std::vector<double>& y) {
      for (size_t i = 0; i < x.size(); ++i)
        worst = std::max(worst, std::abs(x[i] - y[i]));
    };
    cmp(enc.positions, out.positions);
    cmp(enc.rotations, out.rotations);
    cmp(enc.log_scales, out.log_scales);
    cmp(enc.opacity_logits, out.opacity_logits);
    cmp(enc.sh, out.sh);
  }
  double min_psnr = std::numeric_limits<double>::infinity();
  for (const Camera& cam : s.test_cameras)
    if (same_size)
      min_psnr = std::min(min_psnr, image_psnr(rasterize(enc, cam).image, rasterize(out, cam).image));
  std::ostringstream os;
  os << kDriftFrames << " residual frames, " << added << " added / " << removed << " removed, "
     << enc.size() << " gaussians; largest encoder/decoder difference " << fmt("%.1e", worst)
     << ", additions f16-exact " << (additions_f16 ? "yes" : "no") << ", test-view psnr "
     << (std::isinf(min_psnr) ? std::string("inf (identical)") : fmt("%.1f", min_psnr)) << " dB";
  return {same_size && added > 0 && additions_f16 && worst == 0.0 && min_psnr > kDriftPsnrMin, os.str()};
}

Outcome c9_closed_form() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const char* what) {
    if (!ok)
      failed.push_back(what);
  };
  GateHyper sym;
  sym.gamma0 = -0.25;
  sym.gamma1 = 1.25;
  expect(gate_value(0.0, sym) == 0.5, "symmetric stretch midpoint");
  const GateHyper hyp;
  expect(gate_value(0.0, hyp) == 0.5 * (hyp.gamma1 - hyp.gamma0) + hyp.gamma0, "stretched midpoint");

  std::vector<double> p;
  for (int i = 1; i < 1000; ++i)
    p.push_back(kGateProbMin + (kGateProbMax - kGateProbMin) * i / 1000.0);
  const auto la = gates_from_probs(p, hyp);
  double inv = 0;
  for (size_t i = 0; i < p.size(); ++i)
    inv = std::max(inv, std::abs(gate_l0_term(la[i], hyp) - p[i]));
  expect(inv <= 1e-9, "gates_from_probs inversion");

  ScoreVector sv;
  sv.norms = {0.5, 2.0, 1.0, 4.0, 0.25};
  sv.d.assign(2 * sv.norms.size(), 0.0);
  const auto probs = gate_init_probs(sv);
  expect(probs[2] == 0.5, "median score maps to 0.5");
  for (double c : {4.0, 0.125, 1024.0}) {
    ScoreVector scaled = sv;
    for (double& n : scaled.norms)
      n *= c;
    expect(gate_init_probs(scaled) == probs, "positive-scale invariance");
  }

  std::mt19937_64 rng(9);
  LinearDecoder dec = LinearDecoder::random(3, 4, rng);
  std::vector<int32_t> lat = {1, -2, 0, 3, 2, 0, -1, 1};
  std::vector<double> dl = {0.5, -1.0, 0.25, 2.0, 0.0, -0.75};
  const SteGrads sg = ste_grads(dl, dec, lat);
  bool ste = true;
  for (size_t r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) {
      double want = 0;
      for (int m = 0; m < 3; ++m)
        want += dec(m, c) * dl[r * 3 + m];
      ste = ste && sg.latents[r * 4 + c] == want;
    }
  expect(ste, "straight-through pass equals the unrounded linear gradient");

  expect(gate_value(-1e6, hyp) == 0.0, "gate reaches 0");
  expect(gate_value(1e6, hyp) == 1.0, "gate reaches 1");
  expect(gate_sample(-50.0, 0.5, hyp) == 0.0 && gate_sample(50.0, 0.5, hyp) == 1.0, "sampled gate end points");
  expect(gate_backward(-1e6, hyp, 1.0) == 0.0 && gate_backward(1e6, hyp, 1.0) == 0.0, "flat beyond the clamp");

  std::ostringstream os;
  os << "midpoints, inversion (max err " << fmt("%.1e", inv) << "), median/scale invariance, STE, end points";
  for (const auto& f : failed)
    os << " [failed: " << f << "]";
  return {failed.empty(), os.str()};
}

} // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "rasterizer gradients vs finite differences", 120, c1_gradients},
      {2, "identity frame is a no-op", 60, c2_identity},
      {3, "gate separation", 300, c3_gate_separation},
      {4, "packet rate at baseline quality", 600, c4_rate},
      {5, "stream beats frozen frame 0", 600, c5_quality},
      {6, "masked training fidelity", 600, c6_masked},
      {7, "codec exactness", 60, c7_codec},
      {8, "drift-free decoding", 300, c8_drift},
      {9, "closed-form identities", 10, c9_closed_form},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = s <= c.limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s %d %s: %s; %.1f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), s,
                c.limit_s, in_time ? "" : " over time");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
