#include "lsnet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "lsnet/errors.hpp"
#include "lsnet/filtering.hpp"
#include "lsnet/png_io.hpp"

namespace lsnet {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Affine {
  // p' = M p + t
  Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
  Eigen::Vector2d t = Eigen::Vector2d::Zero();

  Eigen::Vector2d operator()(const Eigen::Vector2d& p) const {
    return m * p + t;
  }
  Affine then(const Affine& next) const {
    Affine out;
    out.m = next.m * m;
    out.t = next.m * t + next.t;
    return out;
  }
  Affine inverse() const {
    Affine out;
    out.m = m.inverse();
    out.t = -(out.m * t);
    return out;
  }
};

void warp_plane(const Eigen::ArrayXXd& src, Eigen::ArrayXXd& dst,
                const Affine& inv) {
  const int h = int(dst.rows());
  const int w = int(dst.cols());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Eigen::Vector2d p = inv(Eigen::Vector2d(c + 0.5, r + 0.5));
      dst(r, c) = sample_bilinear(src, p.x(), p.y());
    }
  }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx == 0 ? 0 : d / mx;
  if (d == 0) {
    h = 0;
  } else if (mx == r) {
    h = std::fmod((g - b) / d, 6.0) / 6.0;
  } else if (mx == g) {
    h = ((b - r) / d + 2.0) / 6.0;
  } else {
    h = ((r - g) / d + 4.0) / 6.0;
  }
  if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = std::min(5, int(std::floor(hh)));
  const double f = hh - i;
  const double p = v * (1 - s);
  const double q = v * (1 - s * f);
  const double t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

// Anti-aliased stroke coverage: alpha = clamp(width/2 + 0.5 - dist, 0, 1)
// from the distance between the pixel center and the segment.
void stroke_coverage(Eigen::ArrayXXd& alpha, const LineSegment& seg,
                     double width) {
  const int h = int(alpha.rows());
  const int w = int(alpha.cols());
  const double rad = width / 2.0 + 0.5;
  const int c0 = std::max(0, int(std::floor(std::min(seg.x1, seg.x2) - rad)));
  const int c1 = std::min(w - 1, int(std::ceil(std::max(seg.x1, seg.x2) + rad)));
  const int r0 = std::max(0, int(std::floor(std::min(seg.y1, seg.y2) - rad)));
  const int r1 = std::min(h - 1, int(std::ceil(std::max(seg.y1, seg.y2) + rad)));
  const Eigen::Vector2d a(seg.x1, seg.y1);
  const Eigen::Vector2d d(seg.x2 - seg.x1, seg.y2 - seg.y1);
  const double len2 = d.squaredNorm();
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const Eigen::Vector2d p(c + 0.5, r + 0.5);
      double t = len2 > 0 ? (p - a).dot(d) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dist = (p - (a + t * d)).norm();
      const double cov = std::clamp(width / 2.0 + 0.5 - dist, 0.0, 1.0);
      if (cov > alpha(r, c)) alpha(r, c) = cov;
    }
  }
}

}  // namespace

void SceneParams::validate() const {
  if (!n_cables.valid() || n_cables.lo < 0) {
    throw ConfigError("scene: n_cables range invalid");
  }
  if (sag < 0) throw ConfigError("scene: sag must be >= 0");
  if (polyline_steps < 1) throw ConfigError("scene: polyline_steps must be >= 1");
  for (const auto* r : {&cable_width, &cable_intensity, &spacing, &angle}) {
    if (!r->valid()) throw ConfigError("scene: empty parameter range");
  }
  if (cable_width.lo <= 0) throw ConfigError("scene: cable_width must be > 0");
  if (background_source.empty()) {
    throw ConfigError("scene: background_source is empty");
  }
}

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (p < 0 || p > 1) {
      throw ConfigError(std::string("augment: ") + what + " must lie in [0, 1]");
    }
  };
  prob(p_apply, "p_apply");
  prob(grayscale_prob, "grayscale_prob");
  prob(flip_h_prob, "flip_h_prob");
  prob(flip_v_prob, "flip_v_prob");
  if (noise_sigma.lo < 0 || blur_sigma.lo < 0 || elastic_alpha.lo < 0 ||
      elastic_sigma.lo < 0) {
    throw ConfigError("augment: sigma/alpha ranges must be non-negative");
  }
  for (const auto* r :
       {&noise_sigma, &blur_sigma, &color.brightness, &color.contrast,
        &color.saturation, &color.hue, &elastic_alpha, &elastic_sigma,
        &zoom_crop, &rotation}) {
    if (!r->valid()) throw ConfigError("augment: empty parameter range");
  }
  if (blur_kernel < 1 || blur_kernel % 2 == 0) {
    throw ConfigError("augment: blur_kernel must be odd and positive");
  }
  if (zoom_crop.lo <= 0 || zoom_crop.hi > 1) {
    throw ConfigError("augment: zoom_crop must lie in (0, 1]");
  }
}

BackgroundPool BackgroundPool::open(const std::string& source) {
  if (source.empty()) {
    throw ConfigError("backgrounds: background_source is empty");
  }
  BackgroundPool pool;
  if (source == "procedural") return pool;
  std::error_code ec;
  if (!std::filesystem::is_directory(source, ec)) {
    throw ConfigError("backgrounds: not a directory: " + source);
  }
  std::set<std::filesystem::path> sorted;
  for (const auto& e : std::filesystem::directory_iterator(source)) {
    if (e.path().extension() == ".png") sorted.insert(e.path());
  }
  pool.paths_.assign(sorted.begin(), sorted.end());
  if (pool.paths_.empty()) {
    throw ConfigError("backgrounds: no PNG files in " + source);
  }
  return pool;
}

ImageRGB BackgroundPool::sample(int height, int width, Rng& rng) const {
  if (procedural()) {
    return procedural_background(height, width, rng.gen()());
  }
  const int i = rng.uniform_int(0, int(paths_.size()) - 1);
  ImageRGB img = read_png(paths_[std::size_t(i)]);
  if (img.height() != height || img.width() != width) {
    img = resize_bilinear(img, height, width);
  }
  return img;
}

ImageRGB procedural_background(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  ImageRGB img = ImageRGB::zeros(height, width);

  const double base_v = rng.uniform(0.08, 0.45);
  double base[3];
  for (double& b : base) b = std::clamp(base_v * rng.uniform(0.8, 1.2), 0.0, 1.0);

  // Value noise: coarse random grids, bilinearly upsampled.
  const int octaves[3] = {5, 9, 17};
  const double amps[3] = {0.14, 0.08, 0.05};
  Eigen::ArrayXXd noise = Eigen::ArrayXXd::Zero(height, width);
  for (int o = 0; o < 3; ++o) {
    const int n = octaves[o];
    Eigen::ArrayXXd grid(n, n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) grid(r, c) = rng.uniform(-1.0, 1.0);
    }
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double gx = (c + 0.5) / width * (n - 1);
        const double gy = (r + 0.5) / height * (n - 1);
        noise(r, c) +=
            amps[o] * sample_bilinear(grid, gx + 0.5, gy + 0.5);
      }
    }
  }
  // Soft directional gradient.
  const double gtheta = rng.uniform(0, 2 * kPi);
  const double gamp = rng.uniform(0.0, 0.12);
  const double gx = std::cos(gtheta), gy = std::sin(gtheta);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double u =
          ((c + 0.5) / width - 0.5) * gx + ((r + 0.5) / height - 0.5) * gy;
      noise(r, c) += gamp * u;
    }
  }
  for (int k = 0; k < 3; ++k) img.ch[k] = (base[k] + noise).min(1.0).max(0.0);
  return img;
}

SampleRecord render_scene(const SceneParams& params, int size,
                          std::uint64_t rng_seed) {
  params.validate();
  if (size <= 0) throw ConfigError("scene: size must be positive");
  const BackgroundPool pool = BackgroundPool::open(params.background_source);

  Rng rng(rng_seed);
  SampleRecord rec;
  rec.seed = rng_seed;
  rec.provenance = "render";
  ImageRGB bg = pool.sample(size, size, rng);

  const int n = rng.uniform_int(params.n_cables.lo, params.n_cables.hi);
  const double theta = rng.uniform(params.angle.lo, params.angle.hi);
  const Eigen::Vector2d dir(std::cos(theta), std::sin(theta));
  const Eigen::Vector2d nrm(-std::sin(theta), std::cos(theta));

  // Perpendicular offsets: consecutive gaps drawn from the spacing range,
  // then the bundle is centered with a bounded global jitter.
  std::vector<double> offsets(std::size_t(std::max(n, 0)), 0.0);
  for (int i = 1; i < n; ++i) {
    offsets[std::size_t(i)] =
        offsets[std::size_t(i - 1)] + rng.uniform(params.spacing.lo, params.spacing.hi);
  }
  const double mean_off =
      n > 0 ? std::accumulate(offsets.begin(), offsets.end(), 0.0) / n : 0.0;
  const double jitter = rng.uniform(-size / 6.0, size / 6.0);

  Eigen::ArrayXXd total_mask = Eigen::ArrayXXd::Zero(size, size);
  ImageRGB layer = ImageRGB::zeros(size, size);
  const Box image_box{0, 0, double(size), double(size)};

  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d center =
        Eigen::Vector2d(size / 2.0, size / 2.0) +
        (offsets[std::size_t(i)] - mean_off + jitter) * nrm;
    const Eigen::Vector2d p0 = center - double(size) * dir;
    const Eigen::Vector2d p1 = center + double(size) * dir;
    const double sag = rng.uniform(-params.sag, params.sag);
    const Eigen::Vector2d ctrl = center + sag * nrm;
    const double width = rng.uniform(params.cable_width.lo, params.cable_width.hi);
    const double intensity =
        rng.uniform(params.cable_intensity.lo, params.cable_intensity.hi);
    double color[3];
    for (double& c : color) c = std::clamp(intensity * rng.uniform(0.92, 1.0), 0.0, 1.0);

    // Quadratic Bezier discretized into polyline_steps straight pieces.
    Eigen::ArrayXXd alpha = Eigen::ArrayXXd::Zero(size, size);
    Eigen::Vector2d prev = p0;
    for (int j = 1; j <= params.polyline_steps; ++j) {
      const double t = double(j) / params.polyline_steps;
      const Eigen::Vector2d pt = (1 - t) * (1 - t) * p0 +
                                 2 * (1 - t) * t * ctrl + t * t * p1;
      LineSegment piece{prev.x(), prev.y(), pt.x(), pt.y()};
      stroke_coverage(alpha, piece, width);
      if (auto clipped = clip_segment_to_box(piece, image_box)) {
        rec.segments.push_back(*clipped);
      }
      prev = pt;
    }
    // Composite the cable over the accumulated layer.
    for (int k = 0; k < 3; ++k) {
      layer.ch[k] = color[k] * alpha + layer.ch[k] * (1.0 - alpha);
    }
    total_mask = alpha + total_mask * (1.0 - alpha);
  }

  rec.image = ImageRGB::zeros(size, size);
  for (int k = 0; k < 3; ++k) {
    rec.image.ch[k] = bg.ch[k] * (1.0 - total_mask) + layer.ch[k];
  }
  rec.image.clamp01();
  rec.stroke_mask = total_mask;
  rec.cable_layer = layer;
  return rec;
}

void add_gaussian_noise(ImageRGB& image, double mu, double sigma, Rng& rng) {
  if (sigma < 0) throw ConfigError("augment: noise sigma must be >= 0");
  for (auto& plane : image.ch) {
    for (Eigen::Index i = 0; i < plane.size(); ++i) {
      plane(i) = std::clamp(plane(i) + rng.normal(mu, sigma), 0.0, 1.0);
    }
  }
}

void gaussian_blur(ImageRGB& image, double sigma_b, int kernel_size) {
  for (auto& plane : image.ch) {
    plane = gaussian_blur_plane(plane, sigma_b, kernel_size);
  }
}

void color_jitter(ImageRGB& image, const ColorJitterRanges& ranges, Rng& rng) {
  const double fb = rng.uniform(ranges.brightness.lo, ranges.brightness.hi);
  const double fc = rng.uniform(ranges.contrast.lo, ranges.contrast.hi);
  const double fs = rng.uniform(ranges.saturation.lo, ranges.saturation.hi);
  const double dh = rng.uniform(ranges.hue.lo, ranges.hue.hi);

  if (fb != 1.0) {
    for (auto& p : image.ch) p = (p * fb).min(1.0).max(0.0);
  }
  if (fc != 1.0) {
    const double m = luma(image).mean();
    for (auto& p : image.ch) p = (m + fc * (p - m)).min(1.0).max(0.0);
  }
  if (fs != 1.0) {
    const Eigen::ArrayXXd l = luma(image);
    for (auto& p : image.ch) p = (l + fs * (p - l)).min(1.0).max(0.0);
  }
  if (dh != 0.0) {
    const int h = image.height(), w = image.width();
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double hh, ss, vv;
        rgb_to_hsv(image.ch[0](r, c), image.ch[1](r, c), image.ch[2](r, c), hh,
                   ss, vv);
        hh = hh + dh;
        hh -= std::floor(hh);
        double rr, gg, bb;
        hsv_to_rgb(hh, ss, vv, rr, gg, bb);
        image.ch[0](r, c) = std::clamp(rr, 0.0, 1.0);
        image.ch[1](r, c) = std::clamp(gg, 0.0, 1.0);
        image.ch[2](r, c) = std::clamp(bb, 0.0, 1.0);
      }
    }
  }
}

void grayscale_rgb(ImageRGB& image) {
  const Eigen::ArrayXXd l = luma(image);
  for (auto& p : image.ch) p = l;
}

DisplacementField make_elastic_field(int height, int width, double alpha_e,
                                     double sigma_e, Rng& rng) {
  if (alpha_e < 0 || sigma_e < 0) {
    throw ConfigError("augment: elastic alpha/sigma must be >= 0");
  }
  DisplacementField f;
  f.dx = Eigen::ArrayXXd::Zero(height, width);
  f.dy = Eigen::ArrayXXd::Zero(height, width);
  if (alpha_e == 0) return f;
  for (Eigen::Index i = 0; i < f.dx.size(); ++i) f.dx(i) = rng.uniform(-1, 1);
  for (Eigen::Index i = 0; i < f.dy.size(); ++i) f.dy(i) = rng.uniform(-1, 1);
  if (sigma_e > 0) {
    const int k = 2 * int(std::ceil(3 * sigma_e)) + 1;
    f.dx = gaussian_blur_plane(f.dx, sigma_e, k);
    f.dy = gaussian_blur_plane(f.dy, sigma_e, k);
  }
  // Scale so the largest displacement magnitude equals alpha_e pixels.
  const double m = std::max(f.dx.abs().maxCoeff(), f.dy.abs().maxCoeff());
  if (m > 0) {
    f.dx *= alpha_e / m;
    f.dy *= alpha_e / m;
  }
  return f;
}

void apply_displacement(ImageRGB& image, std::vector<LineSegment>& segments,
                        const DisplacementField& field) {
  const int h = image.height(), w = image.width();
  if (int(field.dx.rows()) != h || int(field.dx.cols()) != w ||
      int(field.dy.rows()) != h || int(field.dy.cols()) != w) {
    throw ContractError("augment: displacement field shape mismatch");
  }
  ImageRGB out = ImageRGB::zeros(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double x = c + 0.5 + field.dx(r, c);
      const double y = r + 0.5 + field.dy(r, c);
      for (int k = 0; k < 3; ++k) out.ch[k](r, c) = sample_bilinear(image.ch[k], x, y);
    }
  }
  image = std::move(out);

  const Box image_box{0, 0, double(w), double(h)};
  std::vector<LineSegment> moved;
  moved.reserve(segments.size());
  for (const auto& seg : segments) {
    // First-order inverse of the backward warp: p -> p - delta(p).
    LineSegment s = seg;
    s.x1 = seg.x1 - sample_bilinear(field.dx, seg.x1, seg.y1);
    s.y1 = seg.y1 - sample_bilinear(field.dy, seg.x1, seg.y1);
    s.x2 = seg.x2 - sample_bilinear(field.dx, seg.x2, seg.y2);
    s.y2 = seg.y2 - sample_bilinear(field.dy, seg.x2, seg.y2);
    if (auto clipped = clip_segment_to_box(s, image_box)) {
      moved.push_back(*clipped);
    }
  }
  segments = std::move(moved);
}

void elastic_transform(ImageRGB& image, std::vector<LineSegment>& segments,
                       double alpha_e, double sigma_e, Rng& rng) {
  if (alpha_e == 0) return;
  const DisplacementField f =
      make_elastic_field(image.height(), image.width(), alpha_e, sigma_e, rng);
  apply_displacement(image, segments, f);
}

namespace {

Affine build_zoom_rotate_flip(int h, int w, double crop_fraction, double theta,
                              bool flip_h, bool flip_v, Rng& rng) {
  Affine a;  // identity
  if (theta != 0.0) {
    Affine rot;
    const double cs = std::cos(theta), sn = std::sin(theta);
    rot.m << cs, sn, -sn, cs;
    const Eigen::Vector2d c(w / 2.0, h / 2.0);
    rot.t = c - rot.m * c;
    a = a.then(rot);
  }
  if (crop_fraction != 1.0) {
    const double cw = crop_fraction * w;
    const double chh = crop_fraction * h;
    const double ox = rng.uniform(0.0, w - cw);
    const double oy = rng.uniform(0.0, h - chh);
    Affine crop;
    crop.m << w / cw, 0, 0, h / chh;
    crop.t = Eigen::Vector2d(-ox * w / cw, -oy * h / chh);
    a = a.then(crop);
  }
  if (flip_h) {
    Affine fh;
    fh.m << -1, 0, 0, 1;
    fh.t = Eigen::Vector2d(w, 0);
    a = a.then(fh);
  }
  if (flip_v) {
    Affine fv;
    fv.m << 1, 0, 0, -1;
    fv.t = Eigen::Vector2d(0, h);
    a = a.then(fv);
  }
  return a;
}

bool affine_is_identity(const Affine& a) {
  return a.m.isIdentity(0.0) && a.t.isZero(0.0);
}

void warp_segments(std::vector<LineSegment>& segments, const Affine& a, int h,
                   int w) {
  const Box image_box{0, 0, double(w), double(h)};
  std::vector<LineSegment> out;
  out.reserve(segments.size());
  for (const auto& seg : segments) {
    const Eigen::Vector2d p1 = a(Eigen::Vector2d(seg.x1, seg.y1));
    const Eigen::Vector2d p2 = a(Eigen::Vector2d(seg.x2, seg.y2));
    LineSegment s{p1.x(), p1.y(), p2.x(), p2.y()};
    s.confidence = seg.confidence;
    if (auto clipped = clip_segment_to_box(s, image_box)) out.push_back(*clipped);
  }
  segments = std::move(out);
}

}  // namespace

void zoom_rotate_flip(ImageRGB& image, std::vector<LineSegment>& segments,
                      double crop_fraction, double theta, bool flip_h,
                      bool flip_v, Rng& rng) {
  if (crop_fraction <= 0 || crop_fraction > 1) {
    throw ConfigError("augment: crop_fraction must lie in (0, 1]");
  }
  const int h = image.height(), w = image.width();
  const Affine a =
      build_zoom_rotate_flip(h, w, crop_fraction, theta, flip_h, flip_v, rng);
  if (affine_is_identity(a)) return;
  const Affine inv = a.inverse();
  ImageRGB out = ImageRGB::zeros(h, w);
  for (int k = 0; k < 3; ++k) warp_plane(image.ch[k], out.ch[k], inv);
  image = std::move(out);
  warp_segments(segments, a, h, w);
}

AppliedOps on_the_fly_augment(SampleRecord& record, const AugmentConfig& cfg,
                              Rng& rng) {
  cfg.validate();
  AppliedOps ops;
  ops.noise = rng.bernoulli(cfg.p_apply);
  ops.blur = rng.bernoulli(cfg.p_apply);
  ops.color = rng.bernoulli(cfg.p_apply);
  ops.elastic = rng.bernoulli(cfg.p_apply);
  if (ops.noise) {
    const double sigma = rng.uniform(cfg.noise_sigma.lo, cfg.noise_sigma.hi);
    add_gaussian_noise(record.image, cfg.noise_mu, sigma, rng);
  }
  if (ops.blur) {
    const double sigma = rng.uniform(cfg.blur_sigma.lo, cfg.blur_sigma.hi);
    gaussian_blur(record.image, sigma, cfg.blur_kernel);
  }
  if (ops.color) {
    color_jitter(record.image, cfg.color, rng);
    if (rng.bernoulli(cfg.grayscale_prob)) grayscale_rgb(record.image);
  }
  if (ops.elastic) {
    const double alpha = rng.uniform(cfg.elastic_alpha.lo, cfg.elastic_alpha.hi);
    const double sigma = rng.uniform(cfg.elastic_sigma.lo, cfg.elastic_sigma.hi);
    elastic_transform(record.image, record.segments, alpha, sigma, rng);
  }
  return ops;
}

std::vector<SampleRecord> make_offline_set(
    const std::vector<SampleRecord>& records, int n_crops, int n_backgrounds,
    bool include_flips, const BackgroundPool& pool, const AugmentConfig& cfg) {
  if (n_crops < 1 || n_backgrounds < 1) {
    throw ConfigError("augment: offline counts must be >= 1");
  }
  cfg.validate();
  std::vector<SampleRecord> out;
  out.reserve(records.size() * std::size_t(n_crops) *
              (include_flips ? 2 : 1) * std::size_t(n_backgrounds));
  for (const auto& rec : records) {
    const int h = rec.image.height(), w = rec.image.width();
    std::uint64_t combo = 0;
    for (int ci = 0; ci < n_crops; ++ci) {
      for (int fi = 0; fi < (include_flips ? 2 : 1); ++fi) {
        Rng geom_rng(fold_seed(rec.seed, 0x0fflu * ci + fi));
        // Crop 0 stays the identity so the original geometry survives.
        const double frac =
            ci == 0 ? 1.0 : geom_rng.uniform(cfg.zoom_crop.lo, cfg.zoom_crop.hi);
        const Affine a = build_zoom_rotate_flip(h, w, frac, 0.0, fi == 1,
                                                false, geom_rng);
        SampleRecord variant;
        variant.segments = rec.segments;
        variant.stroke_mask = rec.stroke_mask;
        variant.cable_layer = rec.cable_layer;
        if (!affine_is_identity(a)) {
          const Affine inv = a.inverse();
          Eigen::ArrayXXd mask(h, w);
          warp_plane(rec.stroke_mask, mask, inv);
          variant.stroke_mask = std::move(mask);
          variant.cable_layer = ImageRGB::zeros(h, w);
          for (int k = 0; k < 3; ++k) {
            warp_plane(rec.cable_layer.ch[k], variant.cable_layer.ch[k], inv);
          }
          warp_segments(variant.segments, a, h, w);
        }
        for (int bi = 0; bi < n_backgrounds; ++bi) {
          SampleRecord final_rec = variant;
          final_rec.seed = fold_seed(rec.seed, 0x1000 + combo);
          final_rec.provenance = "offline:crop" + std::to_string(ci) +
                                 ":flip" + std::to_string(fi) + ":bg" +
                                 std::to_string(bi);
          Rng bg_rng(fold_seed(final_rec.seed, 7));
          const ImageRGB bg = pool.sample(h, w, bg_rng);
          final_rec.image = ImageRGB::zeros(h, w);
          for (int k = 0; k < 3; ++k) {
            final_rec.image.ch[k] =
                bg.ch[k] * (1.0 - final_rec.stroke_mask) +
                final_rec.cable_layer.ch[k];
          }
          final_rec.image.clamp01();
          out.push_back(std::move(final_rec));
          ++combo;
        }
      }
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw IoError("manifest: cannot open for writing: " + path.string());
  for (const auto& e : entries) {
    nlohmann::json j;
    j["image"] = e.image_path;
    j["width"] = e.width;
    j["height"] = e.height;
    auto& segs = j["segments"] = nlohmann::json::array();
    for (const auto& s : e.segments) segs.push_back({s[0], s[1], s[2], s[3]});
    j["seed"] = e.seed;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("manifest: write failed: " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("manifest: cannot open: " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.image_path = j.at("image").get<std::string>();
      e.width = j.at("width").get<int>();
      e.height = j.at("height").get<int>();
      e.seed = j.at("seed").get<std::uint64_t>();
      for (const auto& s : j.at("segments")) {
        e.segments.push_back({s.at(0).get<double>(), s.at(1).get<double>(),
                              s.at(2).get<double>(), s.at(3).get<double>()});
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError("manifest: parse error at " + path.string() + ":" +
                    std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<LineSegment> manifest_segments(const ManifestEntry& entry) {
  std::vector<LineSegment> segs;
  segs.reserve(entry.segments.size());
  for (const auto& s : entry.segments) {
    segs.push_back(LineSegment{s[0], s[1], s[2], s[3]});
  }
  return segs;
}

}  // namespace lsnet
