#pragma once

// Procedural generation of annotated line scenes and the augmentation suite:
// additive Gaussian noise, Gaussian blur, color manipulation, elastic
// deformation, and zoom / rotation / flips, all with ground-truth
// co-transformation. Every operation is deterministic given its RNG.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lsnet/geometry.hpp"
#include "lsnet/image.hpp"
#include "lsnet/rng.hpp"

namespace lsnet {

struct Range {
  double lo = 0;
  double hi = 0;
  bool valid() const { return lo <= hi; }
};

struct IntRange {
  int lo = 0;
  int hi = 0;
  bool valid() const { return lo <= hi; }
};

// Background provider: either a directory of PNG photographs or the built-in
// procedural texture generator ("procedural"), which needs no files on disk.
class BackgroundPool {
 public:
  static BackgroundPool open(const std::string& source);

  ImageRGB sample(int height, int width, Rng& rng) const;
  bool procedural() const { return paths_.empty(); }

 private:
  std::vector<std::filesystem::path> paths_;  // empty => procedural
};

// Procedural texture (value-noise clouds plus a soft gradient); also used to
// seed the checked-in background set.
ImageRGB procedural_background(int height, int width, std::uint64_t seed);

struct SceneParams {
  IntRange n_cables{1, 4};
  double sag = 16.0;        // max mid-span deflection, px
  int polyline_steps = 12;  // straight pieces per cable
  Range cable_width{1.5, 4.0};
  Range cable_intensity{0.7, 1.0};
  Range spacing{10.0, 40.0};   // inter-cable distance, px
  Range angle{0.0, 3.14159265358979323846};  // orientation, radians
  std::string background_source = "procedural";

  void validate() const;  // ConfigError on violated range constraints
};

struct SampleRecord {
  ImageRGB image;
  std::vector<LineSegment> segments;  // polyline pieces, per cable, in order
  std::uint64_t seed = 0;
  std::string provenance;

  // Renderer byproducts enabling exact background recomposition.
  Eigen::ArrayXXd stroke_mask;  // stroke coverage in [0, 1]
  ImageRGB cable_layer;         // premultiplied cable color
};

// Cables are quadratic curves discretized into polyline_steps straight
// pieces, drawn anti-aliased over a background sampled from the pool.
SampleRecord render_scene(const SceneParams& params, int size,
                          std::uint64_t rng_seed);

// f = clamp(s + n, 0, 1) with n ~ iid Gaussian(mu, sigma^2) per pixel/channel.
void add_gaussian_noise(ImageRGB& image, double mu, double sigma, Rng& rng);

// Separable convolution with the discretized normalized Gaussian; odd kernel.
void gaussian_blur(ImageRGB& image, double sigma_b, int kernel_size);

struct ColorJitterRanges {
  Range brightness{1.0, 1.0};
  Range contrast{1.0, 1.0};
  Range saturation{1.0, 1.0};
  Range hue{0.0, 0.0};  // shift in turns, [-0.5, 0.5]
};

// Applies brightness, contrast, saturation, hue in that fixed order with
// factors sampled from the ranges; clamps to [0, 1] after each step.
void color_jitter(ImageRGB& image, const ColorJitterRanges& ranges, Rng& rng);

// Replicates BT.601 luma across the three channels.
void grayscale_rgb(ImageRGB& image);

struct DisplacementField {
  Eigen::ArrayXXd dx;  // in pixels, indexed (row, col)
  Eigen::ArrayXXd dy;
};

// Uniform(-1,1) fields smoothed with a Gaussian of sigma_e, then rescaled so
// the largest per-axis displacement magnitude equals alpha_e pixels.
DisplacementField make_elastic_field(int height, int width, double alpha_e,
                                     double sigma_e, Rng& rng);

// Backward warp: output(q) = input(q + delta(q)), bilinear. Segment vertices
// map through the first-order inverse q = p - delta(p) and are then clipped
// to the image.
void apply_displacement(ImageRGB& image, std::vector<LineSegment>& segments,
                        const DisplacementField& field);

void elastic_transform(ImageRGB& image, std::vector<LineSegment>& segments,
                       double alpha_e, double sigma_e, Rng& rng);

// Rotation about the image center by theta (positive = counter-clockwise in
// display orientation: (x, y) -> (y, S - x) for a quarter turn), then a crop
// of the given fraction rescaled to the original size (crop corner drawn from
// rng), then optional flips. Segments follow the same affine maps and are
// clipped to the image.
void zoom_rotate_flip(ImageRGB& image, std::vector<LineSegment>& segments,
                      double crop_fraction, double theta, bool flip_h,
                      bool flip_v, Rng& rng);

struct AugmentConfig {
  double p_apply = 0.25;  // per-family on-the-fly probability
  double noise_mu = 0.0;
  Range noise_sigma{0.02, 0.08};
  Range blur_sigma{0.5, 2.0};
  int blur_kernel = 9;
  ColorJitterRanges color{{0.8, 1.2}, {0.8, 1.2}, {0.7, 1.3}, {-0.05, 0.05}};
  double grayscale_prob = 0.1;
  Range elastic_alpha{2.0, 6.0};
  Range elastic_sigma{6.0, 10.0};
  Range zoom_crop{0.6, 1.0};
  Range rotation{-0.5235987755982988, 0.5235987755982988};  // +/- 30 deg
  double flip_h_prob = 0.5;
  double flip_v_prob = 0.5;

  void validate() const;
};

struct AppliedOps {
  bool noise = false;
  bool blur = false;
  bool color = false;
  bool elastic = false;
};

// Independently with probability cfg.p_apply applies each family: noise,
// blur, color ops (with an inner grayscale chance), elastic deformation.
AppliedOps on_the_fly_augment(SampleRecord& record, const AugmentConfig& cfg,
                              Rng& rng);

// Offline expansion: per input record, n_crops crop variants (the first is
// always the identity crop) each optionally paired with its horizontal flip,
// composited over n_backgrounds backgrounds drawn from the pool via the
// renderer's stroke mask. Child seeds are derived from the record seed.
std::vector<SampleRecord> make_offline_set(
    const std::vector<SampleRecord>& records, int n_crops, int n_backgrounds,
    bool include_flips, const BackgroundPool& pool, const AugmentConfig& cfg);

// Manifest: JSON-lines, one record per line with keys
// {"image", "width", "height", "segments", "seed"}; continuous pixel
// coordinates, origin top-left.
struct ManifestEntry {
  std::string image_path;  // relative to the manifest directory
  int width = 0;
  int height = 0;
  std::vector<std::array<double, 4>> segments;
  std::uint64_t seed = 0;
};

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

std::vector<LineSegment> manifest_segments(const ManifestEntry& entry);

}  // namespace lsnet
