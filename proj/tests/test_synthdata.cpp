#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "lsnet/errors.hpp"
#include "lsnet/filtering.hpp"
#include "lsnet/png_io.hpp"
#include "lsnet/postprocess.hpp"
#include "lsnet/synthdata.hpp"

using namespace lsnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("lsnet_test_" + tag);
  fs::create_directories(p);
  return p;
}

// A one-image background directory with a known constant color.
fs::path constant_background_dir(double value, int size) {
  const fs::path dir = temp_dir("bg_" + std::to_string(int(value * 100)) +
                                "_" + std::to_string(size));
  write_png(ImageRGB::constant(size, size, value, value, value),
            dir / "bg.png");
  return dir;
}

SceneParams easy_scene(const std::string& bg_source) {
  SceneParams p;
  p.n_cables = {2, 2};
  p.sag = 10;
  p.polyline_steps = 10;
  p.cable_width = {3.0, 3.0};
  p.cable_intensity = {0.95, 1.0};
  p.spacing = {50, 70};
  p.background_source = bg_source;
  return p;
}

double binary_iou(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b) {
  const double inter = ((a > 0.5) && (b > 0.5)).count();
  const double uni = ((a > 0.5) || (b > 0.5)).count();
  return uni == 0 ? 1.0 : inter / uni;
}

}  // namespace

TEST_CASE("render_scene is deterministic and in-bounds") {
  SceneParams p = easy_scene("procedural");
  const SampleRecord a = render_scene(p, 128, 77);
  const SampleRecord b = render_scene(p, 128, 77);
  CHECK(max_abs_diff(a.image, b.image) == 0.0);
  REQUIRE(a.segments.size() == b.segments.size());
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    CHECK(a.segments[i].x1 == b.segments[i].x1);
    CHECK(a.segments[i].y2 == b.segments[i].y2);
  }
  CHECK(!a.segments.empty());
  for (const auto& s : a.segments) {
    CHECK(s.x1 >= 0);
    CHECK(s.x2 <= 128);
    CHECK(s.y1 >= 0);
    CHECK(s.y2 <= 128);
  }
  for (int c = 0; c < 3; ++c) {
    CHECK(a.image.ch[c].minCoeff() >= 0.0);
    CHECK(a.image.ch[c].maxCoeff() <= 1.0);
  }

  const SampleRecord c = render_scene(p, 128, 78);
  CHECK(max_abs_diff(a.image, c.image) > 0.0);
}

TEST_CASE("render_scene: zero sag gives collinear polyline pieces") {
  SceneParams p = easy_scene("procedural");
  p.sag = 0;
  const SampleRecord rec = render_scene(p, 128, 3);
  REQUIRE(rec.segments.size() >= 2);
  for (std::size_t i = 1; i < rec.segments.size(); ++i) {
    const auto& s0 = rec.segments[i - 1];
    const auto& s1 = rec.segments[i];
    if (s0.x2 != s1.x1 || s0.y2 != s1.y1) continue;  // next cable
    const double cross = (s0.x2 - s0.x1) * (s1.y2 - s1.y1) -
                         (s0.y2 - s0.y1) * (s1.x2 - s1.x1);
    CHECK(std::abs(cross) < 1e-6 * s0.length() * s1.length());
  }
}

TEST_CASE("render_scene: drawn pixels are explained by the GT raster") {
  const auto bg_dir = constant_background_dir(0.15, 128);
  SceneParams p = easy_scene(bg_dir.string());
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const SampleRecord rec = render_scene(p, 128, seed);
    auto gt = rec.segments;
    for (auto& s : gt) s.confidence = 1.0;
    // Width = cable_width (3), one extra ring for the anti-aliased fringe.
    const auto raster = rasterize_segments(gt, 5, 128, 128);
    long long differing = 0, covered = 0;
    for (int r = 0; r < 128; ++r) {
      for (int c = 0; c < 128; ++c) {
        const double diff = std::abs(rec.image.ch[0](r, c) - 0.15);
        if (diff > 0.02) {
          ++differing;
          if (raster.values(r, c) > 0) ++covered;
        }
      }
    }
    REQUIRE(differing > 100);
    CHECK(double(covered) / double(differing) >= 0.95);
  }
}

TEST_CASE("gaussian noise") {
  ImageRGB img = ImageRGB::constant(16, 16, 0.4, 0.4, 0.4);
  SUBCASE("sigma 0, mu 0 is the identity") {
    Rng rng(1);
    ImageRGB copy = img;
    add_gaussian_noise(copy, 0.0, 0.0, rng);
    CHECK(max_abs_diff(copy, img) == 0.0);
  }
  SUBCASE("sigma 0 shifts every pixel by mu") {
    Rng rng(1);
    ImageRGB copy = img;
    add_gaussian_noise(copy, 0.1, 0.0, rng);
    CHECK((copy.ch[0] - 0.5).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("sample statistics match over a million pixels") {
    ImageRGB big = ImageRGB::constant(600, 600, 0.5, 0.5, 0.5);
    Rng rng(7);
    add_gaussian_noise(big, 0.0, 0.05, rng);
    double sum = 0, sum2 = 0;
    const double n = 3.0 * 600 * 600;
    for (int c = 0; c < 3; ++c) {
      sum += big.ch[c].sum();
      sum2 += (big.ch[c] - 0.5).square().sum();
    }
    const double mean = sum / n;
    const double std = std::sqrt(sum2 / n);
    CHECK(std::abs(mean - 0.5) < 0.005);
    CHECK(std::abs(std - 0.05) < 0.005);
  }
}

TEST_CASE("gaussian blur of images") {
  SUBCASE("constant image unchanged") {
    ImageRGB img = ImageRGB::constant(32, 32, 0.3, 0.5, 0.7);
    ImageRGB copy = img;
    gaussian_blur(copy, 1.5, 7);
    CHECK(max_abs_diff(copy, img) < 1e-12);
  }
  SUBCASE("unit impulse reproduces the normalized kernel") {
    ImageRGB img = ImageRGB::zeros(21, 21);
    img.ch[1](10, 10) = 1.0;
    gaussian_blur(img, 1.0, 5);
    const Eigen::VectorXd k = gaussian_kernel_1d(1.0, 5);
    for (int dy = -2; dy <= 2; ++dy) {
      for (int dx = -2; dx <= 2; ++dx) {
        CHECK(img.ch[1](10 + dy, 10 + dx) ==
              doctest::Approx(k[2 + dy] * k[2 + dx]).epsilon(1e-9));
      }
    }
  }
  SUBCASE("semigroup: twice sigma approximates once sigma*sqrt(2)") {
    ImageRGB a = ImageRGB::zeros(64, 64);
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(0, 1);
    for (int c = 0; c < 3; ++c) {
      for (Eigen::Index i = 0; i < a.ch[c].size(); ++i) a.ch[c](i) = u(gen);
    }
    ImageRGB twice = a;
    gaussian_blur(twice, 1.0, 13);
    gaussian_blur(twice, 1.0, 13);
    ImageRGB once = a;
    gaussian_blur(once, std::sqrt(2.0), 13);
    CHECK(max_abs_diff(twice, once) < 1e-2);
  }
  SUBCASE("even kernel size rejected") {
    ImageRGB img = ImageRGB::zeros(8, 8);
    CHECK_THROWS_AS(gaussian_blur(img, 1.0, 4), ConfigError);
  }
}

TEST_CASE("color jitter and grayscale") {
  ImageRGB img = ImageRGB::zeros(8, 8);
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index i = 0; i < img.ch[c].size(); ++i) img.ch[c](i) = u(gen);
  }
  SUBCASE("degenerate identity ranges change nothing") {
    Rng rng(1);
    ImageRGB copy = img;
    color_jitter(copy, ColorJitterRanges{}, rng);
    CHECK(max_abs_diff(copy, img) == 0.0);
  }
  SUBCASE("brightness is multiplicative") {
    Rng rng(1);
    ImageRGB flat = ImageRGB::constant(4, 4, 0.5, 0.5, 0.5);
    ColorJitterRanges ranges;
    ranges.brightness = {1.2, 1.2};
    color_jitter(flat, ranges, rng);
    CHECK(flat.ch[0](0, 0) == doctest::Approx(0.6));
  }
  SUBCASE("grayscale replicates luma") {
    ImageRGB copy = img;
    grayscale_rgb(copy);
    CHECK((copy.ch[0] - copy.ch[1]).abs().maxCoeff() == 0.0);
    CHECK((copy.ch[1] - copy.ch[2]).abs().maxCoeff() == 0.0);
    CHECK(copy.ch[0](0, 0) ==
          doctest::Approx(0.299 * img.ch[0](0, 0) + 0.587 * img.ch[1](0, 0) +
                          0.114 * img.ch[2](0, 0)));
  }
}

TEST_CASE("elastic transform") {
  SUBCASE("alpha 0 is the identity") {
    SceneParams p = easy_scene("procedural");
    SampleRecord rec = render_scene(p, 64, 5);
    const ImageRGB before = rec.image;
    const auto segs_before = rec.segments;
    Rng rng(2);
    elastic_transform(rec.image, rec.segments, 0.0, 8.0, rng);
    CHECK(max_abs_diff(rec.image, before) == 0.0);
    CHECK(rec.segments.size() == segs_before.size());
  }
  SUBCASE("constant field shifts content and segments by -c") {
    SceneParams p = easy_scene("procedural");
    SampleRecord rec = render_scene(p, 64, 6);
    const ImageRGB before = rec.image;
    const auto segs_before = rec.segments;
    DisplacementField f;
    f.dx = Eigen::ArrayXXd::Constant(64, 64, 3.0);
    f.dy = Eigen::ArrayXXd::Zero(64, 64);
    apply_displacement(rec.image, rec.segments, f);
    // Interior content shifted left by 3 pixels.
    for (int r = 20; r < 44; ++r) {
      for (int c = 20; c < 44; ++c) {
        CHECK(rec.image.ch[0](r, c) ==
              doctest::Approx(before.ch[0](r, c + 3)).epsilon(1e-9));
      }
    }
    // Segment endpoints moved by (-3, 0) where they stay in bounds.
    REQUIRE(!rec.segments.empty());
    bool checked = false;
    for (const auto& sb : segs_before) {
      if (sb.x1 < 4 || sb.x2 < 4) continue;
      for (const auto& sa : rec.segments) {
        if (std::abs(sa.x1 - (sb.x1 - 3)) < 1e-9 &&
            std::abs(sa.y1 - sb.y1) < 1e-9) {
          checked = true;
        }
      }
    }
    CHECK(checked);
  }
  SUBCASE("warped GT raster still explains the warped cable pixels") {
    const auto bg_dir = constant_background_dir(0.15, 128);
    SceneParams p = easy_scene(bg_dir.string());
    SampleRecord rec = render_scene(p, 128, 8);
    Rng rng(3);
    elastic_transform(rec.image, rec.segments, 4.0, 8.0, rng);
    auto gt = rec.segments;
    for (auto& s : gt) s.confidence = 1.0;
    const auto raster = rasterize_segments(gt, 5, 128, 128);
    const Eigen::ArrayXXd cable_px = (rec.image.ch[0] > 0.5).cast<double>();
    // Compare the thick raster with the dilated cable core.
    Eigen::ArrayXXd raster_px = (raster.values > 0).cast<double>();
    const double iou = binary_iou(raster_px, cable_px);
    CHECK(iou >= 0.5);  // coarse sanity for the thick-vs-core comparison
    // Coverage is the contract: nearly all cable pixels under the raster.
    const double covered =
        ((cable_px > 0.5) && (raster_px > 0.5)).count() /
        std::max(1.0, double((cable_px > 0.5).count()));
    CHECK(covered >= 0.8);
  }
}

TEST_CASE("zoom / rotate / flip") {
  SceneParams p = easy_scene("procedural");
  SUBCASE("identity parameters change nothing") {
    SampleRecord rec = render_scene(p, 64, 11);
    const ImageRGB before = rec.image;
    const auto segs = rec.segments;
    Rng rng(4);
    zoom_rotate_flip(rec.image, rec.segments, 1.0, 0.0, false, false, rng);
    CHECK(max_abs_diff(rec.image, before) == 0.0);
    CHECK(rec.segments.size() == segs.size());
  }
  SUBCASE("quarter turn maps (x, y) to (y, S - x)") {
    ImageRGB img = ImageRGB::zeros(64, 64);
    std::vector<LineSegment> segs{{10, 20, 30, 40}};
    Rng rng(5);
    zoom_rotate_flip(img, segs, 1.0, 1.5707963267948966, false, false, rng);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].x1 == doctest::Approx(20));
    CHECK(segs[0].y1 == doctest::Approx(54));
    CHECK(segs[0].x2 == doctest::Approx(40));
    CHECK(segs[0].y2 == doctest::Approx(34));
  }
  SUBCASE("quarter turn moves image content accordingly") {
    ImageRGB img = ImageRGB::zeros(64, 64);
    img.ch[0](5, 10) = 1.0;  // point (10.5, 5.5)
    std::vector<LineSegment> segs;
    Rng rng(5);
    zoom_rotate_flip(img, segs, 1.0, 1.5707963267948966, false, false, rng);
    // (10.5, 5.5) -> (5.5, 53.5): pixel (row 53, col 5).
    CHECK(img.ch[0](53, 5) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("horizontal flip is an involution") {
    SampleRecord rec = render_scene(p, 64, 12);
    const ImageRGB before = rec.image;
    const auto segs = rec.segments;
    Rng rng(6);
    zoom_rotate_flip(rec.image, rec.segments, 1.0, 0.0, true, false, rng);
    CHECK(max_abs_diff(rec.image, before) > 0.0);
    zoom_rotate_flip(rec.image, rec.segments, 1.0, 0.0, true, false, rng);
    CHECK(max_abs_diff(rec.image, before) < 1e-12);
    REQUIRE(rec.segments.size() == segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
      CHECK(rec.segments[i].x1 == doctest::Approx(segs[i].x1).epsilon(1e-12));
      CHECK(rec.segments[i].y1 == doctest::Approx(segs[i].y1).epsilon(1e-12));
    }
  }
}

TEST_CASE("offline set expansion") {
  SceneParams p = easy_scene("procedural");
  const SampleRecord rec = render_scene(p, 64, 13);
  const auto pool = BackgroundPool::open("procedural");
  AugmentConfig cfg;

  SUBCASE("five crops, flips, five backgrounds give fifty outputs") {
    const auto out = make_offline_set({rec}, 5, 5, true, pool, cfg);
    CHECK(out.size() == 50);
    std::set<std::uint64_t> seeds;
    for (const auto& r : out) seeds.insert(r.seed);
    CHECK(seeds.size() == out.size());  // distinct seeds
    // Reproducible content.
    const auto again = make_offline_set({rec}, 5, 5, true, pool, cfg);
    CHECK(max_abs_diff(out[17].image, again[17].image) == 0.0);
  }
  SUBCASE("identity crop recomposites geometry-preserving") {
    const auto out = make_offline_set({rec}, 1, 1, false, pool, cfg);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].segments.size() == rec.segments.size());
    for (std::size_t i = 0; i < rec.segments.size(); ++i) {
      CHECK(out[0].segments[i].x1 == rec.segments[i].x1);
      CHECK(out[0].segments[i].y2 == rec.segments[i].y2);
    }
    // Cable pixels survive the background swap.
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        if (rec.stroke_mask(r, c) == 1.0) {
          CHECK(out[0].image.ch[0](r, c) ==
                doctest::Approx(rec.image.ch[0](r, c)).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("on-the-fly augmentation") {
  SceneParams p = easy_scene("procedural");
  AugmentConfig cfg;

  SUBCASE("p_apply 0 is the identity") {
    SampleRecord rec = render_scene(p, 64, 14);
    const ImageRGB before = rec.image;
    cfg.p_apply = 0.0;
    Rng rng(1);
    const AppliedOps ops = on_the_fly_augment(rec, cfg, rng);
    CHECK(!ops.noise);
    CHECK(!ops.blur);
    CHECK(!ops.color);
    CHECK(!ops.elastic);
    CHECK(max_abs_diff(rec.image, before) == 0.0);
  }
  SUBCASE("p_apply 1 applies all four families") {
    SampleRecord rec = render_scene(p, 64, 15);
    cfg.p_apply = 1.0;
    Rng rng(2);
    const AppliedOps ops = on_the_fly_augment(rec, cfg, rng);
    CHECK(ops.noise);
    CHECK(ops.blur);
    CHECK(ops.color);
    CHECK(ops.elastic);
  }
  SUBCASE("application frequency matches the configured probability") {
    cfg.p_apply = 0.25;
    SampleRecord rec = render_scene(p, 32, 16);
    int counts[4] = {0, 0, 0, 0};
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
      SampleRecord copy = rec;
      Rng rng(fold_seed(99, std::uint64_t(i)));
      const AppliedOps ops = on_the_fly_augment(copy, cfg, rng);
      counts[0] += ops.noise;
      counts[1] += ops.blur;
      counts[2] += ops.color;
      counts[3] += ops.elastic;
    }
    for (int k = 0; k < 4; ++k) {
      const double freq = double(counts[k]) / trials;
      CHECK(freq >= 0.22);
      CHECK(freq <= 0.28);
    }
  }
}

TEST_CASE("manifest round trip") {
  const fs::path dir = temp_dir("manifest");
  std::vector<ManifestEntry> entries(2);
  entries[0].image_path = "images/img_000000.png";
  entries[0].width = 64;
  entries[0].height = 64;
  entries[0].seed = 42;
  entries[0].segments = {{1.5, 2.25, 30.0, 40.0}, {0, 0, 64, 64}};
  entries[1].image_path = "images/img_000001.png";
  entries[1].width = 64;
  entries[1].height = 64;
  entries[1].seed = 43;

  const fs::path path = dir / "manifest.jsonl";
  write_manifest(path, entries);
  const auto back = read_manifest(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].image_path == entries[0].image_path);
  CHECK(back[0].segments.size() == 2);
  CHECK(back[0].segments[0][1] == 2.25);
  CHECK(back[1].seed == 43);

  // Byte-identical on rewrite.
  const fs::path path2 = dir / "manifest2.jsonl";
  write_manifest(path2, entries);
  std::ifstream a(path), b(path2);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());

  CHECK_THROWS_AS(read_manifest(dir / "missing.jsonl"), IoError);
}

TEST_CASE("background pool") {
  CHECK_THROWS_AS(BackgroundPool::open(""), ConfigError);
  CHECK_THROWS_AS(BackgroundPool::open("/nonexistent/dir"), ConfigError);
  const fs::path empty = temp_dir("empty_bg");
  CHECK_THROWS_AS(BackgroundPool::open(empty.string()), ConfigError);

  const auto pool = BackgroundPool::open("procedural");
  Rng rng(1);
  const ImageRGB bg = pool.sample(64, 64, rng);
  CHECK(bg.height() == 64);
  CHECK(bg.ch[0].maxCoeff() <= 1.0);
  CHECK(bg.ch[0].minCoeff() >= 0.0);

  SceneParams p = easy_scene("procedural");
  p.background_source = "";
  CHECK_THROWS_AS(render_scene(p, 64, 1), ConfigError);
}
