#include "lsnet/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "lsnet/errors.hpp"

namespace lsnet {

namespace {

std::uint8_t quantize(double v) {
  const double s = std::floor(v * 255.0 + 0.5);
  return std::uint8_t(std::clamp(s, 0.0, 255.0));
}

}  // namespace

ImageRGB read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("png: cannot read " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    throw IoError("png: cannot decode " + path.string() + ": " + png.message);
  }
  const int h = int(png.height);
  const int w = int(png.width);
  ImageRGB img = ImageRGB::zeros(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::uint8_t* px = &buf[(std::size_t(r) * w + c) * 3];
      img.ch[0](r, c) = px[0] / 255.0;
      img.ch[1](r, c) = px[1] / 255.0;
      img.ch[2](r, c) = px[2] / 255.0;
    }
  }
  return img;
}

void write_png(const ImageRGB& img, const std::filesystem::path& path) {
  const int h = img.height();
  const int w = img.width();
  std::vector<std::uint8_t> buf(std::size_t(h) * w * 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      std::uint8_t* px = &buf[(std::size_t(r) * w + c) * 3];
      px[0] = quantize(img.ch[0](r, c));
      px[1] = quantize(img.ch[1](r, c));
      px[2] = quantize(img.ch[2](r, c));
    }
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(w);
  png.height = png_uint_32(h);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("png: cannot write " + path.string() + ": " + png.message);
  }
}

void write_gray_png(const Eigen::ArrayXXd& plane,
                    const std::filesystem::path& path) {
  const int h = int(plane.rows());
  const int w = int(plane.cols());
  std::vector<std::uint8_t> buf(std::size_t(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) buf[std::size_t(r) * w + c] = quantize(plane(r, c));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(w);
  png.height = png_uint_32(h);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("png: cannot write " + path.string() + ": " + png.message);
  }
}

}  // namespace lsnet
