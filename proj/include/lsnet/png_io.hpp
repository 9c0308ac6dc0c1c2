#pragma once

#include <filesystem>

#include "lsnet/image.hpp"

namespace lsnet {

// 8-bit RGB PNG I/O. Reads promote grayscale/alpha inputs to RGB; writes
// quantize with round-half-up. Failures raise IoError naming the path.
ImageRGB read_png(const std::filesystem::path& path);
void write_png(const ImageRGB& img, const std::filesystem::path& path);

// Single-channel 8-bit grayscale export (values * 255, round half up).
void write_gray_png(const Eigen::ArrayXXd& plane,
                    const std::filesystem::path& path);

}  // namespace lsnet
