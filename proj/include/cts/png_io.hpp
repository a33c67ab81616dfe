#pragma once

#include "cts/preprocessing.hpp"

#include <string>

namespace cts {

// Grayscale PNG I/O. Readers return intensities on the [0, 255] float scale
// regardless of source bit depth; color inputs are converted to luminance.
ImageGrid read_png_gray(const std::string& path);

// expects values in [0, 255]; rounds to the nearest integer level
void write_png_gray8(const std::string& path, const ImageGrid& img);
void write_png_gray16(const std::string& path, const ImageGrid& img);

// r/g/b in [0, 255]
void write_png_rgb8(const std::string& path, const ImageGrid& r, const ImageGrid& g, const ImageGrid& b);

} // namespace cts
