#pragma once

#include <string>

#include "apm/image.hpp"

namespace apm {

// 8-bit RGB PNG; values are round(v * 255) after clamping to [0,1].
void write_png(const Image& img, const std::string& path);

// Decodes any PNG to a [3,H,W] image in [0,1] (grayscale expands, alpha is
// dropped over black per libpng's RGB conversion).
Image read_png(const std::string& path);

}  // namespace apm
