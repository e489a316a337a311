#pragma once

#include <string>

#include "camflow/tensor.hpp"

namespace camflow::png {

// Writes an 8-bit RGB PNG. Accepts c x h x w (c = 1 or 3) with values in
// [0,1]; out-of-range values are clamped.
void write_png(const std::string& path, const Tensor& image);

// Tiles the frames of an f x c x h x w video into one row and writes it.
void write_strip(const std::string& path, const Tensor& video);

}  // namespace camflow::png
