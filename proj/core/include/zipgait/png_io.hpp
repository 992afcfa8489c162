#pragma once

#include <string>

#include "zipgait/tensor.hpp"

namespace zipgait {

// 8-bit grayscale PNG preview of a [h,w] (or [1,h,w]) tensor with values in [0,1].
void save_png_gray(const std::string& path, const Tensor<float>& img);

}  // namespace zipgait
