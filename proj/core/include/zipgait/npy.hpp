#pragma once

#include <string>
#include <vector>

#include "zipgait/tensor.hpp"

namespace zipgait {

// Binary array container: NumPy .npy v1.0, little-endian float32 ("<f4").
// Shape and dtype live in the header, payload is raw row-major data.
void save_npy(const std::string& path, const Tensor<float>& t);
Tensor<float> load_npy(const std::string& path);

// In-memory variants (used by the checkpoint container).
std::vector<unsigned char> npy_bytes(const Tensor<float>& t);
Tensor<float> npy_from_bytes(const unsigned char* p, size_t n);

}  // namespace zipgait
