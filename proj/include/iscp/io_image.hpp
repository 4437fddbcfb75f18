#pragma once

#include "iscp/tensor.hpp"

#include <string>

namespace iscp {

// 8-bit PNG writer (zlib-deflated). 1-channel tensors become grayscale,
// 3-channel become RGB; values are clamped to [0,1] and quantized.
void write_png(const std::string& path, const Tensor& image);

// 0.5-centered signed-perturbation view (for UAP exports).
void write_png_centered(const std::string& path, const Tensor& delta);

// Binary P5 PGM of an H×W {0,1} mask, 0/255 valued.
void write_pgm_mask(const std::string& path, const Tensor& mask);

// Raw tensor container (magic, dims, little-endian doubles); exact
// round-trip for perturbations and patterns.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

} // namespace iscp
