#pragma once

#include <filesystem>

#include "rankiqa/tensor.hpp"

namespace rankiqa {

// Reads an 8-bit binary PGM (P5) as a [H, W] tensor in [0, 1]. Binary PPM (P6)
// input is converted to luminance with Rec. 601 weights. Throws FormatError.
Tensor read_pgm(const std::filesystem::path& path);

// Writes a [H, W] tensor as 8-bit P5, clamping to [0, 1] and rounding to the
// nearest level.
void write_pgm(const std::filesystem::path& path, const Tensor& image);

}  // namespace rankiqa
