#pragma once

#include <filesystem>

#include "warpdetect/tensor.hpp"

namespace wd::harness {

/// 8-bit PNG from [3,H,W] (RGB) or [1,H,W] (gray); values clamped to [0,1]
/// and rounded to the nearest level.
void write_png(const std::filesystem::path& path, const Tensor& image);
/// Always returns [3,H,W] in [0,1]; gray is replicated, alpha dropped.
Tensor read_png(const std::filesystem::path& path);

}  // namespace wd::harness
