#pragma once

#include <filesystem>

#include "warpdetect/parameters.hpp"

namespace wd::harness {

/// "WDA1", u32 count, then per entry: u32 name length, name bytes, WDT1 tensor.
void save_parameters(const std::filesystem::path& path, const ParameterList& params);
/// Fills every listed tensor from the entry of the same name. Throws IoError
/// on missing names or shape mismatches.
void load_parameters(const std::filesystem::path& path, const ParameterList& params);

}  // namespace wd::harness
