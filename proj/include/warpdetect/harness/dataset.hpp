#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "warpdetect/harness/scene.hpp"

namespace wd::harness {

/// One line per box: "class_id cx cy w h".
void write_labels(std::ostream& out, std::span<const GroundTruthBox> labels);
std::vector<GroundTruthBox> read_labels(std::istream& in);

/// dir/images/NNNNN.png and dir/labels/NNNNN.txt.
void save_split(const std::filesystem::path& dir, const Dataset& data);
/// Loads every image with a matching label file, in file-name order. Object
/// shapes are not stored, so Scene::objects is empty.
Dataset load_split(const std::filesystem::path& dir);

}  // namespace wd::harness
