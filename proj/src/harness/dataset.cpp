#include "warpdetect/harness/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "warpdetect/errors.hpp"
#include "warpdetect/harness/image_io.hpp"
#include "warpdetect/harness/keyvalue.hpp"

namespace wd::harness {

void write_labels(std::ostream& out, std::span<const GroundTruthBox> labels) {
  for (const auto& g : labels) {
    out << g.class_id << ' ' << format_double(g.box.cx) << ' ' << format_double(g.box.cy) << ' '
        << format_double(g.box.w) << ' ' << format_double(g.box.h) << '\n';
  }
}

std::vector<GroundTruthBox> read_labels(std::istream& in) {
  std::vector<GroundTruthBox> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    GroundTruthBox g;
    std::string extra;
    if (!(ls >> g.class_id >> g.box.cx >> g.box.cy >> g.box.w >> g.box.h) || (ls >> extra)) {
      throw IoError("label line " + std::to_string(lineno) + ": expected 'class_id cx cy w h'");
    }
    out.push_back(g);
  }
  return out;
}

namespace {

std::string stem_name(std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", k);
  return buf;
}

}  // namespace

void save_split(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  for (std::size_t k = 0; k < data.size(); ++k) {
    write_png(dir / "images" / (stem_name(k) + ".png"), data[k].image);
    std::ofstream out(dir / "labels" / (stem_name(k) + ".txt"));
    if (!out) throw IoError("cannot write labels in " + dir.string());
    write_labels(out, data[k].labels);
  }
}

Dataset load_split(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir / "images")) {
    throw IoError("no images directory under " + dir.string());
  }
  std::vector<std::filesystem::path> images;
  for (const auto& e : std::filesystem::directory_iterator(dir / "images")) {
    if (e.path().extension() == ".png") images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());
  Dataset out;
  for (const auto& img : images) {
    const auto label_path = dir / "labels" / (img.stem().string() + ".txt");
    std::ifstream in(label_path);
    if (!in) continue;
    Scene s;
    s.image = read_png(img);
    s.labels = read_labels(in);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError("no labeled images under " + dir.string());
  return out;
}

}  // namespace wd::harness
