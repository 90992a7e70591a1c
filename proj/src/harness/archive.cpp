#include "warpdetect/harness/archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "warpdetect/errors.hpp"

namespace wd::harness {

namespace {

constexpr char kMagic[4] = {'W', 'D', 'A', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated archive");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_parameters(const std::filesystem::path& path, const ParameterList& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, *t);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void load_parameters(const std::filesystem::path& path, const ParameterList& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a parameter archive: " + path.string());
  }
  std::map<std::string, Tensor> entries;
  const std::uint32_t count = get_u32(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(get_u32(in), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      throw IoError("truncated archive");
    }
    entries.emplace(name, read_tensor(in));
  }
  for (const auto& [name, t] : params) {
    const auto it = entries.find(name);
    if (it == entries.end()) throw IoError("archive has no entry '" + name + "'");
    if (it->second.shape() != t->shape()) {
      throw IoError("archive entry '" + name + "' has shape " + shape_string(it->second.shape()) +
                    ", expected " + shape_string(t->shape()));
    }
    *t = it->second;
  }
}

}  // namespace wd::harness
