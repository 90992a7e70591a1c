#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace wd::harness {

/// Ordered "key = value" document. Keys are dotted paths; lists are
/// space-separated values. Blank lines and lines starting with '#' are
/// ignored when parsing.
class KvDocument {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, std::size_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, bool value);
  void set(const std::string& key, const std::vector<double>& values);
  void set_list(const std::string& key, const std::vector<std::string>& values);

  bool has(const std::string& key) const;
  /// Throws ConfigError when missing or malformed.
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  /// Throws ConfigError naming the first key outside `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  void write(std::ostream& out) const;
  std::string str() const;
  /// Throws ConfigError on malformed lines or duplicate keys.
  static KvDocument parse(std::istream& in);
  static KvDocument load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// %.17g
std::string format_double(double v);

}  // namespace wd::harness
