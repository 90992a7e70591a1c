#include "warpdetect/harness/keyvalue.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "warpdetect/errors.hpp"

namespace wd::harness {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
}

}  // namespace

void KvDocument::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of(" \t=#") != std::string::npos) {
    throw ConfigError("invalid key '" + key + "'");
  }
  if (value.find('\n') != std::string::npos) throw ConfigError("value for '" + key + "' spans lines");
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KvDocument::set(const std::string& key, double value) { set(key, format_double(value)); }
void KvDocument::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
void KvDocument::set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
void KvDocument::set(const std::string& key, bool value) {
  set(key, std::string(value ? "true" : "false"));
}

void KvDocument::set(const std::string& key, const std::vector<double>& values) {
  std::vector<std::string> parts;
  for (double v : values) parts.push_back(format_double(v));
  set_list(key, parts);
}

void KvDocument::set_list(const std::string& key, const std::vector<std::string>& values) {
  std::string joined;
  for (const auto& v : values) {
    if (v.empty() || v.find_first_of(" \t") != std::string::npos) {
      throw ConfigError("list item for '" + key + "' must be a single token");
    }
    if (!joined.empty()) joined += ' ';
    joined += v;
  }
  set(key, joined);
}

bool KvDocument::has(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

const std::string& KvDocument::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw ConfigError("missing key '" + key + "'");
}

double KvDocument::get_double(const std::string& key) const {
  return parse_double(key, get(key));
}

std::int64_t KvDocument::get_int(const std::string& key) const {
  const auto& text = get(key);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

std::size_t KvDocument::get_size(const std::string& key) const {
  const auto v = get_int(key);
  if (v < 0) throw ConfigError("key '" + key + "' must be nonnegative");
  return static_cast<std::size_t>(v);
}

bool KvDocument::get_bool(const std::string& key) const {
  const auto& text = get(key);
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<double> KvDocument::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : split_ws(get(key))) out.push_back(parse_double(key, tok));
  return out;
}

std::vector<std::string> KvDocument::get_list(const std::string& key) const {
  return split_ws(get(key));
}

void KvDocument::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [k, v] : entries_) {
    if (!known.contains(k)) throw ConfigError("unknown key '" + k + "'");
  }
}

void KvDocument::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

std::string KvDocument::str() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

KvDocument KvDocument::parse(std::istream& in) {
  KvDocument doc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (doc.has(key)) throw ConfigError("duplicate key '" + key + "'");
    doc.set(key, trim(t.substr(eq + 1)));
  }
  return doc;
}

KvDocument KvDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse(in);
}

void KvDocument::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write(out);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace wd::harness
