#include "ebsched/kv_config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ebsched/errors.hpp"

namespace ebsched {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_double(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(where + ": expected a number, got '" + text + "'");
}

}  // namespace

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

KeyValueFile KeyValueFile::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path.string());
}

KeyValueFile KeyValueFile::parse_string(const std::string& text, const std::string& source) {
  KeyValueFile kv;
  kv.source_ = source;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (kv.values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    kv.values_[key] = {trim(line.substr(eq + 1)), no};
  }
  return kv;
}

std::optional<std::string> KeyValueFile::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  used_.insert(key);
  return it->second.value;
}

std::string KeyValueFile::where(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return source_;
  return source_ + ":" + std::to_string(it->second.line);
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

std::string KeyValueFile::require_string(const std::string& key) const {
  auto v = raw(key);
  if (!v) throw ConfigError(source_ + ": missing required key '" + key + "'");
  return *v;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  const auto v = raw(key);
  return v ? to_double(*v, where(key) + " (" + key + ")") : fallback;
}

double KeyValueFile::require_double(const std::string& key) const {
  return to_double(require_string(key), where(key) + " (" + key + ")");
}

int KeyValueFile::get_int(const std::string& key, int fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  const double d = to_double(*v, where(key) + " (" + key + ")");
  if (d != static_cast<double>(static_cast<long long>(d))) {
    throw ConfigError(where(key) + ": '" + key + "' must be an integer");
  }
  return static_cast<int>(d);
}

int KeyValueFile::require_int(const std::string& key) const {
  require_string(key);
  return get_int(key, 0);
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError(where(key) + ": '" + key + "' must be true or false");
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key,
                                              const std::vector<double>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) out.push_back(to_double(item, where(key) + " (" + key + ")"));
  return out;
}

std::vector<std::string> KeyValueFile::get_list(const std::string& key,
                                                const std::vector<std::string>& fallback) const {
  const auto v = raw(key);
  return v ? split_list(*v) : fallback;
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  auto& e = values_[key];
  e.value = value;
}

void KeyValueFile::reject_unused() const {
  for (const auto& [key, e] : values_) {
    if (!used_.count(key)) {
      throw ConfigError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + key + "'");
    }
  }
}

std::vector<std::pair<std::string, std::string>> KeyValueFile::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, e] : values_) out.emplace_back(key, e.value);
  return out;
}

}  // namespace ebsched
