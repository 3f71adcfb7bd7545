#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace ebsched {

// `key = value` lines, `#` comments. Every key must be consumed by a getter
// before reject_unused(), so typos surface as errors naming the line.
class KeyValueFile {
 public:
  static KeyValueFile parse_file(const std::filesystem::path& path);
  static KeyValueFile parse_string(const std::string& text, const std::string& source = "<string>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  double require_double(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  int require_int(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  // "file:line" of a key, or the source name when absent.
  std::string where(const std::string& key) const;
  const std::string& source() const { return source_; }

  void set(const std::string& key, const std::string& value);
  void reject_unused() const;
  std::vector<std::pair<std::string, std::string>> entries() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::string source_;
  std::map<std::string, Entry> values_;
  mutable std::set<std::string> used_;
};

std::vector<std::string> split_list(const std::string& text, char sep = ',');

}  // namespace ebsched
