#pragma once

#include "pipo/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pipo::config {

/// Flat key-value text with [section] headers. Keys are addressed as
/// "section.key"; '#' and ';' start comments.
class IniDocument {
 public:
  static IniDocument parse(const std::string& text, const std::string& origin = "<config>");
  static IniDocument load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value);
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Throws ConfigError naming the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  /// Canonical rendering: sections and keys sorted.
  std::string render() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& key, const std::string& text);
long long parse_int(const std::string& key, const std::string& text);
bool parse_bool(const std::string& key, const std::string& text);
std::vector<double> parse_double_list(const std::string& key, const std::string& text);

}  // namespace pipo::config
