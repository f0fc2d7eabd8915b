#include "pipo/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace pipo::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

IniDocument IniDocument::parse(const std::string& text, const std::string& origin) {
  IniDocument doc;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": key '" + key + "' outside a section");
    const std::string full = section + "." + key;
    if (doc.has(full)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + full + "'");
    doc.values_[full] = trim(line.substr(eq + 1));
  }
  return doc;
}

IniDocument IniDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::optional<std::string> IniDocument::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void IniDocument::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

void IniDocument::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [k, v] : values_)
    if (!known.count(k)) throw ConfigError("unknown configuration key '" + k + "'");
}

std::string IniDocument::render() const {
  std::ostringstream out;
  std::string current;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out << '\n';
      out << '[' << section << "]\n";
      current = section;
    }
    out << key.substr(dot + 1) << " = " << value << '\n';
  }
  return out.str();
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("'" + key + "': expected a number, got '" + text + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("'" + key + "': expected an integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("'" + key + "': expected a boolean, got '" + text + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError("'" + key + "': expected a comma-separated list");
  return out;
}

}  // namespace pipo::config
