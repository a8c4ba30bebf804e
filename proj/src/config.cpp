#include "crm/config.hpp"

#include "crm/csv.hpp"
#include "crm/error.hpp"
#include "crm/rng.hpp"

namespace crm {

Config Config::parse(std::string_view text) {
  Config c;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = csv::trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::parse_error, "config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(csv::trim(line.substr(0, eq)));
    const std::string value(csv::trim(line.substr(eq + 1)));
    require(!key.empty(), ErrorKind::parse_error, "config line " + std::to_string(line_no) + ": empty key");
    require(key.find_first_of(" \t") == std::string::npos, ErrorKind::parse_error,
            "config line " + std::to_string(line_no) + ": key contains whitespace");
    c.values_[key] = value;
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) { return parse(csv::read_text(path)); }

std::string Config::serialize() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + '=' + v + '\n';
  return s;
}

std::uint64_t Config::hash() const { return fnv1a(serialize()); }

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : csv::to_double(it->second);
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : csv::to_int(it->second);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  fail(ErrorKind::parse_error, "config key " + key + ": expected a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key, std::vector<std::string> fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> out;
  for (const auto& f : csv::split(it->second, ',')) {
    const auto v = csv::trim(f);
    if (!v.empty()) out.emplace_back(v);
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key, std::vector<double> fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : get_list(key, {})) out.push_back(csv::to_double(s));
  return out;
}

std::vector<long long> Config::get_ints(const std::string& key, std::vector<long long> fallback) const {
  if (!has(key)) return fallback;
  std::vector<long long> out;
  for (const auto& s : get_list(key, {})) out.push_back(csv::to_int(s));
  return out;
}

}  // namespace crm
