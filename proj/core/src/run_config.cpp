#include "encore/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "encore/common.hpp"

namespace encore {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::parse_string(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      check<UsageError>(t.back() == ']', "config line ", lineno,
                        ": malformed section '", t, "'");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    size_t eq = t.find('=');
    check<UsageError>(eq != std::string::npos, "config line ", lineno,
                      ": expected key=value, got '", t, "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    check<UsageError>(!key.empty(), "config line ", lineno, ": empty key");
    if (!section.empty()) key = section + "." + key;
    cfg.set(key, value);
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check<DataError>(in.good(), "config: cannot read ", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = idx_.find(key);
  if (it != idx_.end()) {
    kv_[it->second].second = value;
  } else {
    idx_[key] = kv_.size();
    kv_.emplace_back(key, value);
  }
}

bool RunConfig::has(const std::string& key) const {
  return idx_.find(key) != idx_.end();
}

std::string RunConfig::get(const std::string& key,
                           const std::string& fallback) const {
  auto it = idx_.find(key);
  return it == idx_.end() ? fallback : kv_[it->second].second;
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key, "");
  try {
    size_t used = 0;
    int64_t r = std::stoll(v, &used);
    check<UsageError>(used == v.size(), "");
    return r;
  } catch (const std::exception&) {
    fail<UsageError>("config: key '", key, "' expects an integer, got '", v, "'");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key, "");
  try {
    size_t used = 0;
    double r = std::stod(v, &used);
    check<UsageError>(used == v.size(), "");
    return r;
  } catch (const std::exception&) {
    fail<UsageError>("config: key '", key, "' expects a number, got '", v, "'");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string v = get(key, "");
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail<UsageError>("config: key '", key, "' expects a boolean, got '", v, "'");
}

void RunConfig::require_known(const std::vector<std::string>& accepted) const {
  for (const auto& [k, v] : kv_) {
    if (std::find(accepted.begin(), accepted.end(), k) == accepted.end())
      fail<UsageError>("config: unknown key '", k, "'");
  }
}

void RunConfig::snapshot(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  check<DataError>(out.good(), "config: cannot write snapshot ", path);
  for (const auto& [k, v] : kv_) out << k << " = " << v << "\n";
}

std::string content_hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check<DataError>(in.good(), "hash: cannot read ", path);
  uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (n < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace encore
