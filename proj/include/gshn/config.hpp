#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gshn {

// UTF-8 key=value lines, '#' comments, blank lines ignored. Keys are kept
// sorted so serialization and hashing are canonical.
struct Config {
  std::map<std::string, std::string> kv;

  bool has(const std::string& k) const { return kv.count(k) != 0; }

  std::string get(const std::string& k, const std::string& fallback) const {
    auto it = kv.find(k);
    return it == kv.end() ? fallback : it->second;
  }

  double get_double(const std::string& k, double fallback) const {
    auto it = kv.find(k);
    if (it == kv.end()) return fallback;
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size())
      throw std::invalid_argument("config: bad number for " + k + ": " +
                                  it->second);
    return v;
  }

  long long get_int(const std::string& k, long long fallback) const {
    auto it = kv.find(k);
    if (it == kv.end()) return fallback;
    std::size_t pos = 0;
    long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size())
      throw std::invalid_argument("config: bad integer for " + k + ": " +
                                  it->second);
    return v;
  }

  bool get_bool(const std::string& k, bool fallback) const {
    auto it = kv.find(k);
    if (it == kv.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::invalid_argument("config: bad bool for " + k + ": " +
                                it->second);
  }

  void set(const std::string& k, const std::string& v) { kv[k] = v; }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    return os.str();
  }

  // FNV-1a over the canonical serialization.
  std::uint64_t hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : serialize()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }
};

inline Config parse_config_text(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    std::size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("config: expected key=value at line " +
                                  std::to_string(line_no));
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t'))
      key.pop_back();
    std::size_t v0 = val.find_first_not_of(" \t");
    val = v0 == std::string::npos ? "" : val.substr(v0);
    cfg.kv[key] = val;
  }
  return cfg;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_text(os.str());
}

}  // namespace gshn
