#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "uniprompt/errors.hpp"
#include "uniprompt/strings.hpp"

namespace uniprompt {

// Flat key=value configuration text: one pair per line, '#' comments,
// duplicate keys rejected.
inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + " line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + " line " + std::to_string(line_no) + ": empty key");
    if (kv.count(key)) {
      throw ConfigError(path + " line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

// Typed reader over a key/value map. Every key must be consumed; finish()
// rejects leftovers so typos surface immediately.
class KvReader {
 public:
  explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    return it->second;
  }

  int get_int(const std::string& key, int fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    try {
      std::size_t pos = 0;
      const int v = std::stoi(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + it->second + "'");
    }
  }

  double get_double(const std::string& key, double fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    const std::string v = to_lower(it->second);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + it->second + "'");
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + it->second + "'");
    }
  }

  std::vector<std::string> get_string_list(const std::string& key,
                                           std::vector<std::string> fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    std::vector<std::string> out;
    for (const std::string& part : split(it->second, ',')) {
      const std::string p = trim(part);
      if (!p.empty()) out.push_back(p);
    }
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
  }

  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<int> out;
    for (const std::string& part : get_string_list(key, {})) {
      try {
        out.push_back(std::stoi(part));
      } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected integers, got '" + part + "'");
      }
    }
    return out;
  }

  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          std::vector<std::uint64_t> fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<std::uint64_t> out;
    for (const std::string& part : get_string_list(key, {})) {
      try {
        out.push_back(std::stoull(part));
      } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected unsigned integers, got '" + part + "'");
      }
    }
    return out;
  }

  void finish() const {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : kv_) {
      if (!used_.count(key)) unknown.push_back(key);
    }
    if (!unknown.empty()) {
      throw ConfigError("unknown config keys: " + join(unknown, ", "));
    }
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

}  // namespace uniprompt
