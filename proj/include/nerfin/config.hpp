// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Key-value text files: one `key = value` per line, `#` starts a comment,
// blank lines ignored, keys unique.

#include <map>
#include <string>
#include <vector>

namespace nerfin {

class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::string& path);

  std::string dump() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);

  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  long long get(const std::string& key, long long fallback) const;
  int get(const std::string& key, int fallback) const { return static_cast<int>(get(key, static_cast<long long>(fallback))); }
  bool get(const std::string& key, bool fallback) const;
  std::vector<int> get_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Throws if any key is not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string format_index_list(const std::vector<int>& v);

}  // namespace nerfin
