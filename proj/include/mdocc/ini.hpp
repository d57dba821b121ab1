// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mdocc {

/// Sectioned key = value text, order preserved. Parsing goes through
/// boost::property_tree's INI reader; errors surface as ConfigError.
struct IniSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws ConfigError
  void set(const std::string& key, std::string value);
};

struct IniDoc {
  std::vector<IniSection> sections;

  const IniSection* find(const std::string& name) const;
  const IniSection& get(const std::string& name) const;  // throws ConfigError
  IniSection& add(const std::string& name);
};

IniDoc parse_ini(const std::string& text);
std::string format_ini(const IniDoc& doc);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);  // throws ConfigError
std::uint64_t parse_u64(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
std::string join(const std::vector<std::string>& parts, char sep);

}  // namespace mdocc
