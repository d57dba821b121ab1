// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdocc/ini.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <sstream>

#include "mdocc/error.hpp"

namespace mdocc {

const std::string* IniSection::find(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return &v;
  return nullptr;
}

const std::string& IniSection::get(const std::string& key) const {
  if (const auto* v = find(key)) return *v;
  throw Error(ErrorCode::ConfigError, "missing key [" + name + "] " + key);
}

void IniSection::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries)
    if (k == key) {
      v = std::move(value);
      return;
    }
  entries.emplace_back(key, std::move(value));
}

const IniSection* IniDoc::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

const IniSection& IniDoc::get(const std::string& name) const {
  if (const auto* s = find(name)) return *s;
  throw Error(ErrorCode::ConfigError, "missing section [" + name + "]");
}

IniSection& IniDoc::add(const std::string& name) {
  for (auto& s : sections)
    if (s.name == name) return s;
  sections.push_back({name, {}});
  return sections.back();
}

IniDoc parse_ini(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigError, e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  IniDoc doc;
  for (const auto& [name, sec] : tree) {
    if (sec.empty() && !sec.data().empty())
      throw Error(ErrorCode::ConfigError, "key '" + name + "' outside any section");
    IniSection s{name, {}};
    for (const auto& [k, v] : sec) s.entries.emplace_back(k, v.data());
    doc.sections.push_back(std::move(s));
  }
  return doc;
}

std::string format_ini(const IniDoc& doc) {
  std::string out;
  for (std::size_t i = 0; i < doc.sections.size(); ++i) {
    if (i) out += '\n';
    out += '[' + doc.sections[i].name + "]\n";
    for (const auto& [k, v] : doc.sections[i].entries) out += k + " = " + v + '\n';
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::ConfigError, "not a number: '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::ConfigError, "not an unsigned integer: '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace mdocc
