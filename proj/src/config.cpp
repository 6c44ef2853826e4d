#include "eesng/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "eesng/error.hpp"

namespace eesng {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string qualified(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

}  // namespace

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = trim(text.substr(pos, comma - pos));
    int value = 0;
    const auto [ptr, ec] =
        std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      fail(ErrorCode::kConfig,
           "expected comma-separated integers, got '" + std::string(text) +
               "'");
    }
    out.push_back(value);
    pos = comma + 1;
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text,
                                     std::string origin) {
  KeyValueConfig cfg;
  cfg.origin_ = std::move(origin);
  cfg.sections_.push_back("");
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = cfg.origin_ + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        fail(ErrorCode::kConfig, where + ": malformed section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (std::find(cfg.sections_.begin(), cfg.sections_.end(), section) ==
          cfg.sections_.end()) {
        cfg.sections_.push_back(section);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorCode::kConfig, where + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) fail(ErrorCode::kConfig, where + ": empty key");
    auto& bucket = cfg.entries_[section];
    if (bucket.count(key) != 0) {
      fail(ErrorCode::kConfig,
           where + ": duplicate key '" + qualified(section, key) + "'");
    }
    bucket[key] = Entry{std::string(trim(line.substr(eq + 1))), line_no};
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kConfig, "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

bool KeyValueConfig::has_section(const std::string& section) const {
  return std::find(sections_.begin(), sections_.end(), section) !=
         sections_.end();
}

const KeyValueConfig::Entry* KeyValueConfig::find(
    const std::string& section, const std::string& key) const {
  const auto s = entries_.find(section);
  if (s == entries_.end()) return nullptr;
  const auto e = s->second.find(key);
  return e == s->second.end() ? nullptr : &e->second;
}

bool KeyValueConfig::has(const std::string& section,
                         const std::string& key) const {
  return find(section, key) != nullptr;
}

const KeyValueConfig::Entry& KeyValueConfig::require(
    const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (e == nullptr) {
    fail(ErrorCode::kConfig, origin_ + ": missing required field '" +
                                 qualified(section, key) + "'");
  }
  return *e;
}

void KeyValueConfig::value_error(const std::string& section,
                                 const std::string& key, const Entry& entry,
                                 const std::string& expected) const {
  fail(ErrorCode::kConfig, origin_ + ":" + std::to_string(entry.line) +
                               ": field '" + qualified(section, key) +
                               "' expects " + expected + ", got '" +
                               entry.value + "'");
}

std::string KeyValueConfig::get_string(const std::string& section,
                                       const std::string& key) const {
  return require(section, key).value;
}

std::string KeyValueConfig::get_string(const std::string& section,
                                       const std::string& key,
                                       const std::string& fallback) const {
  const Entry* e = find(section, key);
  return e ? e->value : fallback;
}

long long KeyValueConfig::get_int(const std::string& section,
                                  const std::string& key) const {
  const Entry& e = require(section, key);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(
      e.value.data(), e.value.data() + e.value.size(), value);
  if (e.value.empty() || ec != std::errc() ||
      ptr != e.value.data() + e.value.size()) {
    value_error(section, key, e, "an integer");
  }
  return value;
}

long long KeyValueConfig::get_int(const std::string& section,
                                  const std::string& key,
                                  long long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

double KeyValueConfig::get_double(const std::string& section,
                                  const std::string& key) const {
  const Entry& e = require(section, key);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(
      e.value.data(), e.value.data() + e.value.size(), value);
  if (e.value.empty() || ec != std::errc() ||
      ptr != e.value.data() + e.value.size()) {
    value_error(section, key, e, "a number");
  }
  return value;
}

double KeyValueConfig::get_double(const std::string& section,
                                  const std::string& key,
                                  double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& section,
                              const std::string& key, bool fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  value_error(section, key, *e, "a boolean");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& section,
                                              const std::string& key) const {
  const Entry& e = require(section, key);
  try {
    return parse_int_list(e.value);
  } catch (const Error&) {
    value_error(section, key, e, "comma-separated integers");
  }
}

void KeyValueConfig::require_known(
    const std::string& section,
    std::initializer_list<std::string_view> known) const {
  const auto s = entries_.find(section);
  if (s == entries_.end()) return;
  for (const auto& [key, entry] : s->second) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorCode::kConfig, origin_ + ":" + std::to_string(entry.line) +
                                   ": unknown field '" +
                                   qualified(section, key) + "'");
    }
  }
}

}  // namespace eesng
