#pragma once

#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eesng {

// Flat `key = value` text with optional `[section]` headers. `#` starts a
// comment. Errors carry the origin and line number (ErrorCode::kConfig).
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text,
                              std::string origin = "<config>");
  static KeyValueConfig load(const std::string& path);

  // Sections in order of first appearance; "" is the top level.
  const std::vector<std::string>& sections() const { return sections_; }
  bool has_section(const std::string& section) const;
  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section,
                         const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  long long get_int(const std::string& section, const std::string& key) const;
  long long get_int(const std::string& section, const std::string& key,
                    long long fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  std::vector<int> get_int_list(const std::string& section,
                                const std::string& key) const;

  // Rejects keys of `section` outside `known`.
  void require_known(const std::string& section,
                     std::initializer_list<std::string_view> known) const;

  const std::string& origin() const { return origin_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  const Entry* find(const std::string& section, const std::string& key) const;
  const Entry& require(const std::string& section,
                       const std::string& key) const;
  [[noreturn]] void value_error(const std::string& section,
                                const std::string& key, const Entry& entry,
                                const std::string& expected) const;

  std::string origin_;
  std::vector<std::string> sections_;
  std::map<std::string, std::map<std::string, Entry>> entries_;
};

std::vector<int> parse_int_list(std::string_view text);

}  // namespace eesng
