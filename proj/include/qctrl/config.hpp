#pragma once

// Flat `key = value` text files. '#' starts a comment; keys may repeat only
// if the caller allows it (last one wins otherwise is an error).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qctrl/types.hpp"

namespace qctrl {

class KeyValues {
 public:
  struct Entry {
    std::string value;
    int line = 0;
    mutable bool used = false;
  };

  static KeyValues parse(std::string_view text, const std::string& origin = "<text>");
  static KeyValues load(const std::string& path);

  /// Applies "key=value" overrides (command-line style).
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::optional<std::string> str(const std::string& key) const;
  std::optional<double> num(const std::string& key) const;
  std::optional<std::int64_t> integer(const std::string& key) const;
  std::optional<bool> flag(const std::string& key) const;
  /// Comma or space separated numbers.
  std::optional<std::vector<double>> list(const std::string& key) const;

  std::string str_or(const std::string& key, const std::string& d) const { return str(key).value_or(d); }
  double num_or(const std::string& key, double d) const { return num(key).value_or(d); }
  std::int64_t int_or(const std::string& key, std::int64_t d) const { return integer(key).value_or(d); }
  bool flag_or(const std::string& key, bool d) const { return flag(key).value_or(d); }

  /// Keys never read through a getter; callers use this to reject typos.
  std::vector<std::string> unused() const;
  const std::map<std::string, Entry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

 private:
  std::string where(const std::string& key) const;

  std::string origin_;
  std::map<std::string, Entry> entries_;
};

}  // namespace qctrl
