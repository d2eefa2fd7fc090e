#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "qctrl/config.hpp"

namespace qctrl {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(origin + ":" + std::to_string(n) + ": expected key = value");
    const auto key = trim(std::string_view(body).substr(0, eq));
    const auto value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw Error(origin + ":" + std::to_string(n) + ": empty key");
    if (kv.entries_.count(key)) {
      throw Error(origin + ":" + std::to_string(n) + ": duplicate key '" + key + "' (first on line " +
                  std::to_string(kv.entries_[key].line) + ")");
    }
    kv.entries_[key] = {value, n};
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return parse(s.str(), path);
}

void KeyValues::set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

std::string KeyValues::where(const std::string& key) const {
  const auto& e = entries_.at(key);
  return e.line > 0 ? origin_ + ":" + std::to_string(e.line) + ": " : "override: ";
}

std::optional<std::string> KeyValues::str(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  it->second.used = true;
  return it->second.value;
}

std::optional<double> KeyValues::num(const std::string& key) const {
  auto s = str(key);
  if (!s) return std::nullopt;
  double v = 0;
  const auto* end = s->data() + s->size();
  auto [p, ec] = std::from_chars(s->data(), end, v);
  if (ec != std::errc() || p != end) throw Error(where(key) + key + ": '" + *s + "' is not a number");
  return v;
}

std::optional<std::int64_t> KeyValues::integer(const std::string& key) const {
  auto s = str(key);
  if (!s) return std::nullopt;
  std::int64_t v = 0;
  const auto* end = s->data() + s->size();
  auto [p, ec] = std::from_chars(s->data(), end, v);
  if (ec != std::errc() || p != end) throw Error(where(key) + key + ": '" + *s + "' is not an integer");
  return v;
}

std::optional<bool> KeyValues::flag(const std::string& key) const {
  auto s = str(key);
  if (!s) return std::nullopt;
  std::string v = *s;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw Error(where(key) + key + ": '" + *s + "' is not a boolean");
}

std::optional<std::vector<double>> KeyValues::list(const std::string& key) const {
  auto s = str(key);
  if (!s) return std::nullopt;
  std::string t = *s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    double v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) {
      throw Error(where(key) + key + ": '" + tok + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> KeyValues::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, e] : entries_) {
    if (!e.used) out.push_back(k);
  }
  return out;
}

}  // namespace qctrl
