#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

#include "qctrl/isa.hpp"

namespace qctrl::isa {

std::string_view error_kind_name(AsmErrorKind k) {
  switch (k) {
    case AsmErrorKind::syntax: return "syntax";
    case AsmErrorKind::unknown_opcode: return "unknown-opcode";
    case AsmErrorKind::range: return "range";
    case AsmErrorKind::unresolved_label: return "unresolved-label";
  }
  return "?";
}

std::string format_error(const AsmError& e) {
  return "line " + std::to_string(e.line) + ": " + std::string(error_kind_name(e.kind)) + ": " + e.message;
}

namespace {

constexpr std::string_view kMathNames[] = {"add", "sub"};
constexpr std::string_view kBitNames[] = {"and", "or", "xor", "not", "shl", "shr"};
constexpr std::string_view kCondNames[] = {"always", "eq", "ne", "gt", "lt"};

struct LineError {
  AsmErrorKind kind;
  std::string message;
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool is_ident(std::string_view s) {
  if (s.empty()) return false;
  auto head = static_cast<unsigned char>(s[0]);
  if (!(std::isalpha(head) || s[0] == '_' || s[0] == '.')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '.'; });
}

// Integer literal: decimal, 0x hex, 0b binary, or base^exp; optional leading '-'.
std::optional<__int128> parse_int(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  auto plain = [](std::string_view t) -> std::optional<__int128> {
    int base = 10;
    if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
      base = 16;
      t.remove_prefix(2);
    } else if (t.size() > 2 && t[0] == '0' && (t[1] == 'b' || t[1] == 'B')) {
      base = 2;
      t.remove_prefix(2);
    }
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v, base);
    if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return static_cast<__int128>(v);
  };
  __int128 value;
  if (auto caret = s.find('^'); caret != std::string_view::npos) {
    auto b = plain(s.substr(0, caret));
    auto e = plain(s.substr(caret + 1));
    if (!b || !e || *e > 64) return std::nullopt;
    value = 1;
    for (__int128 k = 0; k < *e; ++k) {
      value *= *b;
      if (value > (static_cast<__int128>(1) << 80)) return std::nullopt;
    }
  } else {
    auto v = plain(s);
    if (!v) return std::nullopt;
    value = *v;
  }
  return neg ? -value : value;
}

std::optional<int> parse_reg(std::string_view s) {
  if (s.size() < 2 || (s[0] != 'r' && s[0] != 'R')) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <std::size_t N>
std::optional<std::uint8_t> lookup(const std::string_view (&names)[N], std::string_view s) {
  const std::string l = lower(s);
  for (std::size_t k = 0; k < N; ++k) {
    if (names[k] == l) return static_cast<std::uint8_t>(k);
  }
  return std::nullopt;
}

struct PendingTarget {
  std::size_t instr;
  std::string label;
  int line;
};

class LineParser {
 public:
  LineParser(std::vector<std::string> tokens, int line, std::vector<PendingTarget>& pending, std::size_t index)
      : line_(line), pending_(pending), index_(index) {
    for (auto& t : tokens) {
      const auto eq = t.find('=');
      if (eq != std::string::npos && eq > 0) {
        keys_.emplace_back(lower(t.substr(0, eq)), t.substr(eq + 1));
      } else {
        pos_.push_back(std::move(t));
      }
    }
  }

  Instruction parse(std::string_view mnemonic) {
    const std::string m = lower(mnemonic);
    static const std::set<std::string> known = {"nop",  "end",   "regwi",  "math", "bit",   "memr",
                                                "memw", "sync",  "synci",  "wait", "loopnz", "jump",
                                                "condj", "read", "pulse", "set",  "trig"};
    if (!known.count(m)) fail(AsmErrorKind::unknown_opcode, "unknown opcode '" + std::string(mnemonic) + "'");
    Instruction in;
    in.page = static_cast<std::uint8_t>(key_int("p", 0, 0, kNumPages - 1));
    if (m == "pulse" || m == "set" || m == "trig") {
      in.op = m == "trig" ? Opcode::trig : Opcode::pulse;
      in.channel = static_cast<std::uint8_t>(key_int("ch", -1, 0, kNumChannels - 1));
      in.time = static_cast<Cycle>(key_int("t", 0, 0, static_cast<__int128>(kTimeLimit) - 1, "time tag"));
      const int group = in.op == Opcode::pulse ? kPulseGroup : kTrigGroup;
      in.rd = static_cast<std::uint8_t>(key_int("r", -1, 0, kNumRegisters - group, "register group base"));
      expect_positional(0);
      finish_keys();
      return in;
    }
    finish_keys();
    if (m == "nop" || m == "end") {
      in.op = m == "nop" ? Opcode::nop : Opcode::end;
      expect_positional(0);
    } else if (m == "regwi") {
      in.op = Opcode::regwi;
      expect_positional(2);
      in.rd = reg(0);
      in.imm = imm32(1, true);
    } else if (m == "math" || m == "bit") {
      in.op = m == "math" ? Opcode::math : Opcode::bit;
      if (pos_.empty()) fail(AsmErrorKind::syntax, "missing operation");
      const auto fn = in.op == Opcode::math ? lookup(kMathNames, pos_[0]) : lookup(kBitNames, pos_[0]);
      if (!fn) fail(AsmErrorKind::syntax, "unknown operation '" + pos_[0] + "'");
      in.fn = *fn;
      const bool unary = in.op == Opcode::bit && in.fn == static_cast<std::uint8_t>(BitOp::not_);
      expect_positional(unary ? 3 : 4);
      in.rd = reg(1);
      in.rs = reg(2);
      if (!unary) operand(3, in);
    } else if (m == "memr" || m == "memw") {
      in.op = m == "memr" ? Opcode::memr : Opcode::memw;
      if (pos_.size() != 2 && pos_.size() != 3) fail(AsmErrorKind::syntax, "expected 2 or 3 operands");
      if (in.op == Opcode::memr) {
        in.rd = reg(0);
      } else {
        in.rt = reg(0);
      }
      in.rs = reg(1);
      in.imm = pos_.size() == 3 ? imm32(2, false) : 0;
    } else if (m == "sync") {
      in.op = Opcode::sync;
      expect_positional(1);
      in.imm = static_cast<std::int64_t>(number(0, 0, static_cast<__int128>(kTimeLimit) - 1, "offset"));
      if (in.page) fail(AsmErrorKind::syntax, "SYNC takes no page");
    } else if (m == "synci") {
      in.op = Opcode::synci;
      expect_positional(1);
      operand_rs(0, in);
    } else if (m == "wait") {
      in.op = Opcode::wait;
      expect_positional(1);
      in.imm = static_cast<std::int32_t>(static_cast<std::uint32_t>(number(0, 0, 0xFFFFFFFFLL, "wait")));
    } else if (m == "loopnz") {
      in.op = Opcode::loopnz;
      expect_positional(2);
      in.rd = reg(0);
      target(1);
    } else if (m == "jump") {
      in.op = Opcode::condj;
      expect_positional(1);
      target(0);
    } else if (m == "condj") {
      in.op = Opcode::condj;
      if (pos_.size() == 2 && lower(pos_[0]) == "always") {
        target(1);
      } else {
        expect_positional(4);
        in.rs = reg(0);
        const auto c = lookup(kCondNames, pos_[1]);
        if (!c || *c == static_cast<std::uint8_t>(Cond::always)) {
          fail(AsmErrorKind::syntax, "bad condition '" + pos_[1] + "'");
        }
        in.fn = *c;
        in.rt = reg(2);
        target(3);
      }
    } else if (m == "read") {
      in.op = Opcode::read;
      if (pos_.size() != 2 && pos_.size() != 3) fail(AsmErrorKind::syntax, "expected 2 or 3 operands");
      in.rd = reg(0);
      in.rs = reg(1);
      in.fn = pos_.size() == 3 ? static_cast<std::uint8_t>(number(2, 0, kNumChannels - 1, "port")) : 0;
    }
    return in;
  }

  [[noreturn]] void fail(AsmErrorKind k, std::string msg) { throw LineError{k, std::move(msg)}; }

 private:
  void expect_positional(std::size_t n) {
    if (pos_.size() != n) {
      fail(AsmErrorKind::syntax, "expected " + std::to_string(n) + " operand(s), got " + std::to_string(pos_.size()));
    }
  }

  void finish_keys() {
    for (const auto& [k, v] : keys_) {
      if (!used_.count(k)) fail(AsmErrorKind::syntax, "unexpected key '" + k + "'");
    }
  }

  __int128 key_int(const std::string& key, __int128 dflt, __int128 lo, __int128 hi, const char* what = nullptr) {
    used_.insert(key);
    const std::string* val = nullptr;
    for (const auto& [k, v] : keys_) {
      if (k == key) {
        if (val) fail(AsmErrorKind::syntax, "duplicate key '" + key + "'");
        val = &v;
      }
    }
    if (!val) {
      if (dflt < 0) fail(AsmErrorKind::syntax, "missing " + key + "=");
      return dflt;
    }
    return check(*val, lo, hi, what ? what : key.c_str());
  }

  __int128 check(const std::string& s, __int128 lo, __int128 hi, const std::string& what) {
    auto v = parse_int(s);
    if (!v) fail(AsmErrorKind::syntax, "bad number '" + s + "'");
    if (*v < lo || *v > hi) fail(AsmErrorKind::range, what + " '" + s + "' out of range");
    return *v;
  }

  __int128 number(std::size_t k, __int128 lo, __int128 hi, const std::string& what) {
    return check(pos_[k], lo, hi, what);
  }

  std::uint8_t reg(std::size_t k) {
    auto r = parse_reg(pos_[k]);
    if (!r) fail(AsmErrorKind::syntax, "expected register, got '" + pos_[k] + "'");
    if (*r < 0 || *r >= kNumRegisters) fail(AsmErrorKind::range, "register '" + pos_[k] + "' out of range");
    return static_cast<std::uint8_t>(*r);
  }

  // Signed 32-bit; `wide` also accepts unsigned spellings up to 2^32-1.
  std::int64_t imm32(std::size_t k, bool wide) {
    const __int128 hi = wide ? 0xFFFFFFFFLL : 0x7FFFFFFFLL;
    const __int128 v = number(k, -(static_cast<__int128>(1) << 31), hi, "immediate");
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(static_cast<std::uint64_t>(v) & 0xFFFFFFFFu));
  }

  void operand(std::size_t k, Instruction& in) {
    if (parse_reg(pos_[k])) {
      in.rt = reg(k);
    } else {
      in.use_imm = true;
      in.imm = imm32(k, true);
    }
  }

  void operand_rs(std::size_t k, Instruction& in) {
    if (parse_reg(pos_[k])) {
      in.rs = reg(k);
    } else {
      in.use_imm = true;
      in.imm = imm32(k, false);
    }
  }

  void target(std::size_t k) {
    if (!is_ident(pos_[k])) fail(AsmErrorKind::syntax, "bad label '" + pos_[k] + "'");
    pending_.push_back({index_, pos_[k], line_});
  }

  int line_;
  std::vector<PendingTarget>& pending_;
  std::size_t index_;
  std::vector<std::string> pos_;
  std::vector<std::pair<std::string, std::string>> keys_;
  std::set<std::string> used_;
};

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

ParseResult parse_asm(std::string_view text) {
  Program prog;
  std::vector<AsmError> errors;
  std::vector<PendingTarget> pending;
  std::map<std::string, int> label_lines;

  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (auto c = line.find(';'); c != std::string_view::npos) line = line.substr(0, c);

    // Leading `label:` definitions.
    for (;;) {
      std::size_t b = 0;
      while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
      line.remove_prefix(b);
      const auto colon = line.find(':');
      if (colon == std::string_view::npos) break;
      std::string_view name = line.substr(0, colon);
      while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.remove_suffix(1);
      if (!is_ident(name)) {
        errors.push_back({AsmErrorKind::syntax, line_no, "bad label '" + std::string(name) + "'"});
        line = {};
        break;
      }
      const std::string key(name);
      if (label_lines.count(key)) {
        errors.push_back({AsmErrorKind::syntax, line_no,
                          "duplicate label '" + key + "' (first defined on line " +
                              std::to_string(label_lines[key]) + ")"});
      } else {
        label_lines[key] = line_no;
        prog.labels[key] = prog.size();
      }
      line.remove_prefix(colon + 1);
    }

    auto tokens = tokenize(line);
    if (tokens.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    const std::string mnemonic = tokens.front();
    tokens.erase(tokens.begin());
    const std::size_t pending_before = pending.size();
    try {
      LineParser lp(std::move(tokens), line_no, pending, prog.size());
      prog.instructions.push_back(lp.parse(mnemonic));
      prog.source_lines.push_back(line_no);
    } catch (const LineError& e) {
      pending.resize(pending_before);
      errors.push_back({e.kind, line_no, e.message});
    }
    if (nl == text.size()) break;
  }

  for (const auto& t : pending) {
    auto it = prog.labels.find(t.label);
    if (it == prog.labels.end()) {
      errors.push_back({AsmErrorKind::unresolved_label, t.line, "undefined label '" + t.label + "'"});
    } else if (it->second >= prog.size()) {
      errors.push_back({AsmErrorKind::unresolved_label, t.line, "label '" + t.label + "' has no instruction"});
    } else {
      prog.instructions[t.instr].imm = static_cast<std::int64_t>(it->second);
    }
  }

  ParseResult r;
  if (errors.empty()) {
    r.program = std::move(prog);
  } else {
    std::stable_sort(errors.begin(), errors.end(), [](const AsmError& a, const AsmError& b) { return a.line < b.line; });
    r.errors = std::move(errors);
  }
  return r;
}

std::string render_instruction(const Instruction& in, const std::map<std::size_t, std::string>& target_names) {
  std::ostringstream os;
  auto r = [](int k) { return "r" + std::to_string(k); };
  auto page = [&] {
    if (in.page) os << " p=" << int{in.page};
  };
  auto label = [&](std::int64_t idx) {
    auto it = target_names.find(static_cast<std::size_t>(idx));
    return it != target_names.end() ? it->second : "L" + std::to_string(idx);
  };
  os << opcode_name(in.op);
  switch (in.op) {
    case Opcode::nop:
    case Opcode::end:
      break;
    case Opcode::regwi:
      page();
      os << ' ' << r(in.rd) << ", " << in.imm;
      break;
    case Opcode::math:
    case Opcode::bit: {
      page();
      const auto name = in.op == Opcode::math ? kMathNames[in.fn] : kBitNames[in.fn];
      os << ' ' << name << ' ' << r(in.rd) << ", " << r(in.rs);
      if (!(in.op == Opcode::bit && in.fn == static_cast<std::uint8_t>(BitOp::not_))) {
        os << ", ";
        if (in.use_imm) {
          os << in.imm;
        } else {
          os << r(in.rt);
        }
      }
      break;
    }
    case Opcode::memr:
    case Opcode::memw:
      page();
      os << ' ' << r(in.op == Opcode::memr ? in.rd : in.rt) << ", " << r(in.rs) << ", " << in.imm;
      break;
    case Opcode::sync:
      os << ' ' << in.imm;
      break;
    case Opcode::synci:
      page();
      if (in.use_imm) {
        os << ' ' << in.imm;
      } else {
        os << ' ' << r(in.rs);
      }
      break;
    case Opcode::wait:
      page();
      os << ' ' << static_cast<std::uint32_t>(static_cast<std::int32_t>(in.imm));
      break;
    case Opcode::loopnz:
      page();
      os << ' ' << r(in.rd) << ", " << label(in.imm);
      break;
    case Opcode::condj:
      if (in.fn == static_cast<std::uint8_t>(Cond::always)) {
        std::ostringstream j;
        j << "JUMP";
        if (in.page) j << " p=" << int{in.page};
        j << ' ' << label(in.imm);
        return j.str();
      }
      page();
      os << ' ' << r(in.rs) << ", " << kCondNames[in.fn] << ", " << r(in.rt) << ", " << label(in.imm);
      break;
    case Opcode::read:
      page();
      os << ' ' << r(in.rd) << ", " << r(in.rs) << ", " << int{in.fn};
      break;
    case Opcode::pulse:
    case Opcode::trig:
      os << " ch=" << int{in.channel} << " t=" << in.time;
      page();
      os << " r=" << int{in.rd};
      break;
  }
  return os.str();
}

std::string render(const Program& p) {
  std::map<std::size_t, std::vector<std::string>> at;
  std::map<std::size_t, std::string> names;
  for (const auto& [name, idx] : p.labels) {
    at[idx].push_back(name);
    names.emplace(idx, name);
  }
  for (const auto& in : p.instructions) {
    if (in.op == Opcode::loopnz || in.op == Opcode::condj) {
      const auto idx = static_cast<std::size_t>(in.imm);
      if (!names.count(idx)) {
        std::string n = "L" + std::to_string(idx);
        while (p.labels.count(n)) n += "_";
        names[idx] = n;
        at[idx].push_back(n);
      }
    }
  }
  std::ostringstream os;
  for (std::size_t k = 0; k <= p.size(); ++k) {
    if (auto it = at.find(k); it != at.end()) {
      for (const auto& n : it->second) os << n << ":\n";
    }
    if (k < p.size()) os << "    " << render_instruction(p.instructions[k], names) << '\n';
  }
  for (auto it = at.upper_bound(p.size()); it != at.end(); ++it) {
    for (const auto& n : it->second) os << n << ":\n";
  }
  return os.str();
}

}  // namespace qctrl::isa
