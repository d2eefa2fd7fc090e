#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "qctrl/isa.hpp"

namespace qctrl::isa {

namespace {

constexpr int kOpShift = 59;
constexpr std::uint64_t kMask48 = (std::uint64_t{1} << 48) - 1;

std::uint64_t bits(std::uint64_t word, int hi, int lo) {
  return (word >> lo) & ((std::uint64_t{1} << (hi - lo + 1)) - 1);
}

bool fits_i32(std::int64_t v) {
  return v >= std::numeric_limits<std::int32_t>::min() && v <= std::numeric_limits<std::int32_t>::max();
}

[[noreturn]] void invalid(const Instruction& in, const std::string& why) {
  throw Error(std::string(opcode_name(in.op)) + ": " + why);
}

bool uses_rd(Opcode op) {
  switch (op) {
    case Opcode::regwi:
    case Opcode::math:
    case Opcode::bit:
    case Opcode::memr:
    case Opcode::loopnz:
    case Opcode::read:
    case Opcode::pulse:
    case Opcode::trig:
      return true;
    default:
      return false;
  }
}

bool uses_rs(const Instruction& in) {
  switch (in.op) {
    case Opcode::math:
    case Opcode::bit:
    case Opcode::memr:
    case Opcode::memw:
    case Opcode::read:
      return true;
    case Opcode::synci:
      return !in.use_imm;
    case Opcode::condj:
      return in.fn != static_cast<std::uint8_t>(Cond::always);
    default:
      return false;
  }
}

bool uses_rt(const Instruction& in) {
  switch (in.op) {
    case Opcode::math:
      return !in.use_imm;
    case Opcode::bit:
      return !in.use_imm && in.fn != static_cast<std::uint8_t>(BitOp::not_);
    case Opcode::memw:
      return true;
    case Opcode::condj:
      return in.fn != static_cast<std::uint8_t>(Cond::always);
    default:
      return false;
  }
}

bool uses_imm32(const Instruction& in) {
  switch (in.op) {
    case Opcode::regwi:
    case Opcode::memr:
    case Opcode::memw:
    case Opcode::wait:
    case Opcode::loopnz:
    case Opcode::condj:
      return true;
    case Opcode::math:
    case Opcode::synci:
      return in.use_imm;
    case Opcode::bit:
      return in.use_imm && in.fn != static_cast<std::uint8_t>(BitOp::not_);
    default:
      return false;
  }
}

bool may_use_imm_flag(const Instruction& in) {
  switch (in.op) {
    case Opcode::math:
    case Opcode::synci:
      return true;
    case Opcode::bit:
      return in.fn != static_cast<std::uint8_t>(BitOp::not_);
    default:
      return false;
  }
}

}  // namespace

bool is_timed(Opcode op) { return op == Opcode::pulse || op == Opcode::trig; }

std::string_view opcode_name(Opcode op) {
  switch (op) {
    case Opcode::nop: return "NOP";
    case Opcode::end: return "END";
    case Opcode::regwi: return "REGWI";
    case Opcode::math: return "MATH";
    case Opcode::bit: return "BIT";
    case Opcode::memr: return "MEMR";
    case Opcode::memw: return "MEMW";
    case Opcode::sync: return "SYNC";
    case Opcode::synci: return "SYNCI";
    case Opcode::wait: return "WAIT";
    case Opcode::loopnz: return "LOOPNZ";
    case Opcode::condj: return "CONDJ";
    case Opcode::read: return "READ";
    case Opcode::pulse: return "PULSE";
    case Opcode::trig: return "TRIG";
  }
  return "?";
}

void validate(const Instruction& in, std::size_t program_size) {
  if (static_cast<unsigned>(in.op) > static_cast<unsigned>(Opcode::trig)) invalid(in, "unknown opcode");
  if (in.page >= kNumPages) invalid(in, "page out of range");
  if (in.rd >= kNumRegisters || in.rs >= kNumRegisters || in.rt >= kNumRegisters) invalid(in, "register out of range");

  if (is_timed(in.op)) {
    if (in.channel >= kNumChannels) invalid(in, "channel out of range");
    if (in.time >= kTimeLimit) invalid(in, "time tag must be below 2^48");
    const int group = in.op == Opcode::pulse ? kPulseGroup : kTrigGroup;
    if (in.rd + group > kNumRegisters) invalid(in, "register group runs past r31");
    if (in.rs || in.rt || in.fn || in.use_imm || in.imm) invalid(in, "unused fields must be zero");
    return;
  }
  if (in.channel || in.time) invalid(in, "only timed instructions carry a channel and time");

  if (in.op == Opcode::sync) {
    if (in.imm < 0 || static_cast<std::uint64_t>(in.imm) > kMask48) invalid(in, "offset must be below 2^48");
    if (in.page || in.rd || in.rs || in.rt || in.fn || in.use_imm) invalid(in, "unused fields must be zero");
    return;
  }

  switch (in.op) {
    case Opcode::math:
      if (in.fn > static_cast<std::uint8_t>(MathOp::sub)) invalid(in, "bad ALU operation");
      break;
    case Opcode::bit:
      if (in.fn > static_cast<std::uint8_t>(BitOp::shr)) invalid(in, "bad bit operation");
      break;
    case Opcode::condj:
      if (in.fn > static_cast<std::uint8_t>(Cond::lt)) invalid(in, "bad condition");
      break;
    case Opcode::read:
      if (in.fn >= kNumChannels) invalid(in, "feedback port out of range");
      break;
    default:
      if (in.fn) invalid(in, "unused fields must be zero");
  }
  if (in.use_imm && !may_use_imm_flag(in)) invalid(in, "immediate form not allowed");
  if (!uses_rd(in.op) && in.rd) invalid(in, "unused fields must be zero");
  if (!uses_rs(in) && in.rs) invalid(in, "unused fields must be zero");
  if (!uses_rt(in) && in.rt) invalid(in, "unused fields must be zero");
  if (uses_imm32(in)) {
    if (!fits_i32(in.imm)) invalid(in, "immediate must fit 32 bits");
  } else if (in.imm) {
    invalid(in, "unused fields must be zero");
  }
  if (in.op == Opcode::loopnz || in.op == Opcode::condj) {
    if (in.imm < 0) invalid(in, "negative branch target");
    if (program_size && static_cast<std::size_t>(in.imm) >= program_size) invalid(in, "branch target past end");
  }
}

std::uint64_t encode(const Instruction& in) {
  validate(in);
  std::uint64_t w = std::uint64_t{static_cast<std::uint8_t>(in.op)} << kOpShift;
  if (is_timed(in.op)) {
    w |= std::uint64_t{in.channel} << 56;
    w |= std::uint64_t{in.page} << 53;
    w |= std::uint64_t{in.rd} << 48;
    w |= in.time & kMask48;
    return w;
  }
  if (in.op == Opcode::sync) return w | (static_cast<std::uint64_t>(in.imm) & kMask48);
  w |= std::uint64_t{in.page} << 56;
  w |= std::uint64_t{in.rd} << 51;
  w |= std::uint64_t{in.rs} << 46;
  w |= std::uint64_t{in.rt} << 41;
  w |= std::uint64_t{in.fn} << 37;
  w |= std::uint64_t{in.use_imm} << 36;
  w |= static_cast<std::uint32_t>(static_cast<std::int32_t>(in.imm));
  return w;
}

namespace {

Instruction decode_fields(std::uint64_t word) {
  Instruction in;
  const auto op = static_cast<unsigned>(bits(word, 63, 59));
  if (op > static_cast<unsigned>(Opcode::trig)) throw Error("unknown opcode " + std::to_string(op));
  in.op = static_cast<Opcode>(op);
  if (is_timed(in.op)) {
    in.channel = static_cast<std::uint8_t>(bits(word, 58, 56));
    in.page = static_cast<std::uint8_t>(bits(word, 55, 53));
    in.rd = static_cast<std::uint8_t>(bits(word, 52, 48));
    in.time = bits(word, 47, 0);
  } else if (in.op == Opcode::sync) {
    in.imm = static_cast<std::int64_t>(bits(word, 47, 0));
  } else {
    in.page = static_cast<std::uint8_t>(bits(word, 58, 56));
    in.rd = static_cast<std::uint8_t>(bits(word, 55, 51));
    in.rs = static_cast<std::uint8_t>(bits(word, 50, 46));
    in.rt = static_cast<std::uint8_t>(bits(word, 45, 41));
    in.fn = static_cast<std::uint8_t>(bits(word, 40, 37));
    in.use_imm = bits(word, 36, 36) != 0;
    in.imm = static_cast<std::int32_t>(static_cast<std::uint32_t>(bits(word, 31, 0)));
  }
  if (encode(in) != word) throw Error("non-canonical encoding");
  return in;
}

}  // namespace

Instruction decode(std::uint64_t word) {
  try {
    return decode_fields(word);
  } catch (const Error& e) {
    throw DecodeError(0, e.what());
  }
}

std::vector<std::uint64_t> assemble(const Program& p) {
  std::vector<std::uint64_t> out;
  out.reserve(p.size());
  for (const auto& in : p.instructions) {
    validate(in, p.size());
    out.push_back(encode(in));
  }
  return out;
}

Program disassemble(std::span<const std::uint64_t> words) {
  Program p;
  p.instructions.reserve(words.size());
  for (std::size_t k = 0; k < words.size(); ++k) {
    try {
      p.instructions.push_back(decode_fields(words[k]));
    } catch (const Error& e) {
      throw DecodeError(k, e.what());
    }
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto& in = p.instructions[k];
    if ((in.op == Opcode::loopnz || in.op == Opcode::condj) && static_cast<std::size_t>(in.imm) >= p.size()) {
      throw DecodeError(k, "branch target past end of program");
    }
  }
  return p;
}

DecodeError::DecodeError(std::size_t index, const std::string& what)
    : Error("word " + std::to_string(index) + ": " + what), index_(index) {}

std::vector<std::uint8_t> to_binary(std::span<const std::uint64_t> words) {
  std::vector<std::uint8_t> out(std::begin(kBinaryMagic), std::end(kBinaryMagic));
  out.push_back(kBinaryVersion);
  for (std::uint64_t w : words) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(w >> (8 * b)));
  }
  return out;
}

std::vector<std::uint64_t> from_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kBinaryMagic, 8) != 0) throw Error("not a program binary");
  if (bytes[8] != kBinaryVersion) throw Error("unsupported program binary version " + std::to_string(bytes[8]));
  if ((bytes.size() - 9) % 8 != 0) throw Error("truncated program binary");
  std::vector<std::uint64_t> words((bytes.size() - 9) / 8);
  for (std::size_t k = 0; k < words.size(); ++k) {
    std::uint64_t w = 0;
    for (int b = 7; b >= 0; --b) w = (w << 8) | bytes[9 + 8 * k + b];
    words[k] = w;
  }
  return words;
}

void write_binary_file(const std::string& path, std::span<const std::uint64_t> words) {
  const auto bytes = to_binary(words);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path);
}

std::vector<std::uint64_t> read_binary_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return from_binary(bytes);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace qctrl::isa
