#pragma once

// Instruction set of the timed processor: data types, text grammar,
// 64-bit encoding and the binary container.
//
// Word layouts (bit 63 is the MSB):
//   timed  (PULSE, TRIG): op[63:59] ch[58:56] page[55:53] rbase[52:48] time[47:0]
//   SYNC:                 op[63:59] 0[58:48]  imm[47:0]
//   others:               op[63:59] page[58:56] rd[55:51] rs[50:46] rt[45:41]
//                         fn[40:37] imm_flag[36] 0[35:32] imm[31:0]
// The all-zero word is NOP.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qctrl/types.hpp"

namespace qctrl::isa {

enum class Opcode : std::uint8_t {
  nop = 0,
  end = 1,
  regwi = 2,
  math = 3,
  bit = 4,
  memr = 5,
  memw = 6,
  sync = 7,
  synci = 8,
  wait = 9,
  loopnz = 10,
  condj = 11,
  read = 12,
  pulse = 13,
  trig = 14,
};

enum class MathOp : std::uint8_t { add = 0, sub = 1 };
enum class BitOp : std::uint8_t { and_ = 0, or_ = 1, xor_ = 2, not_ = 3, shl = 4, shr = 5 };
enum class Cond : std::uint8_t { always = 0, eq = 1, ne = 2, gt = 3, lt = 4 };

inline constexpr int kNumRegisters = 32;
inline constexpr int kNumPages = 8;
/// PULSE reads six consecutive registers starting at rbase:
/// freq word, phase word, envelope start, envelope length, gain, flags.
inline constexpr int kPulseGroup = 6;
/// TRIG reads two: window length (decimated samples) and marker bits.
inline constexpr int kTrigGroup = 2;

/// Flags register of the pulse group.
inline constexpr std::uint32_t kFlagOutselMask = 0x3;
inline constexpr std::uint32_t kFlagModePeriodic = 1u << 2;
inline constexpr std::uint32_t kFlagStdselZero = 1u << 3;

bool is_timed(Opcode op);
std::string_view opcode_name(Opcode op);

/// One decoded instruction. Fields an opcode does not use stay zero, so
/// equality is field equality of the canonical form.
///   REGWI  rd <- imm
///   MATH   rd <- rs (fn) (rt | imm)
///   BIT    rd <- rs (fn) (rt | imm); NOT ignores the second operand
///   MEMR   rd <- mem[rs + imm]
///   MEMW   mem[rs + imm] <- rt
///   SYNC   offset <- imm (48-bit)
///   SYNCI  offset += (rs | imm)
///   WAIT   stall until master clock >= offset + imm
///   LOOPNZ rd -= 1; if rd != 0 jump imm
///   CONDJ  if rs (fn) rt jump imm; `always` ignores rs and rt
///   READ   rd, rs <- feedback port fn (I, Q)
///   PULSE/TRIG channel, page, rd = register group base, time
struct Instruction {
  Opcode op = Opcode::nop;
  std::uint8_t page = 0;
  std::uint8_t rd = 0;
  std::uint8_t rs = 0;
  std::uint8_t rt = 0;
  std::uint8_t fn = 0;
  bool use_imm = false;
  std::int64_t imm = 0;
  std::uint8_t channel = 0;
  Cycle time = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

/// Branch targets (CONDJ, LOOPNZ) are instruction indices stored in imm.
struct Program {
  std::vector<Instruction> instructions;
  std::map<std::string, std::size_t> labels;
  std::vector<int> source_lines;  // per instruction, 1-based; empty if not parsed

  std::size_t size() const { return instructions.size(); }
};

enum class AsmErrorKind { syntax, unknown_opcode, range, unresolved_label };

struct AsmError {
  AsmErrorKind kind;
  int line;
  std::string message;
};

std::string_view error_kind_name(AsmErrorKind k);
std::string format_error(const AsmError& e);

struct ParseResult {
  std::optional<Program> program;
  std::vector<AsmError> errors;

  bool ok() const { return program.has_value(); }
};

ParseResult parse_asm(std::string_view text);

/// Canonical text form. Branch targets without a label get a synthesized
/// `L<index>` label.
std::string render(const Program& p);
std::string render_instruction(const Instruction& in, const std::map<std::size_t, std::string>& target_names = {});

/// Checks field ranges and that branch targets fall inside a program of
/// `program_size` instructions (pass 0 to skip the target check).
void validate(const Instruction& in, std::size_t program_size = 0);

std::uint64_t encode(const Instruction& in);
Instruction decode(std::uint64_t word);  // throws DecodeError with index 0

std::vector<std::uint64_t> assemble(const Program& p);
Program disassemble(std::span<const std::uint64_t> words);

class DecodeError : public Error {
 public:
  DecodeError(std::size_t index, const std::string& what);
  std::size_t word_index() const { return index_; }

 private:
  std::size_t index_;
};

inline constexpr char kBinaryMagic[8] = {'T', 'P', 'R', 'O', 'C', 'B', 'I', 'N'};
inline constexpr std::uint8_t kBinaryVersion = 1;

std::vector<std::uint8_t> to_binary(std::span<const std::uint64_t> words);
std::vector<std::uint64_t> from_binary(std::span<const std::uint8_t> bytes);
void write_binary_file(const std::string& path, std::span<const std::uint64_t> words);
std::vector<std::uint64_t> read_binary_file(const std::string& path);

}  // namespace qctrl::isa
