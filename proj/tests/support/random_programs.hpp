#pragma once

// Random timed-program generator plus a reference interpreter that
// computes, without any timing model, the absolute time of every
// dispatched command in per-queue FIFO order.

#include <array>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qctrl/isa.hpp"
#include "qctrl/tproc.hpp"

namespace qctrl::testing {

struct GenOptions {
  int blocks = 6;
  int max_block_len = 8;
  int max_loop_count = 4;
  std::uint64_t max_sync = 5000;
  std::uint64_t max_tag = 400;
  bool allow_wait = true;
  bool allow_backwards = false;  // allow tags that make a queue non-monotone
};

inline std::string random_program_text(std::mt19937_64& rng, const GenOptions& o = {}) {
  auto u = [&](std::uint64_t lo, std::uint64_t hi) { return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng); };
  std::ostringstream s;
  // r30/r31 on page 0: trigger window and markers; r0..r5: pulse group.
  s << "REGWI r30, " << u(1, 40) << "\nREGWI r31, " << u(0, 15) << "\n";
  s << "REGWI r0, " << u(0, 0xFFFFFFFF) << "\nREGWI r3, 16\nREGWI r4, 1000\n";
  s << "SYNC " << u(0, o.max_sync) << "\n";
  int label = 0;
  for (int b = 0; b < o.blocks; ++b) {
    const bool loop = u(0, 2) == 0;
    const int counter = 10 + (b % 8);
    if (loop) {
      s << "REGWI r" << counter << ", " << u(1, static_cast<std::uint64_t>(o.max_loop_count)) << "\n";
      s << "blk" << label << ":\n";
    }
    const int n = static_cast<int>(u(1, static_cast<std::uint64_t>(o.max_block_len)));
    for (int k = 0; k < n; ++k) {
      switch (u(0, 9)) {
        case 0:
        case 1:
        case 2:
          s << "PULSE ch=" << u(0, 7) << " t=" << u(0, o.max_tag) << " r=0\n";
          break;
        case 3:
          s << "TRIG ch=" << u(0, 7) << " t=" << u(0, o.max_tag) << " r=30\n";
          break;
        case 4:
          s << "SYNCI " << u(0, o.max_tag) << "\n";
          break;
        case 5:
          if (o.allow_backwards) {
            s << "SYNC " << u(0, o.max_sync) << "\n";
          } else {
            s << "SYNCI " << u(0, 50) << "\n";
          }
          break;
        case 6:
          s << "REGWI r20, " << u(0, 300) << "\nSYNCI r20\n";
          break;
        case 7:
          if (o.allow_wait) {
            s << "WAIT " << u(0, o.max_tag) << "\n";
          } else {
            s << "NOP\n";
          }
          break;
        case 8:
          s << "MATH add r21, r21, " << u(0, 9) << "\n";
          break;
        default:
          s << "NOP\n";
      }
    }
    if (loop) {
      s << "SYNCI " << o.max_tag + 1 << "\n";
      s << "LOOPNZ r" << counter << ", blk" << label << "\n";
      ++label;
    }
  }
  s << "END\n";
  return s.str();
}

/// Absolute times of dispatched commands, per queue (0-7 pulses, 8-15 triggers).
inline std::array<std::vector<Cycle>, 16> reference_schedule(const isa::Program& p) {
  std::array<std::vector<Cycle>, 16> out;
  std::array<std::array<std::int64_t, 32>, 8> regs{};
  Cycle offset = 0;
  std::size_t pc = 0;
  std::uint64_t steps = 0;
  while (pc < p.size() && ++steps < 10'000'000) {
    const auto& in = p.instructions[pc];
    auto& r = regs[in.page];
    switch (in.op) {
      case isa::Opcode::end: return out;
      case isa::Opcode::regwi: r[in.rd] = in.imm; break;
      case isa::Opcode::math: {
        const std::int64_t b = in.use_imm ? in.imm : r[in.rt];
        r[in.rd] = static_cast<std::int32_t>(in.fn == 0 ? r[in.rs] + b : r[in.rs] - b);
        break;
      }
      case isa::Opcode::sync: offset = static_cast<Cycle>(in.imm); break;
      case isa::Opcode::synci: offset += static_cast<Cycle>(in.use_imm ? in.imm : r[in.rs]); break;
      case isa::Opcode::loopnz:
        r[in.rd] -= 1;
        if (r[in.rd] != 0) {
          pc = static_cast<std::size_t>(in.imm);
          continue;
        }
        break;
      case isa::Opcode::pulse: out[in.channel].push_back(offset + in.time); break;
      case isa::Opcode::trig: out[8 + in.channel].push_back(offset + in.time); break;
      default: break;
    }
    ++pc;
  }
  return out;
}

/// Records what the processor hands to its peripherals.
class RecordingPeripherals final : public tproc::Peripherals {
 public:
  struct Fired {
    int queue;
    Cycle at;
  };
  std::vector<Fired> fired;
  std::vector<std::pair<PulseCommand, Cycle>> pulses;
  std::vector<TriggerCommand> triggers;
  std::vector<std::pair<TriggerCommand, Cycle>> completions;
  IQPair next_value{0, 0};
  bool produce_values = true;

  void pulse(const PulseCommand& cmd, Cycle at) override {
    fired.push_back({cmd.channel, at});
    pulses.emplace_back(cmd, at);
  }
  void trigger(const TriggerCommand& t) override {
    fired.push_back({8 + t.channel, t.start});
    triggers.push_back(t);
  }
  std::optional<IQPair> capture_complete(const TriggerCommand& t, Cycle at) override {
    completions.emplace_back(t, at);
    if (!produce_values) return std::nullopt;
    return next_value;
  }
};

}  // namespace qctrl::testing
