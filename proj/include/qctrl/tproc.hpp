#pragma once

// Timed processor. Two timelines run side by side: the processor timeline
// decodes instructions (one per cycle by default) and pushes time-tagged
// commands into per-channel FIFO queues; the master clock timeline pops
// each queue head at its absolute cycle and hands it to the peripherals.
//
// A queued command fires at max(abs, dispatch + min_latency, previous fire
// on the same queue + 1) where abs = time tag + offset at dispatch. Firing
// later than abs is an underrun: it is reported and execution continues.
// At equal cycles master-clock events run before the instruction issued on
// that cycle, ordered by queue id (pulse queues 0-7, trigger queues 8-15,
// capture completions 16-23).

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qctrl/commands.hpp"
#include "qctrl/isa.hpp"
#include "qctrl/types.hpp"

namespace qctrl::tproc {

/// Peripherals attached to the processor. Calls arrive in master-clock order.
class Peripherals {
 public:
  virtual ~Peripherals() = default;
  virtual void pulse(const PulseCommand& cmd, Cycle at) = 0;
  virtual void trigger(const TriggerCommand& trig) = 0;
  /// Window closed (plus the feedback pipeline). The returned pair, if any,
  /// is latched on feedback port `trig.channel`.
  virtual std::optional<IQPair> capture_complete(const TriggerCommand& trig, Cycle at) = 0;
};

/// Accepts everything, reports nothing on the feedback path.
class NullPeripherals final : public Peripherals {
 public:
  void pulse(const PulseCommand&, Cycle) override {}
  void trigger(const TriggerCommand&) override {}
  std::optional<IQPair> capture_complete(const TriggerCommand&, Cycle) override { return std::nullopt; }
};

enum class TraceLevel { none, timed, all };

enum class EventKind : std::uint8_t {
  pulse,            // a = abs time, b = dispatch cycle
  trigger,          // a = abs time, b = window
  capture,          // a = I, b = Q (sentinel if no value)
  underrun,         // a = abs time, b = fire cycle; channel = queue id
  read_invalid,     // a = port
  instruction,      // a = pc, b = opcode
  stall,            // a = pc, b = cycles stalled
  halt,             // a = pc
};

std::string_view event_kind_name(EventKind k);

struct TraceEvent {
  Cycle cycle = 0;
  int channel = 0;
  EventKind kind = EventKind::pulse;
  std::int64_t a = 0;
  std::int64_t b = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct UnderrunReport {
  int queue = 0;  // 0-7 pulse channels, 8-15 trigger channels
  Cycle scheduled = 0;
  Cycle actual = 0;
  Cycle dispatched = 0;

  friend bool operator==(const UnderrunReport&, const UnderrunReport&) = default;
};

struct Config {
  std::size_t queue_capacity = 16;
  Cycle min_latency = 20;      // dispatch to earliest fire
  Cycle instr_cycles = 1;      // non-timed instruction issue cost
  Cycle branch_taken_cycles = 16;
  bool instant_decode = false; // instructions cost zero processor time
  Cycle feedback_pipeline = 0; // window close to feedback valid
  Cycle max_cycles = kTimeLimit;
  std::uint64_t max_instructions = 4'000'000'000ull;
  std::size_t data_memory_words = 4096;
  TraceLevel trace = TraceLevel::timed;
};

inline constexpr std::int32_t kFeedbackInvalid = INT32_MIN;

struct FeedbackPort {
  IQPair value{};
  bool valid = false;
  Cycle updated = 0;
};

struct ProcessorState {
  std::size_t pc = 0;
  bool halted = false;
  Cycle cycle = 0;  // processor timeline
  Cycle offset = 0;
  std::array<std::array<std::int32_t, isa::kNumRegisters>, isa::kNumPages> regs{};
  std::vector<std::int32_t> memory;
  std::array<FeedbackPort, kNumChannels> feedback{};
};

struct ExecutionTrace {
  std::vector<TraceEvent> events;
  std::vector<UnderrunReport> underruns;
  Cycle end_cycle = 0;        // master clock when everything drained
  Cycle processor_cycle = 0;  // processor timeline at halt
  std::uint64_t instructions = 0;
  std::uint64_t pulses = 0;
  std::uint64_t triggers = 0;
};

std::string to_jsonl(const ExecutionTrace& t);

class Simulator {
 public:
  Simulator(isa::Program program, Peripherals& io, Config cfg = {});

  void set_memory(std::size_t addr, std::int32_t value);
  void set_register(int page, int reg, std::int32_t value);

  /// Advance the master clock by n cycles, executing everything scheduled
  /// strictly before now + n. Returns the events recorded in the window.
  std::vector<TraceEvent> step_clock(Cycle n);

  /// Run until the processor halts and every queue and capture drains.
  ExecutionTrace run();

  bool done() const;
  Cycle now() const { return now_; }
  const ProcessorState& state() const { return st_; }
  const ExecutionTrace& trace() const { return trace_; }

 private:
  struct Entry {
    Cycle fire;
    Cycle scheduled;
    Cycle dispatched;
    bool is_pulse;
    PulseCommand pulse;
    TriggerCommand trig;
  };
  struct Completion {
    Cycle at;
    TriggerCommand trig;
  };

  std::optional<std::pair<Cycle, int>> next_event() const;
  void fire_event(int id);
  void advance_to(Cycle horizon);
  bool execute_one();  // false if the processor stalled instead of issuing
  bool dispatch(const isa::Instruction& in);
  void record(const TraceEvent& e, bool timed);
  Cycle cost(Cycle c) const { return cfg_.instant_decode ? 0 : c; }

  isa::Program prog_;
  Peripherals& io_;
  Config cfg_;
  ProcessorState st_;
  std::array<std::deque<Entry>, 2 * kNumChannels> queues_;
  std::array<Cycle, 2 * kNumChannels> last_fire_{};
  std::array<bool, 2 * kNumChannels> fired_any_{};
  std::vector<Completion> completions_;
  ExecutionTrace trace_;
  Cycle now_ = 0;
  std::uint64_t executed_ = 0;
};

ExecutionTrace run(const isa::Program& program, Peripherals& io, const Config& cfg = {});

}  // namespace qctrl::tproc
