#include <algorithm>
#include <limits>

#include "json.hpp"
#include "qctrl/tproc.hpp"

namespace qctrl::tproc {

using isa::Instruction;
using isa::Opcode;

namespace {

constexpr int kTrigQueueBase = kNumChannels;
constexpr int kCompletionBase = 2 * kNumChannels;
constexpr Cycle kForever = std::numeric_limits<Cycle>::max();

bool compare(isa::Cond c, std::int32_t a, std::int32_t b) {
  switch (c) {
    case isa::Cond::always: return true;
    case isa::Cond::eq: return a == b;
    case isa::Cond::ne: return a != b;
    case isa::Cond::gt: return a > b;
    case isa::Cond::lt: return a < b;
  }
  return false;
}

std::int32_t wrap(std::int64_t v) { return static_cast<std::int32_t>(static_cast<std::uint32_t>(v)); }

}  // namespace

std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::pulse: return "pulse";
    case EventKind::trigger: return "trigger";
    case EventKind::capture: return "capture";
    case EventKind::underrun: return "underrun";
    case EventKind::read_invalid: return "read_invalid";
    case EventKind::instruction: return "instruction";
    case EventKind::stall: return "stall";
    case EventKind::halt: return "halt";
  }
  return "?";
}

std::string to_jsonl(const ExecutionTrace& t) {
  std::string out;
  for (const auto& e : t.events) {
    nlohmann::json detail;
    switch (e.kind) {
      case EventKind::pulse: detail = {{"abs", e.a}, {"dispatched", e.b}}; break;
      case EventKind::trigger: detail = {{"abs", e.a}, {"window", e.b}}; break;
      case EventKind::capture: detail = {{"i", e.a}, {"q", e.b}}; break;
      case EventKind::underrun: detail = {{"scheduled", e.a}, {"fired", e.b}}; break;
      case EventKind::read_invalid: detail = {{"port", e.a}}; break;
      case EventKind::instruction: detail = {{"pc", e.a}, {"op", isa::opcode_name(static_cast<Opcode>(e.b))}}; break;
      case EventKind::stall: detail = {{"pc", e.a}, {"cycles", e.b}}; break;
      case EventKind::halt: detail = {{"pc", e.a}}; break;
    }
    nlohmann::json j = {{"cycle", e.cycle}, {"channel", e.channel}, {"kind", event_kind_name(e.kind)}, {"detail", detail}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

Simulator::Simulator(isa::Program program, Peripherals& io, Config cfg)
    : prog_(std::move(program)), io_(io), cfg_(cfg) {
  if (cfg_.queue_capacity == 0) throw Error("queue capacity must be at least 1");
  for (const auto& in : prog_.instructions) isa::validate(in, prog_.size());
  st_.memory.assign(cfg_.data_memory_words, 0);
  if (prog_.size() == 0) st_.halted = true;
}

void Simulator::set_memory(std::size_t addr, std::int32_t value) {
  if (addr >= st_.memory.size()) throw Error("data memory address out of range");
  st_.memory[addr] = value;
}

void Simulator::set_register(int page, int reg, std::int32_t value) {
  if (page < 0 || page >= isa::kNumPages || reg < 0 || reg >= isa::kNumRegisters) throw Error("bad register");
  st_.regs[page][reg] = value;
}

bool Simulator::done() const {
  if (!st_.halted || !completions_.empty()) return false;
  return std::all_of(queues_.begin(), queues_.end(), [](const auto& q) { return q.empty(); });
}

void Simulator::record(const TraceEvent& e, bool timed) {
  if (cfg_.trace == TraceLevel::all || (timed && cfg_.trace == TraceLevel::timed)) trace_.events.push_back(e);
}

std::optional<std::pair<Cycle, int>> Simulator::next_event() const {
  std::optional<std::pair<Cycle, int>> best;
  for (int q = 0; q < static_cast<int>(queues_.size()); ++q) {
    if (queues_[q].empty()) continue;
    const std::pair<Cycle, int> cand{queues_[q].front().fire, q};
    if (!best || cand < *best) best = cand;
  }
  for (const auto& c : completions_) {
    const std::pair<Cycle, int> cand{c.at, kCompletionBase + c.trig.channel};
    if (!best || cand < *best) best = cand;
  }
  return best;
}

void Simulator::fire_event(int id) {
  if (id >= kCompletionBase) {
    const int ch = id - kCompletionBase;
    auto it = std::min_element(completions_.begin(), completions_.end(), [ch](const Completion& a, const Completion& b) {
      const bool ma = a.trig.channel == ch, mb = b.trig.channel == ch;
      if (ma != mb) return ma;
      return a.at < b.at;
    });
    const Completion c = *it;
    completions_.erase(it);
    now_ = std::max(now_, c.at);
    const auto v = io_.capture_complete(c.trig, c.at);
    if (v) {
      auto& port = st_.feedback[ch];
      port.value = *v;
      port.valid = true;
      port.updated = c.at;
    }
    record({c.at, ch, EventKind::capture, v ? v->i : kFeedbackInvalid, v ? v->q : kFeedbackInvalid}, true);
    return;
  }
  Entry e = queues_[id].front();
  queues_[id].pop_front();
  if (e.fire > cfg_.max_cycles) throw Error("cycle limit reached at " + std::to_string(e.fire));
  now_ = std::max(now_, e.fire);
  if (e.fire > e.scheduled) {
    trace_.underruns.push_back({id, e.scheduled, e.fire, e.dispatched});
    record({e.fire, id, EventKind::underrun, static_cast<std::int64_t>(e.scheduled), static_cast<std::int64_t>(e.fire)},
           true);
  }
  if (e.is_pulse) {
    ++trace_.pulses;
    record({e.fire, e.pulse.channel, EventKind::pulse, static_cast<std::int64_t>(e.scheduled),
            static_cast<std::int64_t>(e.dispatched)},
           true);
    io_.pulse(e.pulse, e.fire);
  } else {
    ++trace_.triggers;
    e.trig.start = e.fire;
    record({e.fire, e.trig.channel, EventKind::trigger, static_cast<std::int64_t>(e.scheduled), e.trig.window}, true);
    io_.trigger(e.trig);
    completions_.push_back({e.fire + e.trig.window + cfg_.feedback_pipeline, e.trig});
  }
}

bool Simulator::dispatch(const Instruction& in) {
  const bool pulse = in.op == Opcode::pulse;
  const int q = pulse ? in.channel : kTrigQueueBase + in.channel;
  auto& queue = queues_[q];
  if (queue.size() >= cfg_.queue_capacity) {
    const Cycle head = queue.front().fire;
    record({st_.cycle, q, EventKind::stall, static_cast<std::int64_t>(st_.pc), static_cast<std::int64_t>(head - st_.cycle)},
           false);
    st_.cycle = std::max(st_.cycle, head);
    return false;
  }
  const Cycle abs = st_.offset + in.time;
  if (abs >= kTimeLimit) throw Error("master clock overflow: absolute time " + std::to_string(abs) + " exceeds 2^48");
  const auto& r = st_.regs[in.page];
  Entry e{};
  e.scheduled = abs;
  e.dispatched = st_.cycle;
  e.fire = std::max(abs, st_.cycle + cfg_.min_latency);
  if (fired_any_[q]) e.fire = std::max(e.fire, last_fire_[q] + 1);
  e.is_pulse = pulse;
  if (pulse) {
    const std::int32_t gain = r[in.rd + 4];
    if (gain < INT16_MIN || gain > INT16_MAX) {
      throw Error("pc " + std::to_string(st_.pc) + ": pulse gain " + std::to_string(gain) + " exceeds 16 bits");
    }
    const auto flags = static_cast<std::uint32_t>(r[in.rd + 5]);
    e.pulse.freq_word = static_cast<std::uint32_t>(r[in.rd]);
    e.pulse.phase_word = static_cast<std::uint32_t>(r[in.rd + 1]);
    e.pulse.start_addr = static_cast<std::uint32_t>(r[in.rd + 2]);
    e.pulse.length = static_cast<std::uint32_t>(r[in.rd + 3]);
    e.pulse.gain = static_cast<std::int16_t>(gain);
    e.pulse.outsel = static_cast<std::uint8_t>(flags & isa::kFlagOutselMask);
    e.pulse.periodic = (flags & isa::kFlagModePeriodic) != 0;
    e.pulse.stdsel_zero = (flags & isa::kFlagStdselZero) != 0;
    e.pulse.channel = in.channel;
  } else {
    const std::int32_t window = r[in.rd];
    if (window < 1 || window > 65535) {
      throw Error("pc " + std::to_string(st_.pc) + ": trigger window " + std::to_string(window) + " not in [1, 65535]");
    }
    e.trig.window = static_cast<std::uint32_t>(window);
    e.trig.markers = static_cast<std::uint32_t>(r[in.rd + 1]);
    e.trig.channel = in.channel;
  }
  last_fire_[q] = e.fire;
  fired_any_[q] = true;
  queue.push_back(e);
  return true;
}

bool Simulator::execute_one() {
  if (st_.pc >= prog_.size()) {
    st_.halted = true;
    trace_.processor_cycle = st_.cycle;
    record({st_.cycle, 0, EventKind::halt, static_cast<std::int64_t>(st_.pc), 0}, false);
    return true;
  }
  if (executed_ >= cfg_.max_instructions) throw Error("instruction limit reached");
  if (st_.cycle > cfg_.max_cycles) throw Error("cycle limit reached at " + std::to_string(st_.cycle));
  const Instruction& in = prog_.instructions[st_.pc];
  auto& r = st_.regs[in.page];
  const Cycle issue = st_.cycle;
  const std::size_t issue_pc = st_.pc;
  auto advance = [&](Cycle c) {
    st_.cycle += cost(c);
    ++st_.pc;
  };
  auto jump = [&](bool taken) {
    if (taken) {
      st_.pc = static_cast<std::size_t>(in.imm);
      st_.cycle += cost(cfg_.branch_taken_cycles);
    } else {
      advance(cfg_.instr_cycles);
    }
  };
  const auto operand = [&]() -> std::int32_t { return in.use_imm ? static_cast<std::int32_t>(in.imm) : r[in.rt]; };

  switch (in.op) {
    case Opcode::nop:
      advance(cfg_.instr_cycles);
      break;
    case Opcode::end:
      st_.halted = true;
      trace_.processor_cycle = st_.cycle;
      record({st_.cycle, 0, EventKind::halt, static_cast<std::int64_t>(st_.pc), 0}, false);
      break;
    case Opcode::regwi:
      r[in.rd] = static_cast<std::int32_t>(in.imm);
      advance(cfg_.instr_cycles);
      break;
    case Opcode::math: {
      const std::int64_t a = r[in.rs], b = operand();
      r[in.rd] = wrap(in.fn == static_cast<std::uint8_t>(isa::MathOp::add) ? a + b : a - b);
      advance(cfg_.instr_cycles);
      break;
    }
    case Opcode::bit: {
      const auto a = static_cast<std::uint32_t>(r[in.rs]);
      const auto b = static_cast<std::uint32_t>(operand());
      std::uint32_t v = 0;
      switch (static_cast<isa::BitOp>(in.fn)) {
        case isa::BitOp::and_: v = a & b; break;
        case isa::BitOp::or_: v = a | b; break;
        case isa::BitOp::xor_: v = a ^ b; break;
        case isa::BitOp::not_: v = ~a; break;
        case isa::BitOp::shl: v = a << (b & 31u); break;
        case isa::BitOp::shr: v = a >> (b & 31u); break;
      }
      r[in.rd] = static_cast<std::int32_t>(v);
      advance(cfg_.instr_cycles);
      break;
    }
    case Opcode::memr:
    case Opcode::memw: {
      const std::int64_t addr = std::int64_t{r[in.rs]} + in.imm;
      if (addr < 0 || static_cast<std::size_t>(addr) >= st_.memory.size()) {
        throw Error("pc " + std::to_string(st_.pc) + ": data memory address " + std::to_string(addr) + " out of range");
      }
      if (in.op == Opcode::memr) {
        r[in.rd] = st_.memory[static_cast<std::size_t>(addr)];
      } else {
        st_.memory[static_cast<std::size_t>(addr)] = r[in.rt];
      }
      advance(cfg_.instr_cycles);
      break;
    }
    case Opcode::sync:
      st_.offset = static_cast<Cycle>(in.imm);
      advance(cfg_.instr_cycles);
      break;
    case Opcode::synci: {
      const std::int64_t delta = in.use_imm ? in.imm : r[in.rs];
      const std::int64_t next = static_cast<std::int64_t>(st_.offset) + delta;
      if (next < 0) throw Error("pc " + std::to_string(st_.pc) + ": time offset would become negative");
      if (static_cast<Cycle>(next) >= kTimeLimit) throw Error("master clock overflow: time offset reaches 2^48");
      st_.offset = static_cast<Cycle>(next);
      advance(cfg_.instr_cycles);
      break;
    }
    case Opcode::wait: {
      const Cycle target = st_.offset + static_cast<std::uint32_t>(static_cast<std::int32_t>(in.imm));
      const Cycle next = std::max(st_.cycle + cost(cfg_.instr_cycles), target);
      if (next > st_.cycle + cost(cfg_.instr_cycles)) {
        record({st_.cycle, 0, EventKind::stall, static_cast<std::int64_t>(st_.pc),
                static_cast<std::int64_t>(next - st_.cycle)},
               false);
      }
      st_.cycle = next;
      ++st_.pc;
      break;
    }
    case Opcode::loopnz:
      r[in.rd] = wrap(std::int64_t{r[in.rd]} - 1);
      jump(r[in.rd] != 0);
      break;
    case Opcode::condj:
      jump(compare(static_cast<isa::Cond>(in.fn), r[in.rs], r[in.rt]));
      break;
    case Opcode::read: {
      const auto& port = st_.feedback[in.fn];
      if (port.valid) {
        r[in.rd] = port.value.i;
        r[in.rs] = port.value.q;
      } else {
        r[in.rd] = kFeedbackInvalid;
        r[in.rs] = kFeedbackInvalid;
        record({st_.cycle, in.fn, EventKind::read_invalid, in.fn, 0}, true);
      }
      advance(cfg_.instr_cycles);
      break;
    }
    case Opcode::pulse:
    case Opcode::trig:
      if (!dispatch(in)) return false;
      advance(cfg_.instr_cycles);
      break;
  }
  ++executed_;
  ++trace_.instructions;
  record({issue, 0, EventKind::instruction, static_cast<std::int64_t>(issue_pc), static_cast<std::int64_t>(in.op)},
         false);
  return true;
}

void Simulator::advance_to(Cycle horizon) {
  for (;;) {
    const auto ev = next_event();
    const bool proc_ready = !st_.halted && st_.cycle < horizon;
    if (ev && ev->first < horizon && (!proc_ready || ev->first <= st_.cycle)) {
      fire_event(ev->second);
      continue;
    }
    if (proc_ready) {
      execute_one();
      continue;
    }
    break;
  }
  if (horizon != kForever) now_ = horizon;
}

std::vector<TraceEvent> Simulator::step_clock(Cycle n) {
  const std::size_t begin = trace_.events.size();
  advance_to(n > kForever - now_ ? kForever : now_ + n);
  return {trace_.events.begin() + static_cast<std::ptrdiff_t>(begin), trace_.events.end()};
}

ExecutionTrace Simulator::run() {
  advance_to(kForever);
  trace_.end_cycle = now_;
  if (trace_.processor_cycle == 0) trace_.processor_cycle = st_.cycle;
  return trace_;
}

ExecutionTrace run(const isa::Program& program, Peripherals& io, const Config& cfg) {
  Simulator sim(program, io, cfg);
  return sim.run();
}

}  // namespace qctrl::tproc
