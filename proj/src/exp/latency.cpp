#include "detail.hpp"
#include "qctrl/analog.hpp"

namespace qctrl::exp {

using namespace detail;

LatencyReport run_feedback_latency(const ExperimentConfig& cfg) {
  validate(cfg);
  const Cycle window = std::max<Cycle>(1, cycles(cfg.feedback_window));
  const Common c = common_of(cfg);
  AsmText a;
  a.comment("feedback latency: trigger, wait for the average, branch on it, pulse");
  Group ro;
  ro.freq = c.ro_word;
  ro.length = static_cast<std::uint32_t>(window * kDacSamplesPerCycle);
  ro.gain = gain_units(cfg.readout_gain);
  ro.flags = 1 | kOneShotFlags;
  a.group(kReadout, ro);
  a.regwi(kTrig, static_cast<std::int64_t>(window));
  a.regwi(kTrig + 1, 0);
  Group out;
  out.freq = c.qubit_word;
  out.length = c.env_length;
  out.gain = c.pi_units;
  a.group(kQubitA, out);
  a.regwi(30, tproc::kFeedbackInvalid);
  a.line("SYNC 1000");
  a.pulse(cfg.hw.readout_channel, 0, kReadout);
  a.line("TRIG ch=" + std::to_string(cfg.hw.adc_channel) + " t=0 r=" + std::to_string(kTrig));
  a.line("WAIT " + std::to_string(window));
  a.line("READ r28, r29, " + std::to_string(cfg.hw.adc_channel));
  a.line("CONDJ r28, ne, r30, valid");
  a.line("END");
  a.label("valid");
  // As soon as possible: the tag is already in the past.
  a.pulse(cfg.hw.qubit_channel, 0, kQubitA);
  a.line("END");

  Compiled comp;
  comp.text = a.str();
  comp.program = parse_or_throw(comp.text);
  comp.envelope = envelope_of(cfg);
  const auto run = execute(cfg, comp, cfg.seed, tproc::TraceLevel::all);
  const auto& ev = run.trace.events;

  std::optional<Cycle> trig_at, valid_at, condj_at, after_condj, pulse_dispatch, pulse_fire;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    const auto& e = ev[k];
    if (e.kind == tproc::EventKind::trigger && !trig_at) trig_at = e.cycle;
    if (e.kind == tproc::EventKind::capture && !valid_at) valid_at = e.cycle;
    if (e.kind == tproc::EventKind::instruction) {
      if (condj_at && !after_condj) after_condj = e.cycle;
      if (e.b == static_cast<std::int64_t>(isa::Opcode::condj)) condj_at = e.cycle;
    }
    if (e.kind == tproc::EventKind::pulse && e.channel == cfg.hw.qubit_channel) {
      pulse_fire = e.cycle;
      pulse_dispatch = static_cast<Cycle>(e.b);
    }
  }
  if (!trig_at || !valid_at || !condj_at || !after_condj || !pulse_fire) {
    throw Error("feedback latency program did not take the feedback branch");
  }

  LatencyReport r;
  r.trigger_to_valid = *valid_at - *trig_at;
  r.cond_jump = *after_condj - *condj_at;
  r.next_pulse = *pulse_fire - *pulse_dispatch;
  r.cond_jump_ns = double(r.cond_jump) / kFabricHz * 1e9;
  r.next_pulse_ns = double(r.next_pulse) / kFabricHz * 1e9;
  const analog::LatencyConfig paths[3] = {{4.096e9, 6.144e9, false, false},
                                          {4.096e9, 6.144e9, true, false},
                                          {4.096e9, 6.144e9, true, true}};
  for (int k = 0; k < 3; ++k) r.converter_ns[k] = analog::latency_of(paths[k]);
  r.total_min_ns = r.converter_ns[0] + r.cond_jump_ns + r.next_pulse_ns;
  r.total_max_ns = r.converter_ns[2] + r.cond_jump_ns + r.next_pulse_ns;
  return r;
}

}  // namespace qctrl::exp
