#include <functional>

#include "detail.hpp"
#include "qctrl/siggen.hpp"

namespace qctrl::exp {

namespace detail {

namespace {

std::int32_t as_register(std::int64_t v) { return static_cast<std::int32_t>(static_cast<std::uint32_t>(v)); }

}  // namespace

std::uint32_t qubit_phase_word(double phase, int zone) {
  const double turns = phase / (2 * 3.14159265358979323846);
  const auto w = static_cast<std::uint32_t>(static_cast<std::uint64_t>(std::llround(std::fmod(turns, 1.0) * 4294967296.0)));
  return zone == 2 ? static_cast<std::uint32_t>(0u - w) : w;
}

void AsmText::regwi(int reg, std::int64_t value, int page) {
  line("REGWI " + (page ? "p=" + std::to_string(page) + " " : std::string()) + "r" + std::to_string(reg) + ", " +
       std::to_string(as_register(value)));
}

void AsmText::group(int base, const Group& g, int page) {
  regwi(base + 0, g.freq, page);
  regwi(base + 1, g.phase, page);
  regwi(base + 2, g.addr, page);
  regwi(base + 3, g.length, page);
  regwi(base + 4, g.gain, page);
  regwi(base + 5, g.flags, page);
}

void AsmText::pulse(int ch, Cycle t, int base, int page) {
  line("PULSE ch=" + std::to_string(ch) + " t=" + std::to_string(t) + (page ? " p=" + std::to_string(page) : "") +
       " r=" + std::to_string(base));
}

isa::Program parse_or_throw(const std::string& text) {
  auto r = isa::parse_asm(text);
  if (!r.ok()) {
    std::string msg = "generated program does not assemble:";
    for (const auto& e : r.errors) msg += "\n  " + isa::format_error(e);
    throw Error(msg);
  }
  return std::move(*r.program);
}

Common common_of(const ExperimentConfig& cfg) {
  Common c;
  const double if_hz = cfg.readout_freq - cfg.hw.readout_lo_hz;
  if (!(if_hz > 0 && if_hz < kDacHz / 2)) throw Error("readout_freq must lie above readout_lo, within the DAC band");
  c.ro_word = siggen::freq_to_word(if_hz);
  c.ro_cycles = cycles(cfg.readout_length);
  c.relax_cycles = cycles(cfg.relax);
  c.env_length = static_cast<std::uint32_t>(siggen::gaussian_for(cfg.pulse_length, cfg.pulse_sigma).size());
  c.pulse_cycles = cycles_for_samples(c.env_length);
  c.qubit_word = drive_word(cfg.qubit_freq, cfg.hw.qubit_nyquist_zone);
  c.pi_units = gain_units(calibrated_pi_gain(cfg));
  return c;
}

std::vector<IQSample> envelope_of(const ExperimentConfig& cfg) {
  return siggen::gaussian_for(cfg.pulse_length, cfg.pulse_sigma);
}

void emit_readout_setup(AsmText& a, const ExperimentConfig& cfg, const Common& c) {
  Group ro;
  ro.freq = c.ro_word;
  ro.length = static_cast<std::uint32_t>(c.ro_cycles * kDacSamplesPerCycle);
  ro.gain = gain_units(cfg.readout_gain);
  ro.flags = 1 | kOneShotFlags;
  a.group(kReadout, ro);
  a.regwi(kTrig, static_cast<std::int64_t>(c.ro_cycles));
  a.regwi(kTrig + 1, 0);
}

void emit_measure(AsmText& a, const ExperimentConfig& cfg, const Common& c) {
  a.pulse(cfg.hw.readout_channel, 0, kReadout);
  a.line("TRIG ch=" + std::to_string(cfg.hw.adc_channel) + " t=0 r=" + std::to_string(kTrig));
  a.line("SYNCI " + std::to_string(c.ro_cycles));
}

}  // namespace detail

namespace {

using namespace detail;

// A register swept linearly, plus an optional second one moving in step.
struct Plan {
  int reg = -1;
  std::int64_t v0 = 0, step = 0;
  int reg2 = -1;
  std::int64_t v0_2 = 0, step2 = 0;
  std::function<double(std::int64_t)> x_of;
};

std::string_view expressible(Kind k) {
  switch (k) {
    case Kind::res_spec: return "readout_freq";
    case Kind::qubit_spec: return "qubit_freq";
    case Kind::rabi: return "gain";
    case Kind::ramsey:
    case Kind::t1: return "delay";
    case Kind::single_shot: return "prep";
    default: return "";
  }
}

std::int64_t step_of(const SweepSpec& s, double unit) {
  if (s.points < 2) return 0;
  const auto step = std::llround((s.stop - s.start) / (s.points - 1) * unit);
  if (step == 0) throw Error("sweep step of '" + s.param + "' rounds to zero register units");
  return step;
}

Plan plan_for(const ExperimentConfig& cfg, const Common& c) {
  const auto& s = cfg.sweep;
  const auto want = expressible(cfg.kind);
  if (want.empty()) throw Error(std::string(kind_name(cfg.kind)) + " is not a swept experiment");
  if (s.param != want) {
    throw Error("sweep parameter '" + s.param + "' is not register-expressible for " +
                std::string(kind_name(cfg.kind)) + " (expressible: " + std::string(want) + ")");
  }
  constexpr double kWordsPerHz = 4294967296.0 / kDacHz;
  const int zone = cfg.hw.qubit_nyquist_zone;
  const double lo = cfg.hw.readout_lo_hz;
  Plan p;
  switch (cfg.kind) {
    case Kind::res_spec: {
      p.reg = kReadout;
      if (!(s.start - lo > 0)) throw Error("readout_freq sweep must stay above readout_lo");
      p.v0 = siggen::freq_to_word(s.start - lo);
      p.step = step_of(s, kWordsPerHz);
      p.x_of = [lo](std::int64_t v) { return lo + siggen::word_to_freq(static_cast<std::uint32_t>(v)); };
      const double top = s.start - lo + p.step * (s.points - 1) / kWordsPerHz;
      if (top >= kDacHz / 2) throw Error("readout_freq sweep leaves the DAC band");
      break;
    }
    case Kind::qubit_spec: {
      p.reg = kQubitA;
      p.v0 = drive_word(s.start, zone);
      p.step = step_of(s, kWordsPerHz) * (zone == 2 ? -1 : 1);
      p.x_of = [zone](std::int64_t v) { return drive_frequency(static_cast<std::uint32_t>(v), zone); };
      break;
    }
    case Kind::rabi: {
      p.reg = kQubitA + 4;
      p.v0 = gain_units(s.start);
      p.step = step_of(s, 32767.0);
      // Rounding the step up may push the last point past full scale.
      if (p.v0 + p.step * (s.points - 1) > 32767 && s.stop <= 1.0) --p.step;
      gain_units(double(p.v0 + p.step * (s.points - 1)) / 32767.0);
      p.x_of = [](std::int64_t v) { return double(v) / 32767.0; };
      break;
    }
    case Kind::single_shot: {
      if (s.points != 2) throw Error("sweep 'prep' has exactly two points (ground, excited)");
      p.reg = kQubitA + 4;
      p.v0 = 0;
      p.step = c.pi_units;
      p.x_of = [pi = c.pi_units](std::int64_t v) { return v == pi ? 1.0 : 0.0; };
      break;
    }
    case Kind::t1:
    case Kind::ramsey: {
      if (s.start < 0) throw Error("delay sweep must start at or after zero");
      p.reg = kDelay;
      p.v0 = static_cast<std::int64_t>(cycles(s.start));
      p.step = step_of(s, kFabricHz);
      p.x_of = [](std::int64_t v) { return double(v) / kFabricHz; };
      if (cfg.kind == Kind::ramsey) {
        const double w = 2 * 3.14159265358979323846 * cfg.ramsey_freq;
        p.reg2 = kQubitB + 1;
        p.v0_2 = qubit_phase_word(w * double(p.v0) / kFabricHz, zone);
        p.step2 = qubit_phase_word(w * double(p.step) / kFabricHz, zone);
      }
      break;
    }
    default: break;
  }
  return p;
}

}  // namespace

Compiled compile_segment(const ExperimentConfig& cfg, int first, int count) {
  validate(cfg);
  if (first < 0 || count < 1 || first + count > cfg.sweep.points) {
    throw Error("segment [" + std::to_string(first) + ", +" + std::to_string(count) + ") outside the sweep of " +
                std::to_string(cfg.sweep.points) + " points");
  }
  const Common c = common_of(cfg);
  const Plan plan = plan_for(cfg, c);
  const std::int64_t v_first = plan.v0 + plan.step * first;
  const std::int64_t v2_first = plan.v0_2 + plan.step2 * first;

  Compiled out;
  out.envelope = envelope_of(cfg);
  out.first_point = first;
  out.points = count;
  out.shots_per_point = cfg.shots;
  for (int k = 0; k < count; ++k) out.x.push_back(plan.x_of(v_first + plan.step * k));

  AsmText a;
  a.comment(std::string(kind_name(cfg.kind)) + " points " + std::to_string(first) + ".." +
            std::to_string(first + count - 1) + " x " + std::to_string(cfg.shots) + " shots");
  emit_readout_setup(a, cfg, c);
  if (cfg.kind == Kind::res_spec) a.regwi(kReadout, v_first);

  Group q;
  q.freq = c.qubit_word;
  q.length = c.env_length;
  q.gain = c.pi_units;
  Cycle prep_cycles = c.pulse_cycles;
  switch (cfg.kind) {
    case Kind::rabi:
    case Kind::single_shot: q.gain = static_cast<std::int16_t>(v_first); break;
    case Kind::ramsey: q.gain = gain_units(calibrated_pi_gain(cfg) / 2); break;
    case Kind::qubit_spec: {
      q.freq = static_cast<std::uint32_t>(v_first);
      const auto n = static_cast<std::uint64_t>(std::llround(cfg.spec_length * kDacHz));
      q.length = static_cast<std::uint32_t>(n);
      q.flags = 1 | kOneShotFlags;
      q.gain = gain_units(cfg.spec_gain.value_or(1.0 / (2.0 * cfg.device.rabi_rate_per_gain * cfg.spec_length)));
      prep_cycles = cycles_for_samples(n);
      break;
    }
    default: break;
  }
  const bool has_qubit = cfg.kind != Kind::res_spec;
  if (has_qubit) a.group(kQubitA, q);
  if (cfg.kind == Kind::ramsey) {
    Group b = q;
    b.phase = static_cast<std::uint32_t>(v2_first);
    a.group(kQubitB, b);
  }
  if (plan.reg == kDelay) a.regwi(kDelay, v_first);

  const int qch = cfg.hw.qubit_channel;
  if (count > 1) {
    a.regwi(kPoints, count);
    a.label("point");
  }
  if (cfg.shots > 1) {
    a.regwi(kShots, cfg.shots);
    a.label("shot");
  }
  if (c.relax_cycles) a.line("SYNCI " + std::to_string(c.relax_cycles));
  if (has_qubit) {
    a.pulse(qch, 0, kQubitA);
    a.line("SYNCI " + std::to_string(prep_cycles));
  }
  if (plan.reg == kDelay) a.line("SYNCI r" + std::to_string(kDelay));
  if (cfg.kind == Kind::ramsey) {
    a.pulse(qch, 0, kQubitB);
    a.line("SYNCI " + std::to_string(c.pulse_cycles));
  }
  emit_measure(a, cfg, c);
  if (cfg.shots > 1) a.line("LOOPNZ r" + std::to_string(kShots) + ", shot");
  if (count > 1) {
    const auto r = "r" + std::to_string(plan.reg);
    a.line("MATH add " + r + ", " + r + ", " + std::to_string(static_cast<std::int32_t>(plan.step)));
    if (plan.reg2 >= 0) {
      const auto r2 = "r" + std::to_string(plan.reg2);
      a.line("MATH add " + r2 + ", " + r2 + ", " +
             std::to_string(static_cast<std::int32_t>(static_cast<std::uint32_t>(plan.step2))));
    }
    a.line("LOOPNZ r" + std::to_string(kPoints) + ", point");
  }
  a.line("END");
  out.text = a.str();
  out.program = parse_or_throw(out.text);
  return out;
}

Compiled compile_experiment(const ExperimentConfig& cfg) { return compile_segment(cfg, 0, cfg.sweep.points); }

}  // namespace qctrl::exp
