#include <cmath>
#include <numbers>

#include "qctrl/machine.hpp"

namespace qctrl {

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;
constexpr double kTurn = 4294967296.0;

void check_zone(int zone) {
  if (zone != 1 && zone != 2) throw Error("qubit Nyquist zone must be 1 or 2");
}

double seconds(Cycle c) { return double(c) / kFabricHz; }

}  // namespace

double drive_frequency(std::uint32_t word, int zone) {
  check_zone(zone);
  const double f = siggen::word_to_freq(word, kDacHz);
  return zone == 1 ? f : kDacHz - f;
}

std::uint32_t drive_word(double f_hz, int zone) {
  check_zone(zone);
  return siggen::freq_to_word(zone == 1 ? f_hz : kDacHz - f_hz, kDacHz);
}

Machine::Machine(HardwareConfig hw, device::TransmonParams params, std::uint64_t seed)
    : hw_(hw), table_("envelopes", hw.envelope_capacity), qubit_(params, seed) {
  check_zone(hw_.qubit_nyquist_zone);
  for (int ch : {hw_.qubit_channel, hw_.readout_channel, hw_.adc_channel, hw_.loopback_dac}) {
    if (ch < 0 || ch >= kNumChannels) throw Error("hardware channel " + std::to_string(ch) + " out of range");
  }
  if (hw_.qubit_channel == hw_.readout_channel && !hw_.loopback) {
    throw Error("qubit and readout tones need separate generator channels");
  }
  for (int ch = 0; ch < kNumChannels; ++ch) {
    readout::ReadoutConfig rc;
    rc.avg_capacity = hw_.avg_capacity;
    rc.keep_raw = false;
    readouts_.push_back(std::make_unique<readout::ReadoutChannel>(rc));
    gens_.emplace_back(table_);
  }
}

readout::ReadoutChannel& Machine::readout(int ch) {
  if (ch < 0 || ch >= kNumChannels) throw Error("readout channel out of range");
  return *readouts_[static_cast<std::size_t>(ch)];
}

const Machine::EnvelopeSums& Machine::sums_of(std::uint32_t addr, std::uint32_t length) const {
  if (sums_generation_ != table_.generation()) {
    sums_.clear();
    sums_generation_ = table_.generation();
  }
  const auto key = std::make_pair(addr, length);
  if (auto it = sums_.find(key); it != sums_.end()) return it->second;
  EnvelopeSums e;
  for (const auto& v : table_.view({addr, length})) {
    const std::complex<double> c(v.i, v.q);
    const double a = std::abs(c) / 32767.0;
    e.abs_sum += a;
    e.sq_sum += a * a;
    e.sum += c;
  }
  return sums_.emplace(key, e).first->second;
}

device::DrivePulse Machine::drive_of(const PulseCommand& cmd, Cycle at) const {
  device::DrivePulse d;
  d.t_start = seconds(at);
  d.duration = double(cmd.length) / kDacHz;
  if (cmd.outsel == 3 || cmd.gain == 0 || cmd.length == 0) return d;
  const double g = double(cmd.gain) / 32767.0;
  double s1 = 0, s2 = 0;
  std::complex<double> sum;
  if (cmd.outsel == 1) {
    s1 = std::abs(g) * cmd.length;
    s2 = g * g * cmd.length;
  } else {
    const auto& e = sums_of(cmd.start_addr, cmd.length);
    s1 = std::abs(g) * e.abs_sum;
    s2 = g * g * e.sq_sum;
    sum = e.sum;
  }
  if (s1 == 0) return d;
  const double dt = 1.0 / kDacHz;
  d.area = s1 * dt;
  d.t_eff = s1 * s1 / s2 * dt;
  const auto& p = qubit_.params();
  double env_phase = std::arg(sum);
  if (g < 0) env_phase += std::numbers::pi;
  if (cmd.outsel == 2) {
    // Baseband envelope: no carrier, nowhere near the qubit.
    d.detuning_hz = -p.f_q;
    d.phase = env_phase - kTwoPi * p.f_q * d.t_start;
    return d;
  }
  const int zone = hw_.qubit_nyquist_zone;
  const double fd = drive_frequency(cmd.freq_word, zone);
  d.detuning_hz = fd - p.f_q;
  // The image in the second zone is the conjugate tone: phase word and
  // envelope phase enter with the opposite sign.
  const double word_phase = kTwoPi * double(cmd.phase_word) / kTurn;
  const double sgn = zone == 1 ? 1.0 : -1.0;
  d.phase = std::remainder(kTwoPi * std::fmod(d.detuning_hz * d.t_start, 1.0) + sgn * (word_phase + env_phase), kTwoPi);
  return d;
}

void Machine::pulse(const PulseCommand& cmd, Cycle at) {
  if (hw_.loopback) {
    siggen::check_command(cmd, table_);
    gens_[cmd.channel].play(cmd, at);
    return;
  }
  if (cmd.channel == hw_.qubit_channel) {
    qubit_.drive(drive_of(cmd, at));
    ++stats_.drives;
  } else if (cmd.channel == hw_.readout_channel) {
    siggen::check_command(cmd, table_);
    ro_ = Playing{cmd, at};
    ++stats_.readout_pulses;
  }
}

void Machine::trigger(const TriggerCommand& trig) {
  ++stats_.triggers;
  if (hw_.loopback || trig.channel != hw_.adc_channel) return;
  device::ReadoutProbe probe;
  probe.window_s = seconds(trig.window);
  probe.amplitude = 0;
  if (ro_) {
    const auto& c = ro_->cmd;
    const Cycle len = (Cycle{c.length} + kDacSamplesPerCycle - 1) / kDacSamplesPerCycle;
    const bool playing = ro_->at <= trig.start && (c.periodic || trig.start < ro_->at + len);
    if (playing && c.outsel != 3) {
      double env = 1.0;
      if (c.outsel != 1) {
        env = sums_of(c.start_addr, c.length).abs_sum / c.length;
      }
      probe.amplitude = env * double(c.gain) / 32767.0;
      probe.freq_hz = hw_.readout_lo_hz + siggen::word_to_freq(c.freq_word, kDacHz);
    }
  }
  if (probe.amplitude == 0) {
    ++stats_.silent_triggers;
    probe.freq_hz = qubit_.params().f_ro;
  }
  qubit_.advance_to(seconds(trig.start));
  const auto m = qubit_.measure(probe);
  const double w = trig.window;
  auto& ch = readout(trig.channel);
  const IQPair mean =
      ch.record_sums(trig, std::llround(m.iq.real() * w), std::llround(m.iq.imag() * w));
  shots_.push_back({trig.start, mean, m.iq, m.excited});
}

std::optional<IQPair> Machine::capture_complete(const TriggerCommand& trig, Cycle) {
  auto& ch = readout(trig.channel);
  if (hw_.loopback) {
    const auto [lo, hi] = readout::ReadoutChannel::input_range(trig);
    if (lo < 0) throw Error("loopback capture starts before the master clock origin");
    const auto& gen = gens_[static_cast<std::size_t>(hw_.loopback_dac)];
    const auto dac = gen.render_samples(static_cast<std::uint64_t>(2 * lo), static_cast<std::size_t>(2 * (hi - lo)));
    std::vector<std::int16_t> adc(static_cast<std::size_t>(hi - lo));
    for (std::size_t k = 0; k < adc.size(); ++k) adc[k] = dac[2 * k].i;
    const IQPair mean = ch.capture(trig, adc, lo);
    shots_.push_back({trig.start, mean, {double(mean.i), double(mean.q)}, false});
    if (trig.start > 64) gens_[static_cast<std::size_t>(hw_.loopback_dac)].forget_before(trig.start - 64);
  }
  return ch.feedback();
}

}  // namespace qctrl
