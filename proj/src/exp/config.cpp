#include <cmath>
#include <cstdio>

#include "qctrl/experiment.hpp"
#include "qctrl/siggen.hpp"

namespace qctrl::exp {

namespace {

constexpr std::pair<Kind, std::string_view> kKinds[] = {
    {Kind::res_spec, "res_spec"}, {Kind::qubit_spec, "qubit_spec"},   {Kind::rabi, "rabi"},
    {Kind::ramsey, "ramsey"},     {Kind::t1, "t1"},                   {Kind::single_shot, "single_shot"},
    {Kind::rb, "rb"},             {Kind::feedback_latency, "feedback_latency"},
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view kind_name(Kind k) {
  for (const auto& [kind, name] : kKinds) {
    if (kind == k) return name;
  }
  return "?";
}

std::optional<Kind> parse_kind(std::string_view name) {
  for (const auto& [kind, n] : kKinds) {
    if (n == name) return kind;
  }
  return std::nullopt;
}

ExperimentConfig default_config(Kind k) {
  ExperimentConfig c;
  c.kind = k;
  switch (k) {
    case Kind::res_spec:
      c.sweep = {"readout_freq", 6.198e9, 6.202e9, 81};
      c.shots = 200;
      break;
    case Kind::qubit_spec:
      c.sweep = {"qubit_freq", 4.742e9, 4.744e9, 81};
      c.shots = 200;
      break;
    case Kind::rabi:
      c.sweep = {"gain", 0.0, 1.0, 51};
      c.shots = 500;
      break;
    case Kind::ramsey:
      c.sweep = {"delay", 0.0, 300e-6, 151};
      c.shots = 1000;
      break;
    case Kind::t1:
      c.sweep = {"delay", 0.0, 500e-6, 51};
      c.shots = 1000;
      break;
    case Kind::single_shot:
      c.sweep = {"prep", 0.0, 1.0, 2};
      c.shots = 5000;
      c.keep_shots = true;
      break;
    case Kind::rb:
      c.sweep = {"length", 1, 800, 7};
      c.shots = 3000;
      break;
    case Kind::feedback_latency:
      c.sweep = {"none", 0, 0, 1};
      c.shots = 1;
      break;
  }
  return c;
}

ExperimentConfig config_from(const KeyValues& kv, ExperimentConfig c) {
  if (auto k = kv.str("kind")) {
    auto parsed = parse_kind(*k);
    if (!parsed) throw Error(kv.origin() + ": unknown experiment kind '" + *k + "'");
    if (*parsed != c.kind) {
      throw Error(kv.origin() + ": config is for '" + *k + "', running '" + std::string(kind_name(c.kind)) + "'");
    }
  }
  if (auto v = kv.str("sweep_param")) c.sweep.param = *v;
  c.sweep.start = kv.num_or("sweep_start", c.sweep.start);
  c.sweep.stop = kv.num_or("sweep_stop", c.sweep.stop);
  c.sweep.points = static_cast<int>(kv.int_or("sweep_points", c.sweep.points));
  c.shots = static_cast<int>(kv.int_or("shots", c.shots));
  c.seed = static_cast<std::uint64_t>(kv.int_or("seed", static_cast<std::int64_t>(c.seed)));
  c.workers = static_cast<int>(kv.int_or("workers", c.workers));
  c.segment_points = static_cast<int>(kv.int_or("segment_points", c.segment_points));
  c.keep_shots = kv.flag_or("keep_shots", c.keep_shots);

  c.readout_freq = kv.num_or("readout_freq", c.readout_freq);
  c.readout_gain = kv.num_or("readout_gain", c.readout_gain);
  c.readout_length = kv.num_or("readout_length", c.readout_length);
  c.relax = kv.num_or("relax", c.relax);
  c.qubit_freq = kv.num_or("qubit_freq", c.qubit_freq);
  c.pulse_length = kv.num_or("pulse_length", c.pulse_length);
  c.pulse_sigma = kv.num_or("pulse_sigma", c.pulse_sigma);
  if (auto v = kv.num("pi_gain")) c.pi_gain = *v;
  c.spec_length = kv.num_or("spec_length", c.spec_length);
  if (auto v = kv.num("spec_gain")) c.spec_gain = *v;
  c.ramsey_freq = kv.num_or("ramsey_freq", c.ramsey_freq);
  c.rb_sequences = static_cast<int>(kv.int_or("rb_sequences", c.rb_sequences));
  if (auto v = kv.list("rb_lengths")) {
    c.rb_lengths.clear();
    for (double m : *v) {
      if (m != std::floor(m)) throw Error(kv.origin() + ": rb_lengths must be integers");
      c.rb_lengths.push_back(static_cast<int>(m));
    }
  }
  c.gate_slot = static_cast<Cycle>(kv.int_or("gate_slot", static_cast<std::int64_t>(c.gate_slot)));
  c.z_slot = kv.flag_or("z_slot", c.z_slot);
  c.feedback_window = kv.num_or("feedback_window", c.feedback_window);

  c.hw.qubit_channel = static_cast<int>(kv.int_or("qubit_channel", c.hw.qubit_channel));
  c.hw.readout_channel = static_cast<int>(kv.int_or("readout_channel", c.hw.readout_channel));
  c.hw.adc_channel = static_cast<int>(kv.int_or("adc_channel", c.hw.adc_channel));
  c.hw.qubit_nyquist_zone = static_cast<int>(kv.int_or("qubit_nyquist_zone", c.hw.qubit_nyquist_zone));
  c.hw.readout_lo_hz = kv.num_or("readout_lo", c.hw.readout_lo_hz);
  c.hw.loopback = kv.flag_or("loopback", c.hw.loopback);
  c.hw.loopback_dac = static_cast<int>(kv.int_or("loopback_dac", c.hw.loopback_dac));

  // device.<key> entries carry the device parameters.
  KeyValues dev;
  for (const auto& [key, e] : kv.entries()) {
    if (key.rfind("device.", 0) == 0) {
      dev.set(key.substr(7), e.value);
      e.used = true;
    }
  }
  c.device = device::params_from(dev, c.device);
  if (auto u = dev.unused(); !u.empty()) throw Error(kv.origin() + ": unknown device key 'device." + u.front() + "'");
  if (auto u = kv.unused(); !u.empty()) throw Error(kv.origin() + ": unknown experiment key '" + u.front() + "'");
  validate(c);
  return c;
}

std::map<std::string, std::string> config_entries(const ExperimentConfig& c) {
  std::map<std::string, std::string> m;
  m["kind"] = std::string(kind_name(c.kind));
  m["sweep_param"] = c.sweep.param;
  m["sweep_start"] = num(c.sweep.start);
  m["sweep_stop"] = num(c.sweep.stop);
  m["sweep_points"] = std::to_string(c.sweep.points);
  m["shots"] = std::to_string(c.shots);
  m["seed"] = std::to_string(c.seed);
  m["segment_points"] = std::to_string(c.segment_points);
  m["keep_shots"] = c.keep_shots ? "true" : "false";
  m["readout_freq"] = num(c.readout_freq);
  m["readout_gain"] = num(c.readout_gain);
  m["readout_length"] = num(c.readout_length);
  m["relax"] = num(c.relax);
  m["qubit_freq"] = num(c.qubit_freq);
  m["pulse_length"] = num(c.pulse_length);
  m["pulse_sigma"] = num(c.pulse_sigma);
  if (c.pi_gain) m["pi_gain"] = num(*c.pi_gain);
  m["spec_length"] = num(c.spec_length);
  if (c.spec_gain) m["spec_gain"] = num(*c.spec_gain);
  m["ramsey_freq"] = num(c.ramsey_freq);
  m["rb_sequences"] = std::to_string(c.rb_sequences);
  std::string lengths;
  for (int l : c.rb_lengths) lengths += (lengths.empty() ? "" : ",") + std::to_string(l);
  m["rb_lengths"] = lengths;
  m["gate_slot"] = std::to_string(c.gate_slot);
  m["z_slot"] = c.z_slot ? "true" : "false";
  m["feedback_window"] = num(c.feedback_window);
  m["qubit_channel"] = std::to_string(c.hw.qubit_channel);
  m["readout_channel"] = std::to_string(c.hw.readout_channel);
  m["adc_channel"] = std::to_string(c.hw.adc_channel);
  m["qubit_nyquist_zone"] = std::to_string(c.hw.qubit_nyquist_zone);
  m["readout_lo"] = num(c.hw.readout_lo_hz);
  m["loopback"] = c.hw.loopback ? "true" : "false";
  m["loopback_dac"] = std::to_string(c.hw.loopback_dac);
  const auto dev = KeyValues::parse(device::params_to_text(c.device));
  for (const auto& [key, e] : dev.entries()) m["device." + key] = e.value;
  return m;
}

void validate(const ExperimentConfig& c) {
  c.device.validate();
  if (c.shots < 1) throw Error("shots must be at least 1");
  if (c.workers < 1) throw Error("workers must be at least 1");
  if (c.segment_points < 1) throw Error("segment_points must be at least 1");
  if (c.kind != Kind::rb && c.kind != Kind::feedback_latency) {
    const auto& s = c.sweep;
    if (s.points < 1) throw Error("sweep '" + s.param + "' needs at least one point");
    if (s.points > 1 && !(s.start < s.stop)) throw Error("sweep '" + s.param + "' needs start < stop");
    if (!std::isfinite(s.start) || !std::isfinite(s.stop)) throw Error("sweep bounds must be finite");
  }
  if (c.kind == Kind::rb) {
    if (c.rb_sequences < 1) throw Error("rb_sequences must be at least 1");
    if (c.rb_lengths.size() < 3) throw Error("rb needs at least three sequence lengths");
    for (int m : c.rb_lengths) {
      if (m < 1) throw Error("rb sequence lengths must be positive");
    }
  }
  if (c.readout_length <= 0 || c.readout_length * kFabricHz > 65535) {
    throw Error("readout_length must give a window of 1..65535 cycles");
  }
  if (c.readout_gain < 0 || c.readout_gain > 1) throw Error("readout_gain must be in [0, 1]");
  if (c.relax < 0) throw Error("relax must be non-negative");
  if (c.pulse_length <= 0 || c.pulse_sigma <= 0) throw Error("pulse length and sigma must be positive");
  if (c.spec_length <= 0) throw Error("spec_length must be positive");
  if (double(c.gate_slot) < c.pulse_length * kFabricHz) throw Error("gate_slot is shorter than the gate pulse");
  if (c.feedback_window <= 0) throw Error("feedback_window must be positive");
}

double calibrated_pi_gain(const ExperimentConfig& c) {
  if (c.pi_gain) return *c.pi_gain;
  const auto env = siggen::gaussian_for(c.pulse_length, c.pulse_sigma);
  double a = 0;
  for (const auto& s : env) a += std::abs(std::complex<double>(s.i, s.q)) / 32767.0;
  a /= kDacHz;
  // Rotation angle is 2 pi * rate * gain * area.
  const double g = 1.0 / (2.0 * c.device.rabi_rate_per_gain * a);
  if (!(g > 0 && g <= 1)) throw Error("the configured pulse cannot reach a pi rotation at full scale");
  return g;
}

}  // namespace qctrl::exp
