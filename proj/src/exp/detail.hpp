#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qctrl/experiment.hpp"
#include "qctrl/isa.hpp"

namespace qctrl::exp::detail {

// Page 0 register map of the generated programs.
inline constexpr int kQubitA = 0;     // r0-r5 qubit pulse group
inline constexpr int kReadout = 6;    // r6-r11 readout tone group
inline constexpr int kTrig = 12;      // r12 window, r13 markers
inline constexpr int kShots = 14;
inline constexpr int kPoints = 15;
inline constexpr int kDelay = 16;
inline constexpr int kQubitB = 20;    // r20-r25 second qubit group
inline constexpr int kPhaseStep = 26;

inline constexpr std::uint32_t kOneShotFlags = isa::kFlagStdselZero;

inline Cycle cycles(double s) { return static_cast<Cycle>(std::llround(s * kFabricHz)); }
inline Cycle cycles_for_samples(std::uint64_t n) { return (n + kDacSamplesPerCycle - 1) / kDacSamplesPerCycle; }
inline std::int16_t gain_units(double g) {
  const long v = std::lround(g * 32767.0);
  if (v < -32768 || v > 32767) throw Error("gain " + std::to_string(g) + " is outside full scale");
  return static_cast<std::int16_t>(v);
}
/// Phase word for a phase (rad) as it should appear on the qubit; the
/// second Nyquist zone conjugates the tone.
std::uint32_t qubit_phase_word(double phase, int zone);

struct Group {
  std::uint32_t freq = 0, phase = 0, addr = 0, length = 0;
  std::int16_t gain = 0;
  std::uint32_t flags = kOneShotFlags;
};

class AsmText {
 public:
  void line(const std::string& s) { text_ += "  " + s + "\n"; }
  void label(const std::string& s) { text_ += s + ":\n"; }
  void comment(const std::string& s) { text_ += "; " + s + "\n"; }
  void regwi(int reg, std::int64_t value, int page = 0);
  void group(int base, const Group& g, int page = 0);
  void pulse(int ch, Cycle t, int base, int page = 0);
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

isa::Program parse_or_throw(const std::string& text);

/// Readout tone, trigger window and the fixed parts of a shot.
struct Common {
  std::uint32_t ro_word = 0;
  Cycle ro_cycles = 0;
  Cycle relax_cycles = 0;
  std::uint32_t env_length = 0;
  Cycle pulse_cycles = 0;
  std::uint32_t qubit_word = 0;
  std::int16_t pi_units = 0;
};

Common common_of(const ExperimentConfig& cfg);
std::vector<IQSample> envelope_of(const ExperimentConfig& cfg);
void emit_readout_setup(AsmText& a, const ExperimentConfig& cfg, const Common& c);
/// PULSE + TRIG at the current offset, then waits out the window.
void emit_measure(AsmText& a, const ExperimentConfig& cfg, const Common& c);

/// Runs fn(0..n-1) on up to `workers` threads; rethrows the lowest-index
/// failure.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// Noise-free centroids of the configured readout tone.
std::pair<std::complex<double>, std::complex<double>> centroids(const ExperimentConfig& cfg);
double population(std::complex<double> v, std::complex<double> g, std::complex<double> e);

}  // namespace qctrl::exp::detail
