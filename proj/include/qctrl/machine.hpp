#pragma once

// The board as the processor sees it: signal generator channels, readout
// channels and, behind them, either the mock transmon or a DAC-to-ADC
// loopback cable.
//
// Device mode does not synthesize samples. A qubit-channel pulse becomes a
// DrivePulse from its envelope, gain, frequency word and phase word; a
// trigger measures the device with the readout pulse that is playing and
// feeds the result to the readout channel as an accumulation. Loopback
// mode renders the generator output and runs the full DDC/FIR chain.

#include <array>
#include <map>
#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "qctrl/device.hpp"
#include "qctrl/readout.hpp"
#include "qctrl/siggen.hpp"
#include "qctrl/tproc.hpp"

namespace qctrl {

struct HardwareConfig {
  int qubit_channel = 0;
  int readout_channel = 1;  // generator channel of the readout tone
  int adc_channel = 0;      // trigger / readout channel
  int qubit_nyquist_zone = 2;
  double readout_lo_hz = 6.1e9;  // external mixer, probe = LO + IF
  bool loopback = false;
  int loopback_dac = 1;  // generator channel wired to the ADC in loopback mode
  std::size_t envelope_capacity = siggen::kDefaultEnvelopeCapacity;
  std::size_t avg_capacity = readout::kDefaultAvgCapacity;
};

/// Physical frequency of a qubit-channel tone for a DDS word.
double drive_frequency(std::uint32_t word, int nyquist_zone);
/// DDS word that puts a tone at f_hz in the given Nyquist zone.
std::uint32_t drive_word(double f_hz, int nyquist_zone);

struct ShotRecord {
  Cycle trigger = 0;
  IQPair mean{};            // readout channel output (per decimated sample)
  std::complex<double> iq;  // same, unrounded (device mode only)
  bool excited = false;     // device outcome (device mode only)
};

struct MachineStats {
  std::uint64_t drives = 0;
  std::uint64_t readout_pulses = 0;
  std::uint64_t triggers = 0;
  std::uint64_t silent_triggers = 0;  // no readout tone was playing
};

class Machine final : public tproc::Peripherals {
 public:
  Machine(HardwareConfig hw, device::TransmonParams params, std::uint64_t seed);
  Machine(const Machine&) = delete;
  Machine& operator=(const Machine&) = delete;

  siggen::EnvelopeTable& envelopes() { return table_; }
  readout::ReadoutChannel& readout(int ch);
  device::Transmon& qubit() { return qubit_; }
  const HardwareConfig& hardware() const { return hw_; }

  void pulse(const PulseCommand& cmd, Cycle at) override;
  void trigger(const TriggerCommand& trig) override;
  std::optional<IQPair> capture_complete(const TriggerCommand& trig, Cycle at) override;

  const std::vector<ShotRecord>& shots() const { return shots_; }
  const MachineStats& stats() const { return stats_; }

  /// Builds the drive a qubit-channel command applies, starting at `at`.
  device::DrivePulse drive_of(const PulseCommand& cmd, Cycle at) const;

 private:
  struct Playing {
    PulseCommand cmd;
    Cycle at = 0;
  };
  struct EnvelopeSums {
    double abs_sum = 0;  // sum |v| / 32767
    double sq_sum = 0;   // sum |v|^2 / 32767^2
    std::complex<double> sum;
  };

  const EnvelopeSums& sums_of(std::uint32_t addr, std::uint32_t length) const;

  HardwareConfig hw_;
  siggen::EnvelopeTable table_;
  device::Transmon qubit_;
  std::vector<std::unique_ptr<readout::ReadoutChannel>> readouts_;
  std::vector<siggen::SignalGenerator> gens_;
  std::optional<Playing> ro_;
  std::vector<ShotRecord> shots_;
  MachineStats stats_;
  mutable std::map<std::pair<std::uint32_t, std::uint32_t>, EnvelopeSums> sums_;
  mutable std::uint64_t sums_generation_ = 0;
};

}  // namespace qctrl
