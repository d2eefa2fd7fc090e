#pragma once

#include <cstdint>

#include "qctrl/types.hpp"

namespace qctrl {

/// Everything a signal generator needs to play one pulse.
struct PulseCommand {
  std::uint32_t start_addr = 0;
  std::uint32_t length = 0;  // envelope samples
  std::uint32_t freq_word = 0;
  std::uint32_t phase_word = 0;
  std::int16_t gain = 0;     // Q15
  std::uint8_t outsel = 0;   // 0 env*dds, 1 dds, 2 env, 3 zero
  bool periodic = false;     // mode=1: repeat the envelope until the next command
  bool stdsel_zero = false;  // stdsel=1: output 0 after the pulse instead of holding
  std::uint8_t channel = 0;

  friend bool operator==(const PulseCommand&, const PulseCommand&) = default;
};

/// A readout trigger: capture `window` decimated samples starting at `start`.
struct TriggerCommand {
  Cycle start = 0;
  std::uint32_t window = 0;
  std::uint8_t channel = 0;
  std::uint32_t markers = 0;

  friend bool operator==(const TriggerCommand&, const TriggerCommand&) = default;
};

}  // namespace qctrl
