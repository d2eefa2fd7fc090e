#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qctrl {

/// A master-clock timestamp in fabric cycles.
using Cycle = std::uint64_t;

inline constexpr int kTimeBits = 48;
inline constexpr Cycle kTimeLimit = Cycle{1} << kTimeBits;

inline constexpr double kFabricHz = 384e6;
inline constexpr int kDacSamplesPerCycle = 16;
inline constexpr int kAdcSamplesPerCycle = 8;
inline constexpr double kDacHz = kFabricHz * kDacSamplesPerCycle;  // 6.144 GS/s
inline constexpr double kAdcHz = kFabricHz * kAdcSamplesPerCycle;  // 3.072 GS/s

inline constexpr int kNumChannels = 8;

/// One complex fixed-point sample, 16-bit I and Q.
struct IQSample {
  std::int16_t i = 0;
  std::int16_t q = 0;

  friend bool operator==(const IQSample&, const IQSample&) = default;
};
static_assert(sizeof(IQSample) == 4, "IQSample must pack into one 32-bit lane");

/// Averaged readout value as presented on the feedback port.
struct IQPair {
  std::int32_t i = 0;
  std::int32_t q = 0;

  friend bool operator==(const IQPair&, const IQPair&) = default;
};

/// Shared reference for the DDS phase origin. Generators that share one
/// epoch produce mutually phase-locked tones.
struct MasterClock {
  Cycle epoch = 0;
  double fabric_hz = kFabricHz;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qctrl
