#pragma once

// Signal generator: envelope memory, the 32-bit DDS and pulse rendering.
// DDS phase is a function of absolute sample time, so every pulse at a
// given frequency word continues the phase of one oscillator that has been
// running since the master clock epoch.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qctrl/commands.hpp"
#include "qctrl/simd.hpp"
#include "qctrl/types.hpp"

namespace qctrl::siggen {

inline constexpr std::size_t kDefaultEnvelopeCapacity = std::size_t{1} << 14;

std::uint32_t freq_to_word(double f_hz, double fs_hz = kDacHz);
double word_to_freq(std::uint32_t word, double fs_hz = kDacHz);

/// (w * n + phase_word) mod 2^32 for absolute sample index n.
constexpr std::uint32_t phase_of(std::uint32_t freq_word, std::uint64_t sample, std::uint32_t phase_word) {
  const std::uint64_t n = sample & 0xFFFFFFFFull;
  return static_cast<std::uint32_t>((std::uint64_t{freq_word} * n + phase_word) & 0xFFFFFFFFull);
}

/// Phase at the first DAC sample of `cycle`.
std::uint32_t phase_at_cycle(std::uint32_t freq_word, Cycle cycle, std::uint32_t phase_word, const MasterClock& clock);

struct EnvelopeHandle {
  std::uint32_t start = 0;
  std::uint32_t length = 0;
};

class EnvelopeTable {
 public:
  explicit EnvelopeTable(std::string name = "envelopes", std::size_t capacity = kDefaultEnvelopeCapacity);

  /// Appends samples and returns where they landed.
  EnvelopeHandle load(std::span<const IQSample> samples);
  void clear() {
    data_.clear();
    ++generation_;
  }
  /// Bumped by clear(); loads only append.
  std::uint64_t generation() const { return generation_; }

  const std::string& name() const { return name_; }
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const IQSample* data() const { return data_.data(); }
  std::span<const IQSample> view(EnvelopeHandle h) const;

 private:
  std::string name_;
  std::size_t capacity_;
  std::vector<IQSample> data_;
  std::uint64_t generation_ = 0;
};

/// Gaussian envelope on the I component, centered in the window.
std::vector<IQSample> gaussian(std::size_t length, double sigma_samples, std::int16_t amplitude = 32767);
/// Gaussian from durations; both are rounded to whole samples first.
std::vector<IQSample> gaussian_for(double duration_s, double sigma_s, double fs_hz = kDacHz,
                                   std::int16_t amplitude = 32767);
std::vector<IQSample> flat(std::size_t length, std::int16_t i = 32767, std::int16_t q = 0);

struct IQStream {
  Cycle start_cycle = 0;
  double sample_rate = kDacHz;
  std::vector<IQSample> data;
};

/// Samples [first, first+count) relative to the pulse start, including the
/// post-pulse hold (stdsel=0) or zero (stdsel=1) for one-shot pulses.
void render_span(const PulseCommand& cmd, const EnvelopeTable& table, Cycle start, const MasterClock& clock,
                 std::uint64_t first, std::size_t count, IQSample* out);

/// One pass of the pulse.
IQStream render(const PulseCommand& cmd, const EnvelopeTable& table, Cycle start, const MasterClock& clock = {});

/// Throws if the command cannot be rendered from `table`.
void check_command(const PulseCommand& cmd, const EnvelopeTable& table);

/// Continuous output of one generator channel. A new command preempts
/// whatever the channel was playing.
class SignalGenerator {
 public:
  struct Segment {
    Cycle start;
    PulseCommand cmd;
  };

  SignalGenerator(const EnvelopeTable& table, MasterClock clock = {});

  void play(const PulseCommand& cmd, Cycle at);
  /// Absolute DAC samples [first, first+count), counted from cycle 0.
  void render_samples(std::uint64_t first, std::size_t count, IQSample* out) const;
  std::vector<IQSample> render_samples(std::uint64_t first, std::size_t count) const;

  /// Drops segments that end before `cycle`.
  void forget_before(Cycle cycle);
  const std::vector<Segment>& segments() const { return segs_; }
  const MasterClock& clock() const { return clock_; }

 private:
  const EnvelopeTable& table_;
  MasterClock clock_;
  std::vector<Segment> segs_;
};

void write_envelope_csv(const std::string& path, std::span<const IQSample> samples);
std::vector<IQSample> read_envelope_csv(const std::string& path);
void write_envelope_bin(const std::string& path, std::span<const IQSample> samples);
std::vector<IQSample> read_envelope_bin(const std::string& path);

}  // namespace qctrl::siggen
