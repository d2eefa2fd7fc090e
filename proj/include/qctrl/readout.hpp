#pragma once

// Readout chain: downconversion against the ADC-rate DDS, 63-tap low-pass
// FIR, decimation by 8 and triggered averaging.
//
// Decimated sample m of a stream is produced from input samples
// [8m+1, 8m+63]. When the stream starts 56 samples (7 fabric cycles) before
// cycle S, decimated sample m belongs to cycle S+m: its newest input is the
// last ADC sample of that cycle. Group delay is 31 ADC samples.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qctrl/commands.hpp"
#include "qctrl/simd.hpp"
#include "qctrl/types.hpp"

namespace qctrl::readout {

inline constexpr int kDecimation = 8;
inline constexpr std::size_t kSettleSamples = 56;
inline constexpr std::size_t kDefaultAvgCapacity = 1024;

class DecimationFilter {
 public:
  /// Default: 63-tap equiripple low-pass, 18-bit taps summing to 2^20,
  /// passband to 76.8 MHz and >= 60 dB from 307.2 MHz at 3.072 GS/s.
  DecimationFilter();
  DecimationFilter(std::vector<std::int32_t> taps, int shift);

  const std::vector<std::int32_t>& taps() const { return fir_.taps(); }
  int shift() const { return fir_.shift(); }
  std::size_t group_delay() const { return (taps().size() - 1) / 2; }
  const simd::FirKernel& kernel() const { return fir_; }

  static const DecimationFilter& standard();

 private:
  simd::FirKernel fir_;
};

/// floor((L - 56) / 8) for L >= 56, else 0.
std::size_t decimated_length(std::size_t input_length);

std::vector<IQSample> decimate(std::span<const IQSample> in, const DecimationFilter& filter = DecimationFilter::standard());

struct DownconvertConfig {
  std::uint32_t freq_word = 0;
  std::uint32_t phase_word = 0;
  bool bypass = false;
};

/// Input sample j sits at absolute ADC index first + j; the oscillator
/// phase there is freq_word * (first + j - 8*epoch) + phase_word.
std::vector<IQSample> downconvert(std::span<const std::int16_t> x, std::int64_t first, const DownconvertConfig& cfg,
                                  const MasterClock& clock = {});
std::vector<IQSample> downconvert(std::span<const IQSample> x, std::int64_t first, const DownconvertConfig& cfg,
                                  const MasterClock& clock = {});

struct AvgEntry {
  std::int64_t sum_i = 0;
  std::int64_t sum_q = 0;
  std::uint32_t count = 0;
  Cycle start = 0;

  IQPair mean() const;
  friend bool operator==(const AvgEntry&, const AvgEntry&) = default;
};

/// Circular store of per-trigger accumulations, addressed by the absolute
/// trigger index since the last clear.
class AvgBuffer {
 public:
  explicit AvgBuffer(std::size_t capacity = kDefaultAvgCapacity);

  void push(const AvgEntry& e);
  void clear();

  std::size_t capacity() const { return ring_.size(); }
  std::uint64_t total() const { return total_; }
  /// Oldest index still held.
  std::uint64_t first_index() const { return total_ > ring_.size() ? total_ - ring_.size() : 0; }
  bool wrapped() const { return total_ > ring_.size(); }

  const AvgEntry& at(std::uint64_t index) const;
  /// Copies entries [begin, end).
  std::vector<AvgEntry> read(std::uint64_t begin, std::uint64_t end) const;
  std::vector<AvgEntry> read_all() const { return read(first_index(), total_); }

 private:
  std::vector<AvgEntry> ring_;
  std::uint64_t total_ = 0;
};

struct RawBuffer {
  Cycle start = 0;
  std::vector<IQSample> samples;
};

struct ReadoutConfig {
  DownconvertConfig ddc;
  std::size_t avg_capacity = kDefaultAvgCapacity;
  bool keep_raw = true;
};

/// One readout channel: trigger in, average and raw window out.
class ReadoutChannel {
 public:
  explicit ReadoutChannel(ReadoutConfig cfg = {}, MasterClock clock = {},
                          const DecimationFilter& filter = DecimationFilter::standard());

  /// ADC index range [first, last) the capture of `trig` needs.
  static std::pair<std::int64_t, std::int64_t> input_range(const TriggerCommand& trig);

  /// `adc` must cover input_range(trig) starting at index `first`.
  IQPair capture(const TriggerCommand& trig, std::span<const std::int16_t> adc, std::int64_t first);
  IQPair capture(const TriggerCommand& trig, std::span<const IQSample> adc, std::int64_t first);
  /// Records an accumulation computed elsewhere (e.g. an analytic front end).
  IQPair record(const TriggerCommand& trig, std::span<const IQSample> decimated);
  IQPair record_sums(const TriggerCommand& trig, std::int64_t sum_i, std::int64_t sum_q);

  const AvgBuffer& avg() const { return avg_; }
  AvgBuffer& avg() { return avg_; }
  const RawBuffer& raw() const { return raw_; }
  const ReadoutConfig& config() const { return cfg_; }
  void set_frequency(std::uint32_t freq_word, std::uint32_t phase_word = 0);
  std::optional<IQPair> feedback() const { return feedback_; }

 private:
  template <class T>
  IQPair capture_impl(const TriggerCommand& trig, std::span<const T> adc, std::int64_t first);

  ReadoutConfig cfg_;
  MasterClock clock_;
  const DecimationFilter& filter_;
  AvgBuffer avg_;
  RawBuffer raw_;
  std::optional<IQPair> feedback_;
};

void write_avg_csv(const std::string& path, const AvgBuffer& buf);
std::vector<AvgEntry> read_avg_csv(const std::string& path);
/// Per entry: int32 sum_i, int32 sum_q, int32 count, little-endian.
void write_avg_bin(const std::string& path, const AvgBuffer& buf);
std::vector<AvgEntry> read_avg_bin(const std::string& path);
void write_raw_bin(const std::string& path, const RawBuffer& raw);

}  // namespace qctrl::readout
