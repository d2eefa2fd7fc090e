#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "qctrl/fixed_point.hpp"
#include "qctrl/readout.hpp"

namespace qctrl::readout {

namespace {

const std::vector<std::int32_t>& default_taps() {
  static const std::vector<std::int32_t> taps = [] {
    const std::int32_t half[32] = {-62,    -117,   -189,   -244,   -235,   -109,  186,  680,   1355,   2128,  2841,
                                   3268,   3145,   2220,   323,    -2564,  -6236, -10236, -13853, -16188, -16254,
                                   -13131, -6136,  5022,   20120,  38374,  58473, 78701,  97146,  111938, 121510,
                                   124824};
    std::vector<std::int32_t> t(63);
    for (int k = 0; k < 32; ++k) {
      t[k] = half[k];
      t[62 - k] = half[k];
    }
    return t;
  }();
  return taps;
}

}  // namespace

DecimationFilter::DecimationFilter() : DecimationFilter(default_taps(), 20) {}

DecimationFilter::DecimationFilter(std::vector<std::int32_t> taps, int shift) : fir_(std::move(taps), shift, kDecimation) {
  const auto& t = fir_.taps();
  if (t.size() != 63) throw Error("decimation filter needs 63 taps");
  for (std::size_t k = 0; k < t.size() / 2; ++k) {
    if (t[k] != t[t.size() - 1 - k]) throw Error("decimation filter taps must be symmetric");
  }
}

const DecimationFilter& DecimationFilter::standard() {
  static const DecimationFilter f;
  return f;
}

std::size_t decimated_length(std::size_t input_length) {
  return input_length < kSettleSamples ? 0 : (input_length - kSettleSamples) / kDecimation;
}

std::vector<IQSample> decimate(std::span<const IQSample> in, const DecimationFilter& filter) {
  std::vector<IQSample> out(decimated_length(in.size()));
  if (!out.empty()) simd::kernels().fir_decimate(filter.kernel(), in.data() + 1, out.data(), out.size());
  return out;
}

namespace {

template <class T>
std::vector<IQSample> downconvert_impl(std::span<const T> x, std::int64_t first, const DownconvertConfig& cfg,
                                       const MasterClock& clock) {
  std::vector<IQSample> out(x.size());
  if (cfg.bypass) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      if constexpr (std::is_same_v<T, IQSample>) {
        out[k] = x[k];
      } else {
        out[k] = {x[k], 0};
      }
    }
    return out;
  }
  const auto& K = simd::kernels();
  const auto n0 = static_cast<std::uint64_t>(first - static_cast<std::int64_t>(clock.epoch) * kAdcSamplesPerCycle);
  std::array<IQSample, 1024> lo;
  for (std::size_t k = 0; k < x.size(); k += lo.size()) {
    const std::size_t m = std::min(lo.size(), x.size() - k);
    const auto ph = static_cast<std::uint32_t>(std::uint64_t{cfg.freq_word} * (n0 + k) + cfg.phase_word);
    K.dds(simd::DdsLut::standard(), ph, cfg.freq_word, lo.data(), m);
    if constexpr (std::is_same_v<T, IQSample>) {
      K.mix_conj(x.data() + k, lo.data(), out.data() + k, m);
    } else {
      K.mix_real_conj(x.data() + k, lo.data(), out.data() + k, m);
    }
  }
  return out;
}

}  // namespace

std::vector<IQSample> downconvert(std::span<const std::int16_t> x, std::int64_t first, const DownconvertConfig& cfg,
                                  const MasterClock& clock) {
  return downconvert_impl(x, first, cfg, clock);
}

std::vector<IQSample> downconvert(std::span<const IQSample> x, std::int64_t first, const DownconvertConfig& cfg,
                                  const MasterClock& clock) {
  return downconvert_impl(x, first, cfg, clock);
}

IQPair AvgEntry::mean() const {
  if (count == 0) throw Error("average of an empty window");
  return {static_cast<std::int32_t>(fx::div_round(sum_i, count)), static_cast<std::int32_t>(fx::div_round(sum_q, count))};
}

AvgBuffer::AvgBuffer(std::size_t capacity) : ring_(capacity) {
  if (capacity == 0) throw Error("average buffer capacity must be positive");
}

void AvgBuffer::push(const AvgEntry& e) {
  ring_[total_ % ring_.size()] = e;
  ++total_;
}

void AvgBuffer::clear() {
  total_ = 0;
  std::fill(ring_.begin(), ring_.end(), AvgEntry{});
}

const AvgEntry& AvgBuffer::at(std::uint64_t index) const {
  if (index >= total_) {
    throw Error("average buffer index " + std::to_string(index) + " beyond write pointer " + std::to_string(total_));
  }
  if (index < first_index()) throw Error("average buffer index " + std::to_string(index) + " was overwritten");
  return ring_[index % ring_.size()];
}

std::vector<AvgEntry> AvgBuffer::read(std::uint64_t begin, std::uint64_t end) const {
  if (begin > end) throw Error("average buffer range is reversed");
  if (end > total_) {
    throw Error("average buffer range end " + std::to_string(end) + " beyond write pointer " + std::to_string(total_));
  }
  std::vector<AvgEntry> out;
  out.reserve(end - begin);
  for (std::uint64_t k = begin; k < end; ++k) out.push_back(at(k));
  return out;
}

ReadoutChannel::ReadoutChannel(ReadoutConfig cfg, MasterClock clock, const DecimationFilter& filter)
    : cfg_(cfg), clock_(clock), filter_(filter), avg_(cfg.avg_capacity) {}

std::pair<std::int64_t, std::int64_t> ReadoutChannel::input_range(const TriggerCommand& trig) {
  const auto s = static_cast<std::int64_t>(trig.start) * kAdcSamplesPerCycle;
  return {s - static_cast<std::int64_t>(kSettleSamples), s + std::int64_t{trig.window} * kAdcSamplesPerCycle};
}

void ReadoutChannel::set_frequency(std::uint32_t freq_word, std::uint32_t phase_word) {
  cfg_.ddc.freq_word = freq_word;
  cfg_.ddc.phase_word = phase_word;
}

template <class T>
IQPair ReadoutChannel::capture_impl(const TriggerCommand& trig, std::span<const T> adc, std::int64_t first) {
  if (trig.window == 0) throw Error("readout window must be at least one sample");
  const auto [lo, hi] = input_range(trig);
  if (first > lo || first + static_cast<std::int64_t>(adc.size()) < hi) {
    throw Error("capture input does not cover the trigger window");
  }
  const auto sub = adc.subspan(static_cast<std::size_t>(lo - first), static_cast<std::size_t>(hi - lo));
  const auto base = downconvert(sub, lo, cfg_.ddc, clock_);
  const auto dec = decimate(base, filter_);
  return record(trig, dec);
}

IQPair ReadoutChannel::capture(const TriggerCommand& trig, std::span<const std::int16_t> adc, std::int64_t first) {
  return capture_impl(trig, adc, first);
}

IQPair ReadoutChannel::capture(const TriggerCommand& trig, std::span<const IQSample> adc, std::int64_t first) {
  return capture_impl(trig, adc, first);
}

IQPair ReadoutChannel::record(const TriggerCommand& trig, std::span<const IQSample> decimated) {
  if (decimated.size() != trig.window) throw Error("decimated window length does not match the trigger");
  std::int64_t si = 0, sq = 0;
  for (const auto& s : decimated) {
    si += s.i;
    sq += s.q;
  }
  if (cfg_.keep_raw) {
    raw_.start = trig.start;
    raw_.samples.assign(decimated.begin(), decimated.end());
  }
  return record_sums(trig, si, sq);
}

IQPair ReadoutChannel::record_sums(const TriggerCommand& trig, std::int64_t sum_i, std::int64_t sum_q) {
  if (trig.window == 0) throw Error("readout window must be at least one sample");
  AvgEntry e{sum_i, sum_q, trig.window, trig.start};
  avg_.push(e);
  feedback_ = e.mean();
  return *feedback_;
}

void write_avg_csv(const std::string& path, const AvgBuffer& buf) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << "trigger_index,I,Q,n_samples\n";
  for (std::uint64_t k = buf.first_index(); k < buf.total(); ++k) {
    const auto& e = buf.at(k);
    f << k << ',' << e.sum_i << ',' << e.sum_q << ',' << e.count << '\n';
  }
  if (!f) throw Error("write failed: " + path);
}

std::vector<AvgEntry> read_avg_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  std::vector<AvgEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line.rfind("trigger_index", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream is(line);
    std::uint64_t idx = 0;
    AvgEntry e;
    if (!(is >> idx >> e.sum_i >> e.sum_q >> e.count)) {
      throw Error(path + ":" + std::to_string(line_no) + ": expected trigger_index,I,Q,n_samples");
    }
    out.push_back(e);
  }
  return out;
}

namespace {

void put32(std::ofstream& f, std::int64_t v) {
  if (v < INT32_MIN || v > INT32_MAX) throw Error("accumulation does not fit 32 bits");
  const auto u = static_cast<std::uint32_t>(static_cast<std::int32_t>(v));
  const char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8), static_cast<char>(u >> 16), static_cast<char>(u >> 24)};
  f.write(b, 4);
}

}  // namespace

void write_avg_bin(const std::string& path, const AvgBuffer& buf) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  for (std::uint64_t k = buf.first_index(); k < buf.total(); ++k) {
    const auto& e = buf.at(k);
    put32(f, e.sum_i);
    put32(f, e.sum_q);
    put32(f, e.count);
  }
  if (!f) throw Error("write failed: " + path);
}

std::vector<AvgEntry> read_avg_bin(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (b.size() % 12 != 0) throw Error(path + ": size is not a whole number of entries");
  auto get = [&](std::size_t off) {
    return static_cast<std::int32_t>(std::uint32_t{b[off]} | std::uint32_t{b[off + 1]} << 8 |
                                     std::uint32_t{b[off + 2]} << 16 | std::uint32_t{b[off + 3]} << 24);
  };
  std::vector<AvgEntry> out(b.size() / 12);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].sum_i = get(12 * k);
    out[k].sum_q = get(12 * k + 4);
    out[k].count = static_cast<std::uint32_t>(get(12 * k + 8));
  }
  return out;
}

void write_raw_bin(const std::string& path, const RawBuffer& raw) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  for (const auto& s : raw.samples) {
    for (std::int16_t v : {s.i, s.q}) {
      const auto u = static_cast<std::uint16_t>(v);
      const char b[2] = {static_cast<char>(u), static_cast<char>(u >> 8)};
      f.write(b, 2);
    }
  }
  if (!f) throw Error("write failed: " + path);
}

}  // namespace qctrl::readout
