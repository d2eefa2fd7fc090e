#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qctrl/siggen.hpp"

namespace qctrl::siggen {

std::uint32_t freq_to_word(double f_hz, double fs_hz) {
  if (!(fs_hz > 0)) throw Error("sample rate must be positive");
  if (!(f_hz >= 0 && f_hz < fs_hz)) throw Error("frequency must be in [0, fs)");
  const double w = std::nearbyint(f_hz / fs_hz * 4294967296.0);
  return static_cast<std::uint32_t>(static_cast<std::uint64_t>(w) & 0xFFFFFFFFull);
}

double word_to_freq(std::uint32_t word, double fs_hz) { return static_cast<double>(word) * fs_hz / 4294967296.0; }

std::uint32_t phase_at_cycle(std::uint32_t freq_word, Cycle cycle, std::uint32_t phase_word, const MasterClock& clock) {
  return phase_of(freq_word, (cycle - clock.epoch) * kDacSamplesPerCycle, phase_word);
}

EnvelopeTable::EnvelopeTable(std::string name, std::size_t capacity) : name_(std::move(name)), capacity_(capacity) {}

EnvelopeHandle EnvelopeTable::load(std::span<const IQSample> samples) {
  if (data_.size() + samples.size() > capacity_) {
    throw Error("envelope table '" + name_ + "' full: " + std::to_string(data_.size()) + " + " +
                std::to_string(samples.size()) + " > " + std::to_string(capacity_));
  }
  EnvelopeHandle h{static_cast<std::uint32_t>(data_.size()), static_cast<std::uint32_t>(samples.size())};
  data_.insert(data_.end(), samples.begin(), samples.end());
  return h;
}

std::span<const IQSample> EnvelopeTable::view(EnvelopeHandle h) const {
  if (std::size_t{h.start} + h.length > data_.size()) throw Error("envelope handle out of range");
  return {data_.data() + h.start, h.length};
}

std::vector<IQSample> gaussian(std::size_t length, double sigma_samples, std::int16_t amplitude) {
  if (!(sigma_samples > 0)) throw Error("gaussian sigma must be positive");
  std::vector<IQSample> out(length);
  const double c = (static_cast<double>(length) - 1.0) / 2.0;
  for (std::size_t k = 0; k < length; ++k) {
    const double x = (static_cast<double>(k) - c) / sigma_samples;
    out[k].i = static_cast<std::int16_t>(std::lround(amplitude * std::exp(-0.5 * x * x)));
  }
  return out;
}

std::vector<IQSample> gaussian_for(double duration_s, double sigma_s, double fs_hz, std::int16_t amplitude) {
  const auto length = static_cast<std::size_t>(std::llround(duration_s * fs_hz));
  const double sigma = static_cast<double>(std::llround(sigma_s * fs_hz));
  return gaussian(length, sigma, amplitude);
}

std::vector<IQSample> flat(std::size_t length, std::int16_t i, std::int16_t q) {
  return std::vector<IQSample>(length, IQSample{i, q});
}

void check_command(const PulseCommand& cmd, const EnvelopeTable& table) {
  if (cmd.length == 0) throw Error("pulse on channel " + std::to_string(cmd.channel) + " has zero length");
  if (cmd.outsel > 3) throw Error("outsel must be 0-3");
  const bool uses_env = cmd.outsel == 0 || cmd.outsel == 2;
  if (uses_env && std::uint64_t{cmd.start_addr} + cmd.length > table.size()) {
    throw Error("pulse envelope [" + std::to_string(cmd.start_addr) + ", +" + std::to_string(cmd.length) +
                ") exceeds table '" + table.name() + "' of " + std::to_string(table.size()) + " samples");
  }
}

namespace {

// Pulse samples [k, k+m) that lie inside one envelope pass.
void render_pass(const PulseCommand& cmd, const IQSample* env, std::uint64_t n_abs, std::size_t m, IQSample* out,
                 IQSample* scratch) {
  const auto& K = simd::kernels();
  switch (cmd.outsel) {
    case 0:
      K.dds(simd::DdsLut::standard(), phase_of(cmd.freq_word, n_abs, cmd.phase_word), cmd.freq_word, scratch, m);
      K.mix(env, scratch, out, m);
      break;
    case 1:
      K.dds(simd::DdsLut::standard(), phase_of(cmd.freq_word, n_abs, cmd.phase_word), cmd.freq_word, out, m);
      break;
    case 2:
      std::copy(env, env + m, out);
      break;
    default:
      std::fill(out, out + m, IQSample{});
      return;
  }
  K.scale(out, cmd.gain, m);
}

}  // namespace

void render_span(const PulseCommand& cmd, const EnvelopeTable& table, Cycle start, const MasterClock& clock,
                 std::uint64_t first, std::size_t count, IQSample* out) {
  check_command(cmd, table);
  const std::uint64_t n0 = (start - clock.epoch) * kDacSamplesPerCycle;
  const IQSample* env = table.size() ? table.data() + cmd.start_addr : nullptr;
  const bool uses_env = cmd.outsel == 0 || cmd.outsel == 2;
  std::array<IQSample, 1024> scratch;
  std::uint64_t k = first;
  const std::uint64_t end = first + count;
  while (k < end) {
    if (!cmd.periodic && k >= cmd.length) {
      IQSample hold{};
      if (!cmd.stdsel_zero) {
        const std::uint64_t last = cmd.length - 1;
        render_pass(cmd, uses_env ? env + last : nullptr, n0 + last, 1, &hold, scratch.data());
      }
      std::fill(out + (k - first), out + count, hold);
      return;
    }
    const std::uint64_t pos = cmd.periodic ? k % cmd.length : k;
    const std::uint64_t m = std::min<std::uint64_t>({end - k, cmd.length - pos, scratch.size()});
    render_pass(cmd, uses_env ? env + pos : nullptr, n0 + k, static_cast<std::size_t>(m), out + (k - first),
                scratch.data());
    k += m;
  }
}

IQStream render(const PulseCommand& cmd, const EnvelopeTable& table, Cycle start, const MasterClock& clock) {
  IQStream s;
  s.start_cycle = start;
  s.sample_rate = kDacHz;
  s.data.resize(cmd.length);
  render_span(cmd, table, start, clock, 0, cmd.length, s.data.data());
  return s;
}

SignalGenerator::SignalGenerator(const EnvelopeTable& table, MasterClock clock) : table_(table), clock_(clock) {}

void SignalGenerator::play(const PulseCommand& cmd, Cycle at) {
  check_command(cmd, table_);
  if (!segs_.empty() && at < segs_.back().start) throw Error("pulses must arrive in time order");
  if (!segs_.empty() && at == segs_.back().start) {
    segs_.back().cmd = cmd;
    return;
  }
  segs_.push_back({at, cmd});
}

void SignalGenerator::render_samples(std::uint64_t first, std::size_t count, IQSample* out) const {
  std::fill(out, out + count, IQSample{});
  const std::uint64_t end = first + count;
  for (std::size_t j = 0; j < segs_.size(); ++j) {
    const std::uint64_t s0 = segs_[j].start * kDacSamplesPerCycle;
    const std::uint64_t s1 =
        j + 1 < segs_.size() ? segs_[j + 1].start * kDacSamplesPerCycle : std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t a = std::max(first, s0);
    const std::uint64_t b = std::min(end, s1);
    if (a >= b) continue;
    render_span(segs_[j].cmd, table_, segs_[j].start, clock_, a - s0, static_cast<std::size_t>(b - a), out + (a - first));
  }
}

std::vector<IQSample> SignalGenerator::render_samples(std::uint64_t first, std::size_t count) const {
  std::vector<IQSample> out(count);
  render_samples(first, count, out.data());
  return out;
}

void SignalGenerator::forget_before(Cycle cycle) {
  std::size_t keep = 0;
  while (keep + 1 < segs_.size() && segs_[keep + 1].start <= cycle) ++keep;
  segs_.erase(segs_.begin(), segs_.begin() + static_cast<std::ptrdiff_t>(keep));
}

void write_envelope_csv(const std::string& path, std::span<const IQSample> samples) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << "index,I,Q\n";
  for (std::size_t k = 0; k < samples.size(); ++k) f << k << ',' << samples[k].i << ',' << samples[k].q << '\n';
  if (!f) throw Error("write failed: " + path);
}

std::vector<IQSample> read_envelope_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  std::vector<IQSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line.rfind("index", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream is(line);
    long long idx = 0, i = 0, q = 0;
    if (!(is >> idx >> i >> q)) throw Error(path + ":" + std::to_string(line_no) + ": expected index,I,Q");
    if (idx != static_cast<long long>(out.size())) throw Error(path + ":" + std::to_string(line_no) + ": index out of order");
    if (i < INT16_MIN || i > INT16_MAX || q < INT16_MIN || q > INT16_MAX) {
      throw Error(path + ":" + std::to_string(line_no) + ": sample exceeds 16 bits");
    }
    out.push_back({static_cast<std::int16_t>(i), static_cast<std::int16_t>(q)});
  }
  return out;
}

void write_envelope_bin(const std::string& path, std::span<const IQSample> samples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  for (const auto& s : samples) {
    const std::uint16_t w[2] = {static_cast<std::uint16_t>(s.i), static_cast<std::uint16_t>(s.q)};
    for (std::uint16_t v : w) {
      const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
      f.write(b, 2);
    }
  }
  if (!f) throw Error("write failed: " + path);
}

std::vector<IQSample> read_envelope_bin(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw Error(path + ": size is not a whole number of I/Q pairs");
  std::vector<IQSample> out(bytes.size() / 4);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto i = static_cast<std::uint16_t>(bytes[4 * k] | (bytes[4 * k + 1] << 8));
    const auto q = static_cast<std::uint16_t>(bytes[4 * k + 2] | (bytes[4 * k + 3] << 8));
    out[k] = {static_cast<std::int16_t>(i), static_cast<std::int16_t>(q)};
  }
  return out;
}

}  // namespace qctrl::siggen
