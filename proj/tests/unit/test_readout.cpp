#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "qctrl/fixed_point.hpp"
#include "qctrl/readout.hpp"
#include "qctrl/siggen.hpp"
#include "support/spectral.hpp"

using namespace qctrl;
using namespace qctrl::readout;

namespace {

std::vector<IQSample> random_iq(std::size_t n, std::mt19937& rng, int amp = 32767) {
  std::uniform_int_distribution<int> d(-amp, amp);
  std::vector<IQSample> v(n);
  for (auto& s : v) s = {static_cast<std::int16_t>(d(rng)), static_cast<std::int16_t>(d(rng))};
  return v;
}

std::vector<IQSample> complex_tone(std::size_t n, double turns_per_sample, double amp, double phase0 = 0) {
  std::vector<IQSample> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = 2 * std::numbers::pi * (turns_per_sample * double(k)) + phase0;
    v[k] = {static_cast<std::int16_t>(std::lround(amp * std::cos(a))), static_cast<std::int16_t>(std::lround(amp * std::sin(a)))};
  }
  return v;
}

double rms(const std::vector<IQSample>& v) {
  double s = 0;
  for (auto x : v) s += double(x.i) * x.i + double(x.q) * x.q;
  return std::sqrt(s / double(v.size()));
}

// Loopback stream: every other DAC sample of a generator, i.e. ADC index n
// sees DAC index 2n.
std::vector<IQSample> loopback_adc(const siggen::SignalGenerator& gen, std::int64_t first, std::size_t count) {
  std::vector<IQSample> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::int64_t n = first + static_cast<std::int64_t>(k);
    if (n >= 0) out[k] = gen.render_samples(static_cast<std::uint64_t>(2 * n), 1)[0];
  }
  return out;
}

}  // namespace

TEST_CASE("decimation filter is symmetric with unit dc gain") {
  const auto& f = DecimationFilter::standard();
  const auto& h = f.taps();
  CHECK(h.size() == 63);
  CHECK(f.group_delay() == 31);
  for (std::size_t k = 0; k < h.size(); ++k) CHECK(h[k] == h[h.size() - 1 - k]);
  CHECK(std::accumulate(h.begin(), h.end(), std::int64_t{0}) == (std::int64_t{1} << f.shift()));
  for (auto t : h) CHECK(std::abs(t) < (1 << 17));
  for (std::int16_t v : {std::int16_t{0}, std::int16_t{1}, std::int16_t{-1}, std::int16_t{12345}, std::int16_t{-32768}, std::int16_t{32767}}) {
    std::vector<IQSample> in(56 + 8 * 10, IQSample{v, static_cast<std::int16_t>(-(v + 1))});
    auto out = decimate(in);
    REQUIRE(out.size() == 10);
    for (auto s : out) CHECK(s == IQSample{v, static_cast<std::int16_t>(-(v + 1))});
  }
  std::vector<std::int32_t> skew(63, 1);
  skew[0] = 2;
  CHECK_THROWS_AS(DecimationFilter(skew, 20), Error);
  CHECK_THROWS_AS(DecimationFilter(std::vector<std::int32_t>(61, 1), 20), Error);
}

TEST_CASE("filter response from its taps meets the stopband design") {
  const auto& h = DecimationFilter::standard().taps();
  const std::size_t n = 1 << 15;
  std::vector<testing::cplx> x(n);
  for (std::size_t k = 0; k < h.size(); ++k) x[k] = double(h[k]) / 1048576.0;
  auto H = testing::fft(x);
  double pass_dev = 0, stop_max = 0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = kAdcHz * double(k) / double(n);
    const double mag = std::abs(H[k]);
    if (f <= 76.8e6) pass_dev = std::max(pass_dev, std::abs(20 * std::log10(mag)));
    if (f >= 307.2e6) stop_max = std::max(stop_max, mag);
  }
  CHECK(pass_dev < 0.05);
  CHECK(20 * std::log10(stop_max) <= -60.0);
}

TEST_CASE("decimated length counting") {
  CHECK(decimated_length(0) == 0);
  CHECK(decimated_length(55) == 0);
  CHECK(decimated_length(63) == 0);
  CHECK(decimated_length(64) == 1);
  CHECK(decimated_length(71) == 1);
  CHECK(decimated_length(72) == 2);
  for (std::size_t L = 0; L < 500; ++L) CHECK(decimate(std::vector<IQSample>(L)).size() == (L < 56 ? 0 : (L - 56) / 8));
  // 3 us at 3.072 GS/s is 9216 ADC samples and 1152 decimated ones
  const auto window = static_cast<std::uint32_t>(std::llround(3e-6 * kFabricHz));
  CHECK(window == 1152);
  TriggerCommand t{1000, window, 0, 0};
  auto [lo, hi] = ReadoutChannel::input_range(t);
  CHECK(hi - lo == 56 + 9216);
  CHECK(decimated_length(static_cast<std::size_t>(hi - lo)) == 1152);
}

TEST_CASE("decimated sample m is the filter over inputs 8m+1..8m+63") {
  std::mt19937 rng(3);
  auto x = random_iq(56 + 8 * 40, rng, 20000);
  auto y = decimate(x);
  const auto& h = DecimationFilter::standard().taps();
  for (std::size_t m = 0; m < y.size(); ++m) {
    std::int64_t ai = 0, aq = 0;
    for (std::size_t k = 0; k < 63; ++k) {
      ai += std::int64_t{h[k]} * x[8 * m + 63 - k].i;
      aq += std::int64_t{h[k]} * x[8 * m + 63 - k].q;
    }
    REQUIRE(y[m] == IQSample{fx::saturate16(fx::round_shift(ai, 20)), fx::saturate16(fx::round_shift(aq, 20))});
  }
}

TEST_CASE("tones beyond the transition band are suppressed") {
  const std::size_t n = 56 + 8 * 2048;
  for (double f : {310e6, 400e6, 700e6, 1200e6, -350e6, -1500e6}) {
    auto y = decimate(complex_tone(n, f / kAdcHz, 32000));
    CHECK(20 * std::log10(std::max(rms(y), 1e-9) / 32000.0) <= -60.0);
  }
  for (double f : {0.0, 30e6, -60e6, 76e6}) {
    auto y = decimate(complex_tone(n, f / kAdcHz, 32000));
    CHECK(rms(y) == doctest::Approx(32000).epsilon(0.01));
  }
}

TEST_CASE("downconversion modes") {
  std::mt19937 rng(5);
  auto x = random_iq(1000, rng);
  DownconvertConfig bypass;
  bypass.bypass = true;
  bypass.freq_word = 0x12345;
  CHECK(downconvert(x, 17, bypass) == x);
  std::vector<std::int16_t> real(100);
  for (std::size_t k = 0; k < real.size(); ++k) real[k] = static_cast<std::int16_t>(k * 300 - 15000);
  auto rb = downconvert(real, 0, bypass);
  for (std::size_t k = 0; k < real.size(); ++k) CHECK(rb[k] == IQSample{real[k], 0});

  // word 0: multiplication by the unit DC phasor (32767, 0)
  DownconvertConfig zero;
  auto z = downconvert(x, -100, zero);
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(z[k] == IQSample{fx::mul_q15(x[k].i, 32767), fx::mul_q15(x[k].q, 32767)});
}

TEST_CASE("real-input tone mixes to half amplitude at dc") {
  const std::uint32_t w = siggen::freq_to_word(500e6, kAdcHz);
  const double A = 30000;
  const double phi = 0.7;
  const std::int64_t first = 4096;
  std::vector<std::int16_t> x(56 + 8 * 512);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double turns = siggen::word_to_freq(w, kAdcHz) / kAdcHz * double(first + std::int64_t(k));
    x[k] = static_cast<std::int16_t>(std::lround(A * std::cos(2 * std::numbers::pi * turns + phi)));
  }
  DownconvertConfig cfg;
  cfg.freq_word = w;
  auto y = decimate(downconvert(x, first, cfg));
  // cos(a) e^{-ja} = 1/2 + e^{-2ja}/2; the second term is at 1 GHz
  const std::complex<double> expect = std::polar(A / 2 * 32767.0 / 32768.0, phi);
  for (auto s : y) {
    CHECK(std::abs(std::complex<double>(s.i, s.q) - expect) < 6.0);
  }
}

TEST_CASE("average buffer addressing and wrap") {
  AvgBuffer b(4);
  CHECK_FALSE(b.wrapped());
  CHECK_THROWS_AS(b.at(0), Error);
  for (int k = 0; k < 3; ++k) b.push({k, -k, 1, Cycle(k)});
  auto r = b.read(0, 3);
  REQUIRE(r.size() == 3);
  CHECK(r[2].sum_i == 2);
  CHECK_THROWS_AS(b.read(0, 4), Error);
  for (int k = 3; k < 5; ++k) b.push({k, -k, 1, Cycle(k)});
  CHECK(b.wrapped());
  CHECK(b.first_index() == 1);
  CHECK_THROWS_AS(b.at(0), Error);
  CHECK(b.at(4).sum_i == 4);
  CHECK(b.read_all().size() == 4);
  b.clear();
  CHECK(b.total() == 0);
  CHECK_THROWS_AS(AvgBuffer(0), Error);
  CHECK((AvgEntry{7, -7, 2, 0}.mean() == IQPair{4, -4}));
  CHECK((AvgEntry{5, -5, 2, 0}.mean() == IQPair{2, -2}));
  CHECK_THROWS_AS(AvgEntry{}.mean(), Error);
}

TEST_CASE("capture of a constant window averages exactly") {
  ReadoutConfig cfg;
  cfg.ddc.bypass = true;
  ReadoutChannel ch(cfg);
  TriggerCommand t{200, 100, 0, 0};
  auto [lo, hi] = ReadoutChannel::input_range(t);
  std::vector<IQSample> in(static_cast<std::size_t>(hi - lo), IQSample{-1234, 567});
  CHECK(ch.capture(t, in, lo) == IQPair{-1234, 567});
  CHECK(ch.raw().samples.size() == 100);
  CHECK(ch.avg().at(0).count == 100);
  CHECK(ch.feedback() == IQPair{-1234, 567});
  TriggerCommand bad{200, 0, 0, 0};
  CHECK_THROWS_AS(ch.capture(bad, in, lo), Error);
  CHECK_THROWS_AS(ch.capture(t, std::span<const IQSample>(in).subspan(1), lo + 1), Error);
}

TEST_CASE("raw window is aligned to the trigger cycle and consistent with the average") {
  std::mt19937 rng(12);
  ReadoutConfig cfg;
  cfg.ddc.bypass = true;
  ReadoutChannel ch(cfg);
  const std::int64_t first = 0;
  auto x = random_iq(8 * 3000, rng, 30000);
  const auto& h = DecimationFilter::standard().taps();
  for (int trial = 0; trial < 30; ++trial) {
    TriggerCommand t{Cycle(10 + rng() % 2000), std::uint32_t(1 + rng() % 500), 0, 0};
    const IQPair avg = ch.capture(t, x, first);
    const auto& raw = ch.raw();
    REQUIRE(raw.start == t.start);
    REQUIRE(raw.samples.size() == t.window);
    std::int64_t si = 0, sq = 0;
    for (std::size_t m = 0; m < raw.samples.size(); ++m) {
      // cycle start+m: newest input is the last ADC sample of that cycle
      const std::int64_t newest = 8 * std::int64_t(t.start + m) + 7;
      std::int64_t ai = 0, aq = 0;
      for (std::size_t k = 0; k < 63; ++k) {
        ai += std::int64_t{h[k]} * x[newest - std::int64_t(k)].i;
        aq += std::int64_t{h[k]} * x[newest - std::int64_t(k)].q;
      }
      REQUIRE(raw.samples[m] == IQSample{fx::saturate16(fx::round_shift(ai, 20)), fx::saturate16(fx::round_shift(aq, 20))});
      si += raw.samples[m].i;
      sq += raw.samples[m].q;
    }
    CHECK(std::abs(double(si) / t.window - avg.i) <= 1.0);
    CHECK(std::abs(double(sq) / t.window - avg.q) <= 1.0);
  }
  CHECK(ch.avg().total() == 30);
}

TEST_CASE("loopback gives a constant phasor at the programmed phase offset") {
  siggen::EnvelopeTable tab;
  std::mt19937_64 rng(77);
  for (int f = 0; f < 3; ++f) {
    const std::uint32_t w = siggen::freq_to_word(std::uniform_real_distribution<double>(50e6, 1400e6)(rng));
    const std::uint32_t pw = static_cast<std::uint32_t>(rng());
    siggen::SignalGenerator gen(tab);
    PulseCommand c;
    c.length = 16;
    c.freq_word = w;
    c.phase_word = pw;
    c.gain = 32767;
    c.outsel = 1;
    c.periodic = true;
    gen.play(c, 0);
    ReadoutConfig cfg;
    cfg.ddc.freq_word = 2 * w;
    ReadoutChannel ch(cfg);
    double mag_min = 1e30, mag_max = 0;
    for (int trial = 0; trial < 20; ++trial) {
      TriggerCommand t{Cycle(100 + rng() % 100000), 200, 0, 0};
      auto [lo, hi] = ReadoutChannel::input_range(t);
      const IQPair p = ch.capture(t, loopback_adc(gen, lo, std::size_t(hi - lo)), lo);
      const double mag = std::hypot(double(p.i), double(p.q));
      mag_min = std::min(mag_min, mag);
      mag_max = std::max(mag_max, mag);
      const double ang = std::atan2(double(p.q), double(p.i));
      const double expect = 2 * std::numbers::pi * (double(pw) / 4294967296.0);
      CHECK(std::abs(std::remainder(ang - expect, 2 * std::numbers::pi)) < 1e-3);
    }
    CHECK((mag_max - mag_min) / mag_max < 1e-3);
    CHECK(mag_max == doctest::Approx(32765).epsilon(1e-3));
  }
}

TEST_CASE("scalar and avx2 captures agree") {
  if (!simd::available(simd::Backend::avx2)) return;
  std::mt19937 rng(31);
  auto x = random_iq(8 * 700, rng);
  std::vector<std::int16_t> xr(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) xr[k] = x[k].i;
  const auto before = simd::active_backend();
  for (int trial = 0; trial < 5; ++trial) {
    ReadoutConfig cfg;
    cfg.ddc.freq_word = static_cast<std::uint32_t>(rng());
    cfg.ddc.phase_word = static_cast<std::uint32_t>(rng());
    TriggerCommand t{Cycle(10 + trial), 600, 0, 0};
    simd::select(simd::Backend::scalar);
    ReadoutChannel a(cfg);
    a.capture(t, x, 0);
    const auto ra = a.raw().samples;
    a.capture(t, xr, 0);
    const auto rra = a.raw().samples;
    simd::select(simd::Backend::avx2);
    ReadoutChannel b(cfg);
    b.capture(t, x, 0);
    CHECK(b.raw().samples == ra);
    b.capture(t, xr, 0);
    CHECK(b.raw().samples == rra);
  }
  simd::select(before);
}

TEST_CASE("buffer dumps round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "qctrl_readout_test";
  std::filesystem::create_directories(dir);
  AvgBuffer b(8);
  std::mt19937 rng(2);
  for (int k = 0; k < 11; ++k) b.push({std::int64_t(rng() % 100000) - 50000, -std::int64_t(rng() % 1000), std::uint32_t(1 + rng() % 65535), 0});
  const auto csv = (dir / "a.csv").string();
  const auto bin = (dir / "a.bin").string();
  write_avg_csv(csv, b);
  write_avg_bin(bin, b);
  const auto all = b.read_all();
  for (const auto& back : {read_avg_csv(csv), read_avg_bin(bin)}) {
    REQUIRE(back.size() == all.size());
    for (std::size_t k = 0; k < all.size(); ++k) {
      CHECK(back[k].sum_i == all[k].sum_i);
      CHECK(back[k].sum_q == all[k].sum_q);
      CHECK(back[k].count == all[k].count);
    }
  }
  RawBuffer raw{5, {IQSample{1, -2}, IQSample{-32768, 32767}}};
  const auto rp = (dir / "r.bin").string();
  write_raw_bin(rp, raw);
  CHECK(siggen::read_envelope_bin(rp) == raw.samples);
  std::filesystem::remove_all(dir);
}
