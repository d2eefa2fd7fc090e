#include <cmath>
#include <numbers>

#include "qctrl/fixed_point.hpp"
#include "qctrl/simd.hpp"

namespace qctrl::simd {

DdsLut::DdsLut(int bits) : bits_(bits) {
  if (bits < 2 || bits > 16) throw Error("DDS table bits must be in [2, 16]");
  const std::size_t n = std::size_t{1} << bits;
  table_.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double s = std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    table_[k] = static_cast<std::int32_t>(std::lround(32767.0 * s));
  }
  table_[n] = table_[0];
}

std::int16_t DdsLut::sin_at(std::uint32_t phase) const {
  const std::uint32_t idx = phase >> (32 - bits_);
  const std::int32_t frac = static_cast<std::int32_t>((phase >> (16 - bits_)) & 0xFFFFu);
  const std::int32_t a = table_[idx];
  const std::int32_t d = table_[idx + 1] - a;
  return static_cast<std::int16_t>(a + ((d * frac + 0x8000) >> 16));
}

const DdsLut& DdsLut::standard() {
  static const DdsLut lut(12);
  return lut;
}

FirKernel::FirKernel(std::vector<std::int32_t> taps, int shift, int decimation)
    : taps_(std::move(taps)), shift_(shift), decimation_(decimation) {
  if (taps_.empty()) throw Error("FIR needs at least one tap");
  if (decimation_ < 1) throw Error("decimation must be positive");
  for (std::int32_t t : taps_) {
    if (t < -(1 << 17) || t >= (1 << 17)) throw Error("FIR taps must fit 18-bit signed");
  }
  padded_ = (taps_.size() + 7) / 8 * 8;
  const std::size_t lanes = padded_ * 2;
  hi_i_.assign(lanes, 0);
  hi_q_.assign(lanes, 0);
  lo_i_.assign(lanes, 0);
  lo_q_.assign(lanes, 0);
  const std::size_t t = taps_.size();
  for (std::size_t j = 0; j < t; ++j) {
    const std::int32_t h = taps_[t - 1 - j];
    const auto hi = static_cast<std::int16_t>(h >> 9);
    const auto lo = static_cast<std::int16_t>(h & 511);
    hi_i_[2 * j] = hi;
    hi_q_[2 * j + 1] = hi;
    lo_i_[2 * j] = lo;
    lo_q_[2 * j + 1] = lo;
  }
}

namespace {

void dds_scalar(const DdsLut& lut, std::uint32_t phase0, std::uint32_t step, IQSample* out, std::size_t n) {
  std::uint32_t ph = phase0;
  for (std::size_t k = 0; k < n; ++k, ph += step) {
    out[k] = {lut.cos_at(ph), lut.sin_at(ph)};
  }
}

void mix_scalar(const IQSample* a, const IQSample* b, IQSample* out, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t re = std::int64_t{a[k].i} * b[k].i - std::int64_t{a[k].q} * b[k].q;
    const std::int64_t im = std::int64_t{a[k].i} * b[k].q + std::int64_t{a[k].q} * b[k].i;
    out[k] = {fx::saturate16(fx::round_shift(re, 15)), fx::saturate16(fx::round_shift(im, 15))};
  }
}

void mix_conj_scalar(const IQSample* a, const IQSample* b, IQSample* out, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t re = std::int64_t{a[k].i} * b[k].i + std::int64_t{a[k].q} * b[k].q;
    const std::int64_t im = std::int64_t{a[k].q} * b[k].i - std::int64_t{a[k].i} * b[k].q;
    out[k] = {fx::saturate16(fx::round_shift(re, 15)), fx::saturate16(fx::round_shift(im, 15))};
  }
}

void mix_real_conj_scalar(const std::int16_t* x, const IQSample* b, IQSample* out, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t re = std::int64_t{x[k]} * b[k].i;
    const std::int64_t im = -std::int64_t{x[k]} * b[k].q;
    out[k] = {fx::saturate16(fx::round_shift(re, 15)), fx::saturate16(fx::round_shift(im, 15))};
  }
}

void scale_scalar(IQSample* data, std::int16_t gain, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    data[k] = {fx::mul_q15(data[k].i, gain), fx::mul_q15(data[k].q, gain)};
  }
}

void fir_decimate_scalar(const FirKernel& fir, const IQSample* in, IQSample* out, std::size_t n_out) {
  const auto& h = fir.taps();
  const std::size_t t = h.size();
  const std::size_t d = static_cast<std::size_t>(fir.decimation());
  for (std::size_t m = 0; m < n_out; ++m) {
    const IQSample* end = in + m * d + (t - 1);
    std::int64_t acc_i = 0;
    std::int64_t acc_q = 0;
    for (std::size_t k = 0; k < t; ++k) {
      acc_i += std::int64_t{h[k]} * end[-static_cast<std::ptrdiff_t>(k)].i;
      acc_q += std::int64_t{h[k]} * end[-static_cast<std::ptrdiff_t>(k)].q;
    }
    out[m] = {fx::saturate16(fx::round_shift(acc_i, fir.shift())),
              fx::saturate16(fx::round_shift(acc_q, fir.shift()))};
  }
}

}  // namespace

namespace detail {

const Kernels& scalar_kernels() {
  static const Kernels k{Backend::scalar,    dds_scalar,   mix_scalar,         mix_conj_scalar,
                         mix_real_conj_scalar, scale_scalar, fir_decimate_scalar};
  return k;
}

}  // namespace detail

}  // namespace qctrl::simd
