#pragma once

// Data-parallel inner loops shared by the signal generator and the readout.
// Every kernel has a scalar reference implementation; vector variants must
// be bit-exact with it and are selected at runtime.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "qctrl/types.hpp"

namespace qctrl::simd {

enum class Backend { scalar, avx2 };

std::string_view backend_name(Backend b);

/// Sine lookup table with linear interpolation. Entries are
/// round(32767 * sin(2*pi*k/N)) for k in [0, N], N = 2^bits.
class DdsLut {
 public:
  explicit DdsLut(int bits = 12);

  int bits() const { return bits_; }
  const std::int32_t* data() const { return table_.data(); }

  /// sin(2*pi*phase/2^32) in Q15, interpolated.
  std::int16_t sin_at(std::uint32_t phase) const;
  std::int16_t cos_at(std::uint32_t phase) const { return sin_at(phase + (1u << 30)); }

  static const DdsLut& standard();

 private:
  int bits_;
  std::vector<std::int32_t> table_;
};

/// FIR taps prepared for the decimating kernels. Taps are 18-bit signed;
/// the vector path splits each tap into a 9-bit high part and a 9-bit
/// unsigned low part so products fit 16x16 multiply-add lanes.
class FirKernel {
 public:
  FirKernel(std::vector<std::int32_t> taps, int shift, int decimation);

  const std::vector<std::int32_t>& taps() const { return taps_; }
  int shift() const { return shift_; }
  int decimation() const { return decimation_; }
  std::size_t padded_length() const { return padded_; }

  // Interleaved (I,Q) multiplier rows, one 16-lane row per 8 taps, taps reversed.
  const std::int16_t* hi_i() const { return hi_i_.data(); }
  const std::int16_t* hi_q() const { return hi_q_.data(); }
  const std::int16_t* lo_i() const { return lo_i_.data(); }
  const std::int16_t* lo_q() const { return lo_q_.data(); }

 private:
  std::vector<std::int32_t> taps_;
  int shift_;
  int decimation_;
  std::size_t padded_;
  std::vector<std::int16_t> hi_i_, hi_q_, lo_i_, lo_q_;
};

struct Kernels {
  Backend backend;
  /// out[k] = (cos, sin) of phase0 + k*step.
  void (*dds)(const DdsLut& lut, std::uint32_t phase0, std::uint32_t step, IQSample* out, std::size_t n);
  /// out = a * b, complex, Q15 rounded half-even, saturated.
  void (*mix)(const IQSample* a, const IQSample* b, IQSample* out, std::size_t n);
  /// out = a * conj(b).
  void (*mix_conj)(const IQSample* a, const IQSample* b, IQSample* out, std::size_t n);
  /// out = x * conj(b) for a real input x.
  void (*mix_real_conj)(const std::int16_t* x, const IQSample* b, IQSample* out, std::size_t n);
  /// In-place Q15 gain on both components.
  void (*scale)(IQSample* data, std::int16_t gain, std::size_t n);
  /// out[m] = sat(round(sum_k taps[k] * in[m*D + T-1-k] / 2^shift)) for m < n_out.
  void (*fir_decimate)(const FirKernel& fir, const IQSample* in, IQSample* out, std::size_t n_out);
};

bool available(Backend b);
const Kernels& kernels_for(Backend b);

/// Currently selected kernels: the best available backend unless the
/// QCTRL_SIMD environment variable ("scalar" or "avx2") or select() says otherwise.
const Kernels& kernels();
Backend active_backend();
void select(Backend b);

namespace detail {
const Kernels& scalar_kernels();
const Kernels* avx2_kernels();  // nullptr when not compiled in
}  // namespace detail

}  // namespace qctrl::simd
