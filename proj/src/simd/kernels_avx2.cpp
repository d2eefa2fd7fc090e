#include "qctrl/simd.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define QCTRL_HAVE_AVX2 1
#include <immintrin.h>

#include <cstdint>

#include "qctrl/fixed_point.hpp"
#endif

namespace qctrl::simd {

#if QCTRL_HAVE_AVX2

#define QCTRL_AVX2 __attribute__((target("avx2")))

namespace {

QCTRL_AVX2 inline __m256i lo16_to_i32(__m256i v) { return _mm256_srai_epi32(_mm256_slli_epi32(v, 16), 16); }
QCTRL_AVX2 inline __m256i hi16_to_i32(__m256i v) { return _mm256_srai_epi32(v, 16); }

// int32 lanes / 2^15, round half to even, clamped to int16. A lane equal to
// INT32_MIN can only come from (-2^15)^2 + (-2^15)^2 wrapping, i.e. +2^31.
QCTRL_AVX2 inline __m256i rhe15_sat(__m256i x) {
  const __m256i wrapped = _mm256_cmpeq_epi32(x, _mm256_set1_epi32(INT32_MIN));
  const __m256i q = _mm256_srai_epi32(x, 15);
  const __m256i r = _mm256_and_si256(x, _mm256_set1_epi32(0x7FFF));
  const __m256i half = _mm256_set1_epi32(0x4000);
  const __m256i gt = _mm256_cmpgt_epi32(r, half);
  const __m256i eq = _mm256_cmpeq_epi32(r, half);
  const __m256i odd = _mm256_cmpeq_epi32(_mm256_and_si256(q, _mm256_set1_epi32(1)), _mm256_set1_epi32(1));
  const __m256i inc = _mm256_or_si256(gt, _mm256_and_si256(eq, odd));
  __m256i y = _mm256_sub_epi32(q, inc);  // inc lanes are -1
  y = _mm256_min_epi32(y, _mm256_set1_epi32(32767));
  y = _mm256_max_epi32(y, _mm256_set1_epi32(-32768));
  return _mm256_blendv_epi8(y, _mm256_set1_epi32(32767), wrapped);
}

QCTRL_AVX2 inline __m256i pack_iq(__m256i i32, __m256i q32) {
  return _mm256_or_si256(_mm256_and_si256(i32, _mm256_set1_epi32(0xFFFF)), _mm256_slli_epi32(q32, 16));
}

QCTRL_AVX2 inline __m256i load8(const IQSample* p) {
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p));
}
QCTRL_AVX2 inline void store8(IQSample* p, __m256i v) { _mm256_storeu_si256(reinterpret_cast<__m256i*>(p), v); }

QCTRL_AVX2 inline __m256i lut_sin(const std::int32_t* table, __m256i ph, __m128i idx_shift, __m128i frac_shift) {
  const __m256i idx = _mm256_srl_epi32(ph, idx_shift);
  const __m256i frac = _mm256_and_si256(_mm256_srl_epi32(ph, frac_shift), _mm256_set1_epi32(0xFFFF));
  const __m256i a = _mm256_i32gather_epi32(table, idx, 4);
  const __m256i b = _mm256_i32gather_epi32(table + 1, idx, 4);
  const __m256i d = _mm256_sub_epi32(b, a);
  const __m256i p = _mm256_add_epi32(_mm256_mullo_epi32(d, frac), _mm256_set1_epi32(0x8000));
  return _mm256_add_epi32(a, _mm256_srai_epi32(p, 16));
}

QCTRL_AVX2 void dds_avx2(const DdsLut& lut, std::uint32_t phase0, std::uint32_t step, IQSample* out, std::size_t n) {
  const std::int32_t* table = lut.data();
  const __m128i idx_shift = _mm_cvtsi32_si128(32 - lut.bits());
  const __m128i frac_shift = _mm_cvtsi32_si128(16 - lut.bits());
  const auto s = static_cast<int>(step);
  __m256i ph = _mm256_add_epi32(_mm256_set1_epi32(static_cast<int>(phase0)),
                                _mm256_mullo_epi32(_mm256_set1_epi32(s), _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7)));
  const __m256i adv = _mm256_set1_epi32(static_cast<int>(step * 8u));
  const __m256i quarter = _mm256_set1_epi32(1 << 30);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    const __m256i sn = lut_sin(table, ph, idx_shift, frac_shift);
    const __m256i cs = lut_sin(table, _mm256_add_epi32(ph, quarter), idx_shift, frac_shift);
    store8(out + k, pack_iq(cs, sn));
    ph = _mm256_add_epi32(ph, adv);
  }
  std::uint32_t tail = phase0 + static_cast<std::uint32_t>(k) * step;
  for (; k < n; ++k, tail += step) out[k] = {lut.cos_at(tail), lut.sin_at(tail)};
}

QCTRL_AVX2 void mix_avx2(const IQSample* a, const IQSample* b, IQSample* out, std::size_t n) {
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    const __m256i va = load8(a + k);
    const __m256i vb = load8(b + k);
    const __m256i ai = lo16_to_i32(va), aq = hi16_to_i32(va);
    const __m256i bi = lo16_to_i32(vb), bq = hi16_to_i32(vb);
    const __m256i re = _mm256_sub_epi32(_mm256_mullo_epi32(ai, bi), _mm256_mullo_epi32(aq, bq));
    const __m256i im = _mm256_add_epi32(_mm256_mullo_epi32(ai, bq), _mm256_mullo_epi32(aq, bi));
    store8(out + k, pack_iq(rhe15_sat(re), rhe15_sat(im)));
  }
  if (k < n) detail::scalar_kernels().mix(a + k, b + k, out + k, n - k);
}

QCTRL_AVX2 void mix_conj_avx2(const IQSample* a, const IQSample* b, IQSample* out, std::size_t n) {
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    const __m256i va = load8(a + k);
    const __m256i vb = load8(b + k);
    const __m256i ai = lo16_to_i32(va), aq = hi16_to_i32(va);
    const __m256i bi = lo16_to_i32(vb), bq = hi16_to_i32(vb);
    const __m256i re = _mm256_add_epi32(_mm256_mullo_epi32(ai, bi), _mm256_mullo_epi32(aq, bq));
    const __m256i im = _mm256_sub_epi32(_mm256_mullo_epi32(aq, bi), _mm256_mullo_epi32(ai, bq));
    store8(out + k, pack_iq(rhe15_sat(re), rhe15_sat(im)));
  }
  if (k < n) detail::scalar_kernels().mix_conj(a + k, b + k, out + k, n - k);
}

QCTRL_AVX2 void mix_real_conj_avx2(const std::int16_t* x, const IQSample* b, IQSample* out, std::size_t n) {
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    const __m256i vx = _mm256_cvtepi16_epi32(_mm_loadu_si128(reinterpret_cast<const __m128i*>(x + k)));
    const __m256i vb = load8(b + k);
    const __m256i re = _mm256_mullo_epi32(vx, lo16_to_i32(vb));
    const __m256i im = _mm256_sub_epi32(_mm256_setzero_si256(), _mm256_mullo_epi32(vx, hi16_to_i32(vb)));
    store8(out + k, pack_iq(rhe15_sat(re), rhe15_sat(im)));
  }
  if (k < n) detail::scalar_kernels().mix_real_conj(x + k, b + k, out + k, n - k);
}

QCTRL_AVX2 void scale_avx2(IQSample* data, std::int16_t gain, std::size_t n) {
  const __m256i g = _mm256_set1_epi32(gain);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    const __m256i v = load8(data + k);
    const __m256i i = _mm256_mullo_epi32(lo16_to_i32(v), g);
    const __m256i q = _mm256_mullo_epi32(hi16_to_i32(v), g);
    store8(data + k, pack_iq(rhe15_sat(i), rhe15_sat(q)));
  }
  if (k < n) detail::scalar_kernels().scale(data + k, gain, n - k);
}

QCTRL_AVX2 void fir_decimate_avx2(const FirKernel& fir, const IQSample* in, IQSample* out, std::size_t n_out) {
  const std::size_t taps = fir.taps().size();
  const std::size_t chunks = fir.padded_length() / 8;
  const std::size_t full = taps / 8;
  const std::size_t rem = taps % 8;
  alignas(32) std::int32_t mask_words[8];
  for (std::size_t j = 0; j < 8; ++j) mask_words[j] = j < rem ? -1 : 0;
  const __m256i tail_mask = _mm256_load_si256(reinterpret_cast<const __m256i*>(mask_words));
  const auto* rhi_i = reinterpret_cast<const __m256i*>(fir.hi_i());
  const auto* rhi_q = reinterpret_cast<const __m256i*>(fir.hi_q());
  const auto* rlo_i = reinterpret_cast<const __m256i*>(fir.lo_i());
  const auto* rlo_q = reinterpret_cast<const __m256i*>(fir.lo_q());
  const std::size_t d = static_cast<std::size_t>(fir.decimation());
  const int shift = fir.shift();

  for (std::size_t m = 0; m < n_out; ++m) {
    const IQSample* base = in + m * d;
    __m256i hi_i = _mm256_setzero_si256(), hi_q = hi_i, lo_i = hi_i, lo_q = hi_i;
    for (std::size_t c = 0; c < chunks; ++c) {
      __m256i x;
      if (c < full) {
        x = load8(base + 8 * c);
      } else {
        x = _mm256_maskload_epi32(reinterpret_cast<const int*>(base + 8 * c), tail_mask);
      }
      hi_i = _mm256_add_epi32(hi_i, _mm256_madd_epi16(x, _mm256_loadu_si256(rhi_i + c)));
      hi_q = _mm256_add_epi32(hi_q, _mm256_madd_epi16(x, _mm256_loadu_si256(rhi_q + c)));
      lo_i = _mm256_add_epi32(lo_i, _mm256_madd_epi16(x, _mm256_loadu_si256(rlo_i + c)));
      lo_q = _mm256_add_epi32(lo_q, _mm256_madd_epi16(x, _mm256_loadu_si256(rlo_q + c)));
    }
    const __m256i t = _mm256_hadd_epi32(_mm256_hadd_epi32(hi_i, hi_q), _mm256_hadd_epi32(lo_i, lo_q));
    const __m128i s = _mm_add_epi32(_mm256_castsi256_si128(t), _mm256_extracti128_si256(t, 1));
    const std::int64_t acc_i = std::int64_t{_mm_extract_epi32(s, 0)} * 512 + _mm_extract_epi32(s, 2);
    const std::int64_t acc_q = std::int64_t{_mm_extract_epi32(s, 1)} * 512 + _mm_extract_epi32(s, 3);
    out[m] = {fx::saturate16(fx::round_shift(acc_i, shift)), fx::saturate16(fx::round_shift(acc_q, shift))};
  }
}

}  // namespace

namespace detail {

const Kernels* avx2_kernels() {
  static const Kernels k{Backend::avx2,       dds_avx2,   mix_avx2,         mix_conj_avx2,
                         mix_real_conj_avx2, scale_avx2, fir_decimate_avx2};
  return &k;
}

}  // namespace detail

#else

namespace detail {
const Kernels* avx2_kernels() { return nullptr; }
}  // namespace detail

#endif

}  // namespace qctrl::simd
