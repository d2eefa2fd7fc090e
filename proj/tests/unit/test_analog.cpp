#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "qctrl/analog.hpp"

using namespace qctrl;
using namespace qctrl::analog;

namespace {

const Spur* find(const std::vector<Spur>& t, double f) {
  for (const auto& s : t)
    if (s.freq_hz == f) return &s;
  return nullptr;
}

}  // namespace

TEST_CASE("spur table for an 8.478 GHz LO and 0.8 GHz IF") {
  MixerModel mx;
  mx.lo_hz = 8.478e9;
  const auto t = spur_table(0.8e9, mx);
  const Spur* lsb = find(t, 7.678e9);
  const Spur* usb = find(t, 9.278e9);
  REQUIRE(lsb);
  REQUIRE(usb);
  CHECK(lsb->kind == ProductKind::lsb);
  CHECK(usb->kind == ProductKind::usb);
  CHECK(lsb->level_dbc == 0.0);
  for (double f : {0.8e9, 16.156e9, 17.756e9}) CHECK(find(t, f) != nullptr);
  CHECK(find(t, 0.8e9)->kind == ProductKind::if_feedthrough);
  CHECK(find(t, 16.156e9)->origin() == "spur 2LO-IF");
  CHECK(find(t, 17.756e9)->origin() == "spur 2LO+IF");
  CHECK(find(t, 8.478e9)->kind == ProductKind::lo_feedthrough);
  CHECK_THROWS_AS(spur_table(0.0, mx), Error);
  CHECK_THROWS_AS(spur_table(-1e9, mx), Error);
}

TEST_CASE("lo feedthrough arithmetic") {
  MixerModel mx;
  const auto t = spur_table(0.8e9, mx, filter_set("output"));
  const Spur* lo = find(t, 8.478e9);
  REQUIRE(lo);
  CHECK(lo->source_dbm == -48.0);
  CHECK(lo->atten_db == doctest::Approx(45.0));
  CHECK(lo->level_dbm == doctest::Approx(-93.0));
  CHECK(lo_feedthrough(17, 66) == -49.0);
}

TEST_CASE("every listed product is |n LO +- m IF| and the enumeration is complete") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lo(2e9, 15e9), iff(0.1e9, 3.5e9);
  for (int trial = 0; trial < 200; ++trial) {
    MixerModel mx;
    mx.lo_hz = lo(rng);
    mx.max_order = 1 + int(rng() % 5);
    const double f_if = iff(rng);
    const auto t = spur_table(f_if, mx, filter_set("output"));
    std::size_t expect = 0;
    for (int n = 0; n <= mx.max_order; ++n)
      for (int m = 0; n + m <= mx.max_order; ++m)
        if (n + m > 0) expect += (n > 0 && m > 0) ? 2 : 1;
    CHECK(t.size() == expect);
    for (const auto& s : t) {
      const double f = s.sign < 0 ? std::abs(s.n * mx.lo_hz - s.m * f_if) : s.n * mx.lo_hz + s.m * f_if;
      CHECK(s.freq_hz == f);
      CHECK(s.level_dbm == doctest::Approx(s.source_dbm - s.atten_db));
    }
    CHECK(std::is_sorted(t.begin(), t.end(), [](const Spur& a, const Spur& b) { return a.freq_hz < b.freq_hz; }));
  }
}

TEST_CASE("filter masks interpolate and validate") {
  const auto f = filter_preset("lfcw-6000");
  CHECK(f.attenuation(1e9) == 0.0);
  CHECK(f.attenuation(8.478e9) == doctest::Approx(45.0));
  CHECK(f.attenuation(8.05e9) == doctest::Approx(15.5));
  CHECK(f.attenuation(40e9) == 60.0);
  CHECK(f.min_attenuation(8.05e9, 9e9) == doctest::Approx(15.5));
  for (const auto& name : filter_preset_names()) {
    const auto p = filter_preset(name);
    double prev = p.attenuation(0);
    for (double x = 0; x < 20e9; x += 10e6) {
      const double a = p.attenuation(x);
      CHECK(a >= 0);
      if (p.kind == FilterKind::low_pass) CHECK(a >= prev - 1e-12);
      if (p.kind == FilterKind::high_pass) CHECK(a <= prev + 1e-12);
      prev = a;
    }
  }
  CHECK(filter_preset("lfcw-6300-hp").attenuation(7e9) == 0.0);
  CHECK(filter_preset("lfcn-1800").attenuation(3e9) == 40.0);
  FilterModel bad{"x", FilterKind::low_pass, {{1e9, 10}, {2e9, 5}}};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.breakpoints = {{2e9, 0}, {1e9, 5}};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.breakpoints = {{1e9, -1}};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(filter_preset("nope"), Error);
  CHECK(filter_set("bandwidth-table").size() == 2);
}

TEST_CASE("plan at LO 8.5 GHz puts the IF band into 5-8 GHz") {
  PlanOptions opt;
  auto r = plan_band({8.5e9, 8.5e9}, {0.5e9, 3.5e9}, {5e9, 8e9}, opt);
  REQUIRE(r.los.size() == 1);
  const auto& p = r.los[0];
  CHECK(p.signal.lo == 5e9);
  CHECK(p.signal.hi == 8e9);
  CHECK(p.feasible);
  CHECK(r.recommended_lo == 8.5e9);
  // the upper sideband at 9-12 GHz is filtered by more than 50 dB
  MixerModel mx;
  mx.lo_hz = 8.5e9;
  for (double f_if : {0.5e9, 2e9, 3.5e9}) {
    const auto t = spur_table(f_if, mx, opt.filters);
    for (const auto& s : t)
      if (s.kind == ProductKind::usb) CHECK(s.atten_db > 50.0);
  }
}

TEST_CASE("LO sweep 7.5-8.5 GHz reaches a clean 4-8 GHz band") {
  auto r = plan_band({7.5e9, 8.5e9}, {0.5e9, 3.5e9}, {4e9, 8e9});
  REQUIRE(r.feasible());
  REQUIRE(r.reachable);
  CHECK(r.reachable->lo == doctest::Approx(4e9));
  CHECK(r.reachable->hi == doctest::Approx(8e9));
  CHECK(*r.recommended_lo >= 7.5e9);
  CHECK(*r.recommended_lo <= 8.5e9);
  for (const auto& p : r.los) CHECK(p.feasible);
  CHECK(r.los.front().lo_hz == 7.5e9);
  CHECK(r.los.back().lo_hz == doctest::Approx(8.5e9));
  auto j = nlohmann::json::parse(plan_json(r));
  CHECK(j["feasible"] == true);
  CHECK(j["los"].size() == r.los.size());
}

TEST_CASE("target band around the LO is infeasible") {
  auto r = plan_band({8.5e9, 8.5e9}, {0.5e9, 3.5e9}, {8.3e9, 8.7e9});
  CHECK_FALSE(r.feasible());
  REQUIRE(r.los.size() == 1);
  CHECK(r.los[0].reason == "lower sideband misses the target band");
  // without the output filter the feedthrough inside the target is listed too
  PlanOptions bare;
  bare.filters = {};
  auto r2 = plan_band({8.5e9, 8.5e9}, {0.5e9, 3.5e9}, {8.3e9, 8.7e9}, bare);
  bool lo_listed = false;
  for (const auto& v : r2.los[0].violations) lo_listed |= v.kind == ProductKind::lo_feedthrough;
  CHECK(lo_listed);
  CHECK_THROWS_AS(plan_band({8e9, 7e9}, {0.5e9, 1e9}, {4e9, 8e9}), Error);
  CHECK_THROWS_AS(plan_band({8e9, 8e9}, {0, 1e9}, {4e9, 8e9}), Error);
}

TEST_CASE("feasible plans have no product above margin in the occupied band") {
  std::mt19937_64 rng(17);
  int feasible_seen = 0;
  for (int trial = 0; trial < 60; ++trial) {
    PlanOptions opt;
    opt.lo_step_hz = 100e6;
    opt.margin_db = std::uniform_real_distribution<double>(20, 80)(rng);
    opt.mixer.max_order = 2 + int(rng() % 3);
    const double lo0 = std::uniform_real_distribution<double>(3e9, 12e9)(rng);
    const double if0 = std::uniform_real_distribution<double>(0.05e9, 2e9)(rng);
    const Band ifb{if0, if0 + std::uniform_real_distribution<double>(0.01e9, 2e9)(rng)};
    const double t0 = std::uniform_real_distribution<double>(1e9, 10e9)(rng);
    const Band target{t0, t0 + std::uniform_real_distribution<double>(0.2e9, 4e9)(rng)};
    const auto r = plan_band({lo0, lo0 + 1e9}, ifb, target, opt);
    for (const auto& p : r.los) {
      if (!p.feasible) continue;
      ++feasible_seen;
      // brute force: sweep IF densely and enumerate products
      for (int k = 0; k <= 400; ++k) {
        const double f_if = ifb.lo + (ifb.hi - ifb.lo) * k / 400.0;
        MixerModel mx = opt.mixer;
        mx.lo_hz = p.lo_hz;
        for (const auto& s : spur_table(f_if, mx, opt.filters)) {
          if (s.kind == ProductKind::lsb) continue;
          if (s.freq_hz < p.occupied.lo || s.freq_hz > p.occupied.hi) continue;
          REQUIRE(s.level_dbc <= -opt.margin_db + 1e-9);
        }
      }
    }
  }
  CHECK(feasible_seen > 20);
}

TEST_CASE("output chain power window") {
  CHECK(chain_power(-23, output_chain(0)) == doctest::Approx(4.0));
  CHECK(chain_power(-23, output_chain(60)) == doctest::Approx(-56.0));
  CHECK_THROWS_AS(chain_power(-23, output_chain(10.3)), Error);
  CHECK_THROWS_AS(chain_power(-23, output_chain(60.25)), Error);
  CHECK_THROWS_AS(chain_power(-23, output_chain(-0.25)), Error);
  CHECK_NOTHROW(chain_power(-23, output_chain(10.25)));
  double prev = INFINITY;
  for (int q = 0; q <= 240; ++q) {
    const double p = chain_power(-23, output_chain(q * 0.25));
    CHECK(p <= prev);
    prev = p;
  }
  CHECK(chain_power(-60, input_chain(30, 0)) == doctest::Approx(-91.0));
  CHECK_THROWS_AS(chain_power(-60, input_chain(30.25)), Error);
}

TEST_CASE("bias DAC quantization") {
  CHECK(BiasDAC::kStep == doctest::Approx(19.073e-6).epsilon(1e-4));
  CHECK(BiasDAC::kStep / 20.0 == doctest::Approx(1e-6).epsilon(0.05));
  CHECK(BiasDAC::quantize(0).code == (1u << 19));
  CHECK(BiasDAC::quantize(0).volts == 0.0);
  CHECK(BiasDAC::quantize(10).code == BiasDAC::kMaxCode);
  CHECK(BiasDAC::quantize(-10).code == 0u);
  CHECK(BiasDAC::quantize(-10).volts == -10.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> v(-10, 10 - BiasDAC::kStep / 2);
  for (int k = 0; k < 10000; ++k) {
    const double x = v(rng);
    const auto q = BiasDAC::quantize(x);
    CHECK(std::abs(q.volts - x) <= 10e-6);
    CHECK(std::abs(q.volts - x) <= BiasDAC::kStep / 2 + 1e-15);
  }
  CHECK_THROWS_AS(BiasDAC::quantize(10.001), Error);
  CHECK_THROWS_AS(BiasDAC::quantize(-10.5), Error);
  CHECK_THROWS_AS(BiasDAC::volts(1u << 20), Error);
}

TEST_CASE("latency table") {
  LatencyConfig c;
  CHECK(latency_of(c) == 90.0);
  c.nco_enabled = true;
  CHECK(latency_of(c) == 113.0);
  c.interp_enabled = true;
  CHECK(latency_of(c) == 117.0);
  for (bool nco : {false, true}) {
    for (bool interp : {false, true}) {
      LatencyConfig x{4.096e9, 6.144e9, nco, interp};
      if (interp && !nco) {
        CHECK_THROWS_AS(latency_of(x), Error);
        continue;
      }
      // logic analyzer at 512 MHz
      CHECK(std::abs(latency_ila_clocks(x) / 512e6 * 1e9 - latency_of(x)) < 0.5);
    }
  }
  LatencyConfig other{3.072e9, 6.144e9, false, false};
  CHECK_THROWS_AS(latency_of(other), Error);
  FeedbackLatency fb;
  CHECK(fb.cond_jump_ns() == doctest::Approx(16 / 384e6 * 1e9));
  CHECK(std::abs(fb.cond_jump_ns() - 42) < 1.0);
  CHECK(std::abs(fb.next_pulse_ns() - 52) < 1.0);
  const double lo = latency_budget(LatencyConfig{}).total_ns();
  const double hi = latency_budget(LatencyConfig{4.096e9, 6.144e9, true, true}).total_ns();
  CHECK(std::abs(lo - 184) < 1.0);
  CHECK(std::abs(hi - 211) < 1.0);
}
