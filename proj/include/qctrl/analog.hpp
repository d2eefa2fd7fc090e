#pragma once

// RF board arithmetic: mixer products, filter masks, attenuator chains,
// bias DAC quantization and the latency budget. Nothing here touches
// samples; it is bookkeeping over a frequency plan.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qctrl/types.hpp"

namespace qctrl::analog {

enum class FilterKind { low_pass, high_pass };

/// Piecewise-linear attenuation mask, flat beyond the first and last
/// breakpoints.
struct FilterModel {
  std::string name;
  FilterKind kind = FilterKind::low_pass;
  std::vector<std::pair<double, double>> breakpoints;  // (Hz, dB), ascending Hz

  double attenuation(double f_hz) const;
  /// Smallest attenuation anywhere in [f_lo, f_hi].
  double min_attenuation(double f_lo, double f_hi) const;
  void validate() const;
};

/// Known board filters: "lfcw-6000" (the low-pass above the LSB, 45 dB at
/// 8.478 GHz), "lfcn-1800" (1.8 GHz low-pass) and "lfcw-6300-hp" (6.3 GHz
/// high-pass).
FilterModel filter_preset(const std::string& name);
std::vector<std::string> filter_preset_names();
/// Filter set of the RF output path: "output" or "bandwidth-table".
std::vector<FilterModel> filter_set(const std::string& name);

struct MixerModel {
  double lo_hz = 8.478e9;
  int max_order = 3;                 // n + m
  double carrier_dbm = -23.0;        // each sideband at the mixer output
  double sideband_dbc = 0.0;
  double spur_dbc = -60.0;
  double if_feedthrough_dbc = -60.0;
  double lo_feedthrough_dbm = -48.0;
};

/// LO drive minus mixer/path isolation.
inline double lo_feedthrough(double lo_drive_dbm, double isolation_db) { return lo_drive_dbm - isolation_db; }

enum class ProductKind { if_feedthrough, lo_feedthrough, lsb, usb, spur };

struct Spur {
  double freq_hz = 0;
  int n = 0;     // LO multiple
  int m = 0;     // IF multiple
  int sign = 0;  // +1: n*LO + m*IF, -1: n*LO - m*IF, 0 when n or m is 0
  ProductKind kind = ProductKind::spur;
  double source_dbm = 0;
  double atten_db = 0;
  double level_dbm = 0;  // after filters
  double level_dbc = 0;  // relative to carrier_dbm

  std::string origin() const;
};

/// Every |n*LO +- m*IF| with 0 < n + m <= max_order.
std::vector<Spur> spur_table(double if_hz, const MixerModel& mixer, const std::vector<FilterModel>& filters = {});

std::string spur_table_csv(const std::vector<Spur>& spurs);

struct Band {
  double lo = 0;
  double hi = 0;
  bool overlaps(const Band& o) const { return lo <= o.hi && o.lo <= hi; }
  double width() const { return hi - lo; }
};

struct PlanViolation {
  int n = 0;
  int m = 0;
  int sign = 0;
  ProductKind kind = ProductKind::spur;
  Band band;
  double level_dbc = 0;
};

struct LoPlan {
  double lo_hz = 0;
  Band signal;    // lower sideband over the IF band
  Band occupied;  // signal intersected with the target band
  bool feasible = false;
  std::string reason;
  std::vector<PlanViolation> violations;
};

struct PlanReport {
  Band if_band;
  Band target;
  double margin_db = 0;
  std::vector<LoPlan> los;
  std::optional<double> recommended_lo;
  std::optional<Band> reachable;  // hull of occupied bands over feasible LOs
  bool feasible() const { return recommended_lo.has_value(); }
};

struct PlanOptions {
  double lo_step_hz = 10e6;
  double margin_db = 60.0;  // products at or below -margin dBc are clean
  MixerModel mixer{};
  std::vector<FilterModel> filters = filter_set("output");
};

/// The lower sideband carries the signal. An LO is feasible when its LSB
/// reaches the target band and no other product, swept over the IF band
/// and after filtering, lands in the occupied part above -margin dBc.
PlanReport plan_band(Band lo_range, Band if_band, Band target, const PlanOptions& opt = {});

std::string plan_json(const PlanReport& r);

struct StepAttenuator {
  double setting_db = 0;
  double step_db = 0.25;
  double insertion_loss_db = 1.0;
  double max_db = 60.0;

  void validate() const;
};

struct GainStage {
  std::string name;
  double gain_db = 0;
};

struct RfChain {
  std::vector<GainStage> gains;
  std::vector<StepAttenuator> attenuators;
};

/// Output path: +40 dB of amplification, 12 dB of fixed loss, one
/// 0-60 dB attenuator pair with 1 dB insertion loss.
RfChain output_chain(double attenuation_db = 0);
/// Input path: one 0-30 dB attenuator.
RfChain input_chain(double attenuation_db = 0, double gain_db = 0);

/// p_in + sum(gains) - sum(insertion) - sum(settings).
double chain_power(double p_in_dbm, const RfChain& chain);

struct BiasDAC {
  static constexpr int kBits = 20;
  static constexpr double kFullScale = 10.0;
  static constexpr std::uint32_t kMaxCode = (1u << kBits) - 1;
  static constexpr double kStep = 2 * kFullScale / double(1u << kBits);

  struct Quantized {
    std::uint32_t code;
    double volts;
  };

  /// Offset binary, nearest code; +10 V clamps to the top code.
  static Quantized quantize(double volts);
  static double volts(std::uint32_t code);
};

struct LatencyConfig {
  double adc_hz = 4.096e9;
  double dac_hz = 6.144e9;
  bool nco_enabled = false;
  bool interp_enabled = false;
};

/// Measured converter round trip for the configuration, in ns.
double latency_of(const LatencyConfig& cfg);
/// Same figure in 512 MHz logic-analyzer clocks.
int latency_ila_clocks(const LatencyConfig& cfg);

struct FeedbackLatency {
  Cycle cond_jump_cycles = 16;
  Cycle next_pulse_cycles = 20;
  double fabric_hz = kFabricHz;

  double cond_jump_ns() const { return double(cond_jump_cycles) / fabric_hz * 1e9; }
  double next_pulse_ns() const { return double(next_pulse_cycles) / fabric_hz * 1e9; }
};

struct LatencyBudget {
  double converter_ns;
  double cond_jump_ns;
  double next_pulse_ns;
  double total_ns() const { return converter_ns + cond_jump_ns + next_pulse_ns; }
};

LatencyBudget latency_budget(const LatencyConfig& cfg, const FeedbackLatency& fb = {});

}  // namespace qctrl::analog
