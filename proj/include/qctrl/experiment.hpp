#pragma once

// Experiments: configuration, compilation to processor assembly, segmented
// execution on the Machine, fitting and persistence.
//
// A sweep is split into segments of `segment_points` consecutive points
// (RB: one segment per sequence). Each segment is its own program, seeded
// from (seed, segment index), so results do not depend on how many worker
// threads share the segments.

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qctrl/device.hpp"
#include "qctrl/fit.hpp"
#include "qctrl/isa.hpp"
#include "qctrl/machine.hpp"
#include "qctrl/tproc.hpp"

namespace qctrl::exp {

enum class Kind { res_spec, qubit_spec, rabi, ramsey, t1, single_shot, rb, feedback_latency };

std::string_view kind_name(Kind k);
std::optional<Kind> parse_kind(std::string_view name);

struct SweepSpec {
  std::string param;
  double start = 0;
  double stop = 0;
  int points = 0;
};

struct ExperimentConfig {
  Kind kind = Kind::rabi;
  SweepSpec sweep;
  int shots = 1000;
  std::uint64_t seed = 1;
  int workers = 1;
  int segment_points = 4;
  bool keep_shots = false;

  double readout_freq = 6.2e9;   // probe frequency (LO + IF)
  double readout_gain = 1.0;     // of full scale
  double readout_length = 3e-6;  // pulse and integration window
  double relax = 1.2e-3;         // idle before every shot

  double qubit_freq = 4.743e9;
  double pulse_length = 100e-9;
  double pulse_sigma = 25e-9;
  std::optional<double> pi_gain;  // default: from the device calibration
  double spec_length = 2e-6;      // flat qubit spectroscopy pulse
  std::optional<double> spec_gain;
  double ramsey_freq = 40e3;

  int rb_sequences = 30;
  std::vector<int> rb_lengths{1, 25, 50, 100, 200, 400, 800};
  Cycle gate_slot = 39;  // cycles per gate on the sequence clock
  bool z_slot = true;    // virtual Z gates keep their slot (idle) instead of collapsing it

  double feedback_window = 100e-9;

  HardwareConfig hw;
  device::TransmonParams device;
};

/// Sensible sweep, shots and pulse defaults for a kind.
ExperimentConfig default_config(Kind k);
/// Applies keys on top of `base`; unknown keys are errors.
ExperimentConfig config_from(const KeyValues& kv, ExperimentConfig base);
/// Flat key/value view (the same keys config_from reads).
std::map<std::string, std::string> config_entries(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

/// Gaussian pi-pulse amplitude (fraction of full scale) for the device.
double calibrated_pi_gain(const ExperimentConfig& cfg);

struct Compiled {
  isa::Program program;
  std::string text;
  std::vector<double> x;  // sweep values actually realized, one per point
  std::vector<IQSample> envelope;  // loaded at address 0
  int first_point = 0;
  int points = 0;
  int shots_per_point = 0;
};

/// Full sweep as one program.
Compiled compile_experiment(const ExperimentConfig& cfg);
/// Points [first, first + count) of the sweep.
Compiled compile_segment(const ExperimentConfig& cfg, int first, int count);

struct ResultSet {
  Kind kind = Kind::rabi;
  std::vector<double> x;
  std::vector<double> i;  // averaged readout per point
  std::vector<double> q;
  std::vector<std::vector<std::complex<double>>> shots;  // per point, if kept
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::uint64_t underruns = 0;
  std::vector<fit::FitResult> fits;
  std::map<std::string, double> derived;

  std::size_t size() const { return x.size(); }
};

ResultSet run_experiment(const ExperimentConfig& cfg);

std::uint64_t segment_seed(std::uint64_t seed, std::uint64_t index);

struct SegmentRun {
  std::vector<ShotRecord> shots;
  tproc::ExecutionTrace trace;
  MachineStats stats;
};

/// One compiled program on a fresh Machine.
SegmentRun execute(const ExperimentConfig& cfg, const Compiled& c, std::uint64_t seed,
                   tproc::TraceLevel trace = tproc::TraceLevel::none);

/// Per-point signal used for fitting: excited population (projected on the
/// configured centroids), or |IQ|^2 for resonator spectroscopy.
std::vector<double> signal_of(const ResultSet& r, const ExperimentConfig& cfg);
/// Fits the kind's model and fills `fits` and `derived`.
void analyze(ResultSet& r, const ExperimentConfig& cfg);
bool all_converged(const ResultSet& r);

struct RbSequence {
  std::vector<device::Gate> gates;  // including the recovery gate
};

/// Uniform draw of m gates plus the recovery that returns the ideal state
/// to ground.
RbSequence random_rb_sequence(int m, std::uint64_t seed);
device::Gate recovery_gate(const std::vector<device::Gate>& gates);
std::string compile_rb_sequence(const ExperimentConfig& cfg, const RbSequence& seq);

struct RbResult {
  ResultSet results;  // x = length, I/Q averaged over sequences
  std::vector<std::vector<double>> survival;  // [length][sequence]
  std::vector<double> mean_survival;
  fit::FitResult fit;
  double p = 0;
  double f_avg = 0;
};

RbResult run_rb(const ExperimentConfig& cfg);

struct LatencyReport {
  Cycle trigger_to_valid = 0;
  Cycle cond_jump = 0;
  Cycle next_pulse = 0;
  double cond_jump_ns = 0;
  double next_pulse_ns = 0;
  double converter_ns[3] = {};  // bypassed, NCO, NCO + interpolation
  double total_min_ns = 0;
  double total_max_ns = 0;
};

LatencyReport run_feedback_latency(const ExperimentConfig& cfg);

/// data.csv (x,I,Q,mag,phase), shots.csv if present, manifest.json.
void export_results(const ResultSet& r, const std::string& dir);
ResultSet import_results(const std::string& dir);
std::string results_csv(const ResultSet& r);
/// SHA-1 of "blob <size>\0" + data, hex.
std::string git_blob_sha1(std::string_view data);

}  // namespace qctrl::exp
