#pragma once

// Two-level transmon dispersively coupled to a readout cavity.
//
// The state is a Bloch vector in the frame rotating at f_q, z = +1 for the
// ground state. Drive pulses rotate it and then pass it through a
// depolarizing channel of strength 2 r(duration) with
// r(t) = (t/3)(1/T1 + 1/T2); free evolution relaxes z toward thermal
// equilibrium with T1 and shrinks the transverse part with T2.
// Z-family gates are frame updates: they change the phase seen by later
// drive pulses and take no time.

#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "qctrl/config.hpp"

namespace qctrl::device {

using cplx = std::complex<double>;

struct TransmonParams {
  double f_q = 4.743e9;
  double f_r = 6.2e9;
  double chi_over_2pi = 350e3;
  double kappa = 700e3;  // cavity FWHM
  double T1 = 119e-6;
  double T2 = 148e-6;
  double rabi_rate_per_gain = 16e6;  // Hz of Rabi frequency per unit envelope amplitude
  double f_ro = 6.2e9;               // frequency at which mu_g / mu_e are the centroids
  cplx mu_g{800.0, 800.0};
  cplx mu_e{800.0, -800.0};
  double sigma_iq = 857.22;  // per axis in a 1 us window
  double thermal_pop = 0.0;
  double gate_time = 100e-9;
  bool decoherence = true;

  void validate() const;
  /// Per-axis noise for an integration window of `window_s`.
  double sigma_for_window(double window_s) const;
};

inline constexpr double kSigmaReferenceWindow = 1e-6;

TransmonParams params_from(const KeyValues& kv, TransmonParams base = {});
TransmonParams load_params(const std::string& path);
std::string params_to_text(const TransmonParams& p);

/// (t/3)(1/T1 + 1/T2).
double coherence_error(double t, double T1, double T2);

/// 1 - erfc(d / (2 sqrt(2) sigma)) / 2: two equal-width Gaussian clouds,
/// threshold at the midpoint.
double assignment_fidelity(double separation, double sigma);
/// Noise per axis that gives `fidelity` for the given centroid separation.
double sigma_for_fidelity(double fidelity, double separation);
/// Sets sigma_iq so a `window_s` readout at f_ro reaches `fidelity`.
TransmonParams calibrated_for(TransmonParams p, double fidelity, double window_s);

enum class Gate : std::uint8_t { I, X, Y, Z, X2, mX2, Y2, mY2, Z2, mZ2 };
inline constexpr int kNumGates = 10;

struct GateOp {
  Gate gate = Gate::I;

  bool virtual_z() const { return gate == Gate::Z || gate == Gate::Z2 || gate == Gate::mZ2; }
  /// Rotation angle (rad) and axis phase (rad, 0 = x, pi/2 = y); Z-family
  /// gates report their z angle with axis = nan.
  double angle() const;
  double axis() const;
  friend bool operator==(const GateOp&, const GateOp&) = default;
};

std::string_view gate_name(Gate g);
std::optional<Gate> parse_gate(std::string_view name);

struct Bloch {
  double x = 0, y = 0, z = 1;
};

/// A drive pulse as seen in the qubit frame.
struct DrivePulse {
  double t_start = 0;      // s
  double duration = 0;     // s
  double area = 0;         // integral of |envelope| dt, envelope full scale = 1 (s)
  double t_eff = 0;        // (integral |env|)^2 / integral |env|^2 (s)
  double phase = 0;        // drive phase relative to the qubit frame at t_start (rad)
  double detuning_hz = 0;  // drive frequency minus f_q
};

struct ReadoutProbe {
  double freq_hz = 0;
  double amplitude = 1.0;  // relative to the calibrated readout amplitude
  double window_s = 3e-6;
};

struct Measurement {
  bool excited = false;
  cplx iq{};
};

class Transmon {
 public:
  explicit Transmon(TransmonParams p = {}, std::uint64_t seed = 0);

  const TransmonParams& params() const { return p_; }

  /// Transmission through the cavity for the given qubit state; 1 on the
  /// shifted resonance. Ground sits at f_r - chi, excited at f_r + chi.
  cplx cavity_response(double f_probe, bool excited) const;
  /// Noise-free IQ centroid for a probe.
  cplx centroid(const ReadoutProbe& probe, bool excited) const;

  void drive(const DrivePulse& pulse);
  /// Free evolution; `phase` additionally rotates about z.
  void idle(double tau, double phase = 0);
  /// Free evolution up to absolute time t (no-op if t is in the past).
  void advance_to(double t);

  Measurement measure(const ReadoutProbe& probe);
  Measurement measure(double window_s) { return measure({p_.f_ro, 1.0, window_s}); }

  void apply_gate(GateOp g);

  /// Thermal equilibrium, frame phase zero.
  void reset();

  double p_excited() const { return 0.5 * (1.0 - b_.z); }
  double bloch_phase() const;
  const Bloch& bloch() const { return b_; }
  void set_bloch(Bloch b) { b_ = b; }
  double time() const { return t_; }
  double frame_phase() const { return frame_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  void rotate(double nx, double ny, double nz, double angle);
  void depolarize(double t);

  TransmonParams p_;
  Bloch b_;
  double t_ = 0;
  double frame_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace qctrl::device
