#include <cmath>
#include <numbers>
#include <sstream>

#include "qctrl/device.hpp"

namespace qctrl::device {

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error("transmon parameters: " + what);
}

}  // namespace

void TransmonParams::validate() const {
  require(f_q > 0 && f_r > 0 && f_ro > 0, "frequencies must be positive");
  require(chi_over_2pi > 0, "chi must be positive");
  require(kappa > 0, "kappa must be positive");
  require(T1 > 0 && T2 > 0, "T1 and T2 must be positive");
  require(T2 <= 2 * T1, "T2 must not exceed 2*T1");
  require(rabi_rate_per_gain > 0, "rabi rate must be positive");
  require(gate_time > 0, "gate time must be positive");
  require(sigma_iq >= 0, "sigma_iq must be non-negative");
  require(thermal_pop >= 0 && thermal_pop < 0.5, "thermal population must be in [0, 0.5)");
  require(mu_g != mu_e, "ground and excited centroids coincide");
}

double TransmonParams::sigma_for_window(double window_s) const {
  if (window_s <= 0) throw Error("integration window must be positive");
  return sigma_iq / std::sqrt(window_s / kSigmaReferenceWindow);
}

TransmonParams params_from(const KeyValues& kv, TransmonParams p) {
  p.f_q = kv.num_or("f_q", p.f_q);
  p.f_r = kv.num_or("f_r", p.f_r);
  p.chi_over_2pi = kv.num_or("chi_over_2pi", p.chi_over_2pi);
  p.kappa = kv.num_or("kappa", p.kappa);
  p.T1 = kv.num_or("T1", p.T1);
  p.T2 = kv.num_or("T2", p.T2);
  p.rabi_rate_per_gain = kv.num_or("rabi_rate_per_gain", p.rabi_rate_per_gain);
  p.f_ro = kv.num_or("f_ro", p.f_ro);
  p.mu_g = {kv.num_or("mu_g_i", p.mu_g.real()), kv.num_or("mu_g_q", p.mu_g.imag())};
  p.mu_e = {kv.num_or("mu_e_i", p.mu_e.real()), kv.num_or("mu_e_q", p.mu_e.imag())};
  p.sigma_iq = kv.num_or("sigma_iq", p.sigma_iq);
  p.thermal_pop = kv.num_or("thermal_pop", p.thermal_pop);
  p.gate_time = kv.num_or("gate_time", p.gate_time);
  p.decoherence = kv.flag_or("decoherence", p.decoherence);
  p.validate();
  return p;
}

TransmonParams load_params(const std::string& path) {
  auto kv = KeyValues::load(path);
  auto p = params_from(kv);
  if (auto extra = kv.unused(); !extra.empty()) throw Error(path + ": unknown device key '" + extra.front() + "'");
  return p;
}

std::string params_to_text(const TransmonParams& p) {
  std::ostringstream s;
  s.precision(17);
  s << "f_q = " << p.f_q << "\nf_r = " << p.f_r << "\nchi_over_2pi = " << p.chi_over_2pi << "\nkappa = " << p.kappa
    << "\nT1 = " << p.T1 << "\nT2 = " << p.T2 << "\nrabi_rate_per_gain = " << p.rabi_rate_per_gain
    << "\nf_ro = " << p.f_ro << "\nmu_g_i = " << p.mu_g.real() << "\nmu_g_q = " << p.mu_g.imag()
    << "\nmu_e_i = " << p.mu_e.real() << "\nmu_e_q = " << p.mu_e.imag() << "\nsigma_iq = " << p.sigma_iq
    << "\nthermal_pop = " << p.thermal_pop << "\ngate_time = " << p.gate_time
    << "\ndecoherence = " << (p.decoherence ? "on" : "off") << "\n";
  return s.str();
}

double coherence_error(double t, double T1, double T2) { return t / 3.0 * (1.0 / T1 + 1.0 / T2); }

double assignment_fidelity(double separation, double sigma) {
  if (sigma <= 0) return 1.0;
  return 1.0 - 0.5 * std::erfc(separation / (2.0 * std::numbers::sqrt2 * sigma));
}

double sigma_for_fidelity(double fidelity, double separation) {
  if (!(fidelity > 0.5 && fidelity < 1.0)) throw Error("fidelity target must be in (0.5, 1)");
  // erfc is monotone, so bisect on x = d / (2 sqrt2 sigma).
  const double target = 2.0 * (1.0 - fidelity);
  double lo = 0, hi = 10;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid) > target ? lo : hi) = mid;
  }
  return separation / (2.0 * std::numbers::sqrt2 * 0.5 * (lo + hi));
}

TransmonParams calibrated_for(TransmonParams p, double fidelity, double window_s) {
  const double sw = sigma_for_fidelity(fidelity, std::abs(p.mu_e - p.mu_g));
  p.sigma_iq = sw * std::sqrt(window_s / kSigmaReferenceWindow);
  return p;
}

double GateOp::angle() const {
  switch (gate) {
    case Gate::I: return 0;
    case Gate::X:
    case Gate::Y:
    case Gate::Z: return std::numbers::pi;
    case Gate::X2:
    case Gate::mX2:
    case Gate::Y2:
    case Gate::mY2:
    case Gate::Z2: return std::numbers::pi / 2;
    case Gate::mZ2: return -std::numbers::pi / 2;
  }
  return 0;
}

double GateOp::axis() const {
  switch (gate) {
    case Gate::I:
    case Gate::X:
    case Gate::X2: return 0;
    case Gate::mX2: return std::numbers::pi;
    case Gate::Y:
    case Gate::Y2: return std::numbers::pi / 2;
    case Gate::mY2: return -std::numbers::pi / 2;
    default: return std::nan("");
  }
}

std::string_view gate_name(Gate g) {
  static constexpr std::string_view names[kNumGates] = {"I", "X", "Y", "Z", "X/2", "-X/2", "Y/2", "-Y/2", "Z/2", "-Z/2"};
  return names[static_cast<int>(g)];
}

std::optional<Gate> parse_gate(std::string_view name) {
  for (int k = 0; k < kNumGates; ++k) {
    if (gate_name(static_cast<Gate>(k)) == name) return static_cast<Gate>(k);
  }
  return std::nullopt;
}

Transmon::Transmon(TransmonParams p, std::uint64_t seed) : p_(p), rng_(seed) {
  p_.validate();
  reset();
}

void Transmon::reset() {
  b_ = {0, 0, 1.0 - 2.0 * p_.thermal_pop};
  frame_ = 0;
}

cplx Transmon::cavity_response(double f_probe, bool excited) const {
  const double fc = p_.f_r + (excited ? p_.chi_over_2pi : -p_.chi_over_2pi);
  const double hw = 0.5 * p_.kappa;
  return hw / cplx(hw, f_probe - fc);
}

cplx Transmon::centroid(const ReadoutProbe& probe, bool excited) const {
  const cplx mu = excited ? p_.mu_e : p_.mu_g;
  return probe.amplitude * mu * cavity_response(probe.freq_hz, excited) / cavity_response(p_.f_ro, excited);
}

double Transmon::bloch_phase() const { return std::atan2(b_.y, b_.x); }

void Transmon::rotate(double nx, double ny, double nz, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dot = nx * b_.x + ny * b_.y + nz * b_.z;
  const Bloch cr{ny * b_.z - nz * b_.y, nz * b_.x - nx * b_.z, nx * b_.y - ny * b_.x};
  b_ = {b_.x * c + cr.x * s + nx * dot * (1 - c), b_.y * c + cr.y * s + ny * dot * (1 - c),
        b_.z * c + cr.z * s + nz * dot * (1 - c)};
}

void Transmon::depolarize(double t) {
  if (!p_.decoherence || t <= 0) return;
  const double shrink = std::max(0.0, 1.0 - 2.0 * coherence_error(t, p_.T1, p_.T2));
  b_ = {b_.x * shrink, b_.y * shrink, b_.z * shrink};
}

void Transmon::drive(const DrivePulse& pulse) {
  if (pulse.duration < 0 || pulse.area < 0) throw Error("drive pulse with negative duration or area");
  advance_to(pulse.t_start);
  if (pulse.area > 0 && pulse.t_eff > 0) {
    const double omega = kTwoPi * p_.rabi_rate_per_gain * pulse.area / pulse.t_eff;
    const double delta = kTwoPi * pulse.detuning_hz;
    const double og = std::hypot(omega, delta);
    const double phi = pulse.phase + frame_;
    // Static field in the frame of the drive, then back to the qubit frame.
    rotate(omega * std::cos(phi) / og, omega * std::sin(phi) / og, -delta / og, og * pulse.t_eff);
    rotate(0, 0, 1, delta * pulse.t_eff);
  }
  depolarize(pulse.duration);
  t_ = std::max(t_, pulse.t_start + pulse.duration);
}

void Transmon::idle(double tau, double phase) {
  if (tau < 0) throw Error("idle time must be non-negative");
  if (phase != 0) rotate(0, 0, 1, phase);
  if (p_.decoherence && tau > 0) {
    const double z_eq = 1.0 - 2.0 * p_.thermal_pop;
    const double e1 = std::exp(-tau / p_.T1), e2 = std::exp(-tau / p_.T2);
    b_ = {b_.x * e2, b_.y * e2, z_eq + (b_.z - z_eq) * e1};
  }
  t_ += tau;
}

void Transmon::advance_to(double t) {
  if (t > t_) idle(t - t_);
}

Measurement Transmon::measure(const ReadoutProbe& probe) {
  Measurement m;
  const double pe = std::clamp(p_excited(), 0.0, 1.0);
  m.excited = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < pe;
  const double s = p_.sigma_for_window(probe.window_s);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double ni = noise(rng_), nq = noise(rng_);
  m.iq = centroid(probe, m.excited) + cplx(s * ni, s * nq);
  b_ = {0, 0, m.excited ? -1.0 : 1.0};
  return m;
}

void Transmon::apply_gate(GateOp g) {
  if (g.virtual_z()) {
    frame_ -= g.angle();
    return;
  }
  const double phi = g.axis() + frame_;
  if (g.angle() != 0) rotate(std::cos(phi), std::sin(phi), 0, g.angle());
  depolarize(p_.gate_time);
  t_ += p_.gate_time;
}

}  // namespace qctrl::device
