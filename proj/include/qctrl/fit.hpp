#pragma once

// Damped nonlinear least squares (Levenberg-Marquardt, central-difference
// Jacobian) over a few fixed models. Parameters are fitted in units of a
// per-model scale taken from the initial guess, so GHz centers and 100 kHz
// widths converge alike.
//
// Initial guesses:
//   lorentzian     peak-pick relative to the median, half-width at half height
//   exp_decay      offset from the tail, log-linear regression for tau
//   damped_cos     zero-padded DFT peak for f and phase, log-linear envelope
//   rabi_cos       DFT peak for the period
//   bimodal_gauss  split at the weighted mean, moments of each half
//   rb_decay       offset 1/2 (or the minimum), log-linear for p

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qctrl/types.hpp"

namespace qctrl::fit {

enum class Model { lorentzian, exp_decay, damped_cos, rabi_cos, bimodal_gauss, rb_decay };

std::string_view model_name(Model m);
std::optional<Model> parse_model(std::string_view name);
/// lorentzian:    A g^2 / ((x - x0)^2 + g^2) + B        [x0, gamma, A, B]
/// exp_decay:     A exp(-x / tau) + B                     [A, tau, B]
/// damped_cos:    A exp(-x / tau) cos(2 pi f x + phi) + B [A, tau, f, phi, B]
/// rabi_cos:      B - A cos(pi x / x_pi)                  [x_pi, A, B]
/// bimodal_gauss: sum of two Gaussians, shared width      [n1, mu1, n2, mu2, sigma]
/// rb_decay:      A p^x + B                               [A, p, B]
const std::vector<std::string>& param_names(Model m);
double evaluate(Model m, std::span<const double> params, double x);

struct FitOptions {
  int max_evaluations = 4000;
  std::optional<std::vector<double>> initial;  // overrides the heuristic
  std::map<std::string, double> fixed;          // held at the given value, error 0
};

struct FitResult {
  std::string model;
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> errors;  // empty unless converged
  double residual_norm = 0;
  bool converged = false;
  int evaluations = 0;
  std::string status;

  double value(std::string_view name) const;
  double error(std::string_view name) const;
};

FitResult fit(Model m, std::span<const double> x, std::span<const double> y, const FitOptions& opt = {});

std::vector<double> initial_guess(Model m, std::span<const double> x, std::span<const double> y);

struct Histogram {
  std::vector<double> centers;
  std::vector<double> counts;
};
Histogram histogram(std::span<const double> v, int bins);

/// Assignment fidelity implied by a bimodal_gauss fit.
double bimodal_fidelity(const FitResult& r);

}  // namespace qctrl::fit
