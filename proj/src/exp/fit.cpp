#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "qctrl/fit.hpp"
#include "qctrl/types.hpp"

namespace qctrl::fit {

namespace {

constexpr double kPi = std::numbers::pi;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double span_of(std::span<const double> x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

// Peak of a zero-padded DFT of y - mean(y) over frequencies up to the grid
// Nyquist; x need not be uniform.
std::pair<double, double> dft_peak(std::span<const double> x, std::span<const double> y) {
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
  const double T = span_of(x);
  const std::size_t n = x.size();
  const int steps = static_cast<int>(4 * n);
  const double df = 1.0 / (4.0 * T);
  const double fmax = 0.5 * double(n - 1) / T;
  double best = -1, best_f = 1.0 / T, best_phase = 0;
  for (int k = 1; k < steps && k * df <= fmax; ++k) {
    const double f = k * df;
    std::complex<double> acc;
    for (std::size_t j = 0; j < n; ++j) acc += (y[j] - mean) * std::polar(1.0, -2 * kPi * f * (x[j] - x[0]));
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_f = f;
      best_phase = std::arg(acc) - 2 * kPi * f * x[0];
    }
  }
  return {best_f, best_phase};
}

// Least squares slope/intercept of log|y - off| where the residual keeps
// the sign of the first point and is not buried in noise.
std::optional<std::pair<double, double>> log_linear(std::span<const double> x, std::span<const double> y, double off) {
  const double y0 = y[0] - off;
  if (y0 == 0) return std::nullopt;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = (y[k] - off) / y0;
    if (v <= 0.1) continue;
    const double l = std::log(v);
    sx += x[k];
    sy += l;
    sxx += x[k] * x[k];
    sxy += x[k] * l;
    ++n;
  }
  if (n < 2) return std::nullopt;
  const double den = n * sxx - sx * sx;
  if (den == 0) return std::nullopt;
  const double slope = (n * sxy - sx * sy) / den;
  return std::pair{slope, (sy - slope * sx) / n};
}

std::vector<double> guess_lorentzian(std::span<const double> x, std::span<const double> y) {
  const double B = median(std::vector<double>(y.begin(), y.end()));
  std::size_t pk = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (std::abs(y[k] - B) > std::abs(y[pk] - B)) pk = k;
  }
  const double A = y[pk] - B;
  std::size_t l = pk, r = pk;
  while (l > 0 && std::abs(y[l] - B) > std::abs(A) / 2) --l;
  while (r + 1 < y.size() && std::abs(y[r] - B) > std::abs(A) / 2) ++r;
  double g = 0.5 * std::abs(x[r] - x[l]);
  if (g == 0) g = span_of(x) / double(x.size());
  return {x[pk], g, A, B};
}

std::vector<double> guess_exp(std::span<const double> x, std::span<const double> y) {
  const std::size_t tail = std::max<std::size_t>(1, y.size() / 10);
  const double B = std::accumulate(y.end() - static_cast<std::ptrdiff_t>(tail), y.end(), 0.0) / double(tail);
  double tau = span_of(x) / 3;
  if (auto ll = log_linear(x, y, B); ll && ll->first < 0) tau = -1.0 / ll->first;
  return {y[0] - B, tau, B};
}

std::vector<double> guess_damped_cos(std::span<const double> x, std::span<const double> y) {
  const double B = std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
  const auto [f, ph] = dft_peak(x, y);
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  return {0.5 * (*hi - *lo), span_of(x) / 2, f, std::remainder(ph, 2 * kPi), B};
}

std::vector<double> guess_rabi(std::span<const double> x, std::span<const double> y) {
  const double B = std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
  const auto [f, ph] = dft_peak(x, y);
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  // Sign so that the model starts near y[0].
  const double A = 0.5 * (*hi - *lo) * (y[0] <= B ? 1 : -1);
  return {0.5 / f, A, B};
}

std::vector<double> guess_bimodal(std::span<const double> x, std::span<const double> y) {
  double w = 0, m = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    w += y[k];
    m += y[k] * x[k];
  }
  m /= w;
  double w1 = 0, m1 = 0, w2 = 0, m2 = 0, n1 = 0, n2 = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] < m) {
      w1 += y[k], m1 += y[k] * x[k], n1 = std::max(n1, y[k]);
    } else {
      w2 += y[k], m2 += y[k] * x[k], n2 = std::max(n2, y[k]);
    }
  }
  m1 = w1 > 0 ? m1 / w1 : m - span_of(x) / 4;
  m2 = w2 > 0 ? m2 / w2 : m + span_of(x) / 4;
  double v = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double c = x[k] < m ? m1 : m2;
    v += y[k] * (x[k] - c) * (x[k] - c);
  }
  double s = std::sqrt(v / w);
  if (!(s > 0)) s = span_of(x) / 10;
  return {n1, m1, n2, m2, s};
}

std::vector<double> guess_rb(std::span<const double> x, std::span<const double> y) {
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  double B = (*lo >= 0 && *hi <= 1) ? 0.5 : *lo - 0.1 * (*hi - *lo);
  if (y[0] - B <= 0) B = *lo - 0.1 * std::max(1e-9, *hi - *lo);
  double p = 0.99;
  double A = y[0] - B;
  if (auto ll = log_linear(x, y, B)) {
    p = std::clamp(std::exp(ll->first), 0.5, 1.0 - 1e-9);
    A = std::exp(ll->second);
  }
  return {A, p, B};
}

// Per-parameter fitting units.
std::vector<double> scales(Model m, const std::vector<double>& p, std::span<const double> x, std::span<const double> y) {
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double ys = std::max({*hi - *lo, std::abs(*hi), std::abs(*lo), 1e-300});
  const double xs = std::max(span_of(x), 1e-300);
  auto nz = [](double v, double d) { return std::abs(v) > 0 ? std::abs(v) : d; };
  switch (m) {
    case Model::lorentzian: return {nz(p[1], xs), nz(p[1], xs), ys, ys};
    case Model::exp_decay: return {ys, nz(p[1], xs), ys};
    case Model::damped_cos: return {ys, nz(p[1], xs), nz(p[2], 1 / xs), 1.0, ys};
    case Model::rabi_cos: return {nz(p[0], xs), ys, ys};
    case Model::bimodal_gauss: return {ys, nz(p[4], xs), ys, nz(p[4], xs), nz(p[4], xs)};
    case Model::rb_decay: return {ys, std::max(1e-4, 1 - std::abs(p[1])), ys};
  }
  return std::vector<double>(p.size(), 1.0);
}

struct Residuals : Eigen::DenseFunctor<double> {
  Model model;
  std::span<const double> x, y;
  Eigen::VectorXd p0, s;
  std::vector<Eigen::Index> free;  // u[k] moves p[free[k]]

  Residuals(Model m, std::span<const double> xv, std::span<const double> yv, Eigen::VectorXd p, Eigen::VectorXd sc,
            std::vector<Eigen::Index> fr)
      : DenseFunctor<double>(static_cast<int>(fr.size()), static_cast<int>(xv.size())),
        model(m), x(xv), y(yv), p0(std::move(p)), s(std::move(sc)), free(std::move(fr)) {}

  Eigen::VectorXd params(const Eigen::VectorXd& u) const {
    Eigen::VectorXd p = p0;
    for (std::size_t k = 0; k < free.size(); ++k) p[free[k]] += s[free[k]] * u[static_cast<Eigen::Index>(k)];
    return p;
  }

  int operator()(const Eigen::VectorXd& u, Eigen::VectorXd& fvec) const {
    const Eigen::VectorXd p = params(u);
    const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
    for (std::size_t k = 0; k < x.size(); ++k) fvec[static_cast<Eigen::Index>(k)] = evaluate(model, ps, x[k]) - y[k];
    return 0;
  }

  int df(const Eigen::VectorXd& u, Eigen::MatrixXd& jac) const {
    const double h = 1e-6;
    Eigen::VectorXd fp(values()), fm(values());
    for (Eigen::Index j = 0; j < u.size(); ++j) {
      Eigen::VectorXd a = u, b = u;
      a[j] += h;
      b[j] -= h;
      (*this)(a, fp);
      (*this)(b, fm);
      jac.col(j) = (fp - fm) / (2 * h);
    }
    return 0;
  }
};

const char* status_text(Eigen::LevenbergMarquardtSpace::Status s) {
  using namespace Eigen::LevenbergMarquardtSpace;
  switch (s) {
    case RelativeReductionTooSmall: return "relative reduction below tolerance";
    case RelativeErrorTooSmall: return "relative step below tolerance";
    case RelativeErrorAndReductionTooSmall: return "relative step and reduction below tolerance";
    case CosinusTooSmall: return "residual orthogonal to the Jacobian";
    case TooManyFunctionEvaluation: return "evaluation limit reached";
    case FtolTooSmall: return "ftol too small";
    case XtolTooSmall: return "xtol too small";
    case GtolTooSmall: return "gtol too small";
    case ImproperInputParameters: return "improper input";
    default: return "not finished";
  }
}

}  // namespace

std::string_view model_name(Model m) {
  switch (m) {
    case Model::lorentzian: return "lorentzian";
    case Model::exp_decay: return "exp_decay";
    case Model::damped_cos: return "damped_cos";
    case Model::rabi_cos: return "rabi_cos";
    case Model::bimodal_gauss: return "bimodal_gauss";
    case Model::rb_decay: return "rb_decay";
  }
  return "?";
}

std::optional<Model> parse_model(std::string_view name) {
  for (Model m : {Model::lorentzian, Model::exp_decay, Model::damped_cos, Model::rabi_cos, Model::bimodal_gauss,
                  Model::rb_decay}) {
    if (model_name(m) == name) return m;
  }
  return std::nullopt;
}

const std::vector<std::string>& param_names(Model m) {
  static const std::vector<std::string> names[] = {
      {"x0", "gamma", "A", "B"},           {"A", "tau", "B"},       {"A", "tau", "f", "phi", "B"},
      {"x_pi", "A", "B"},                  {"n1", "mu1", "n2", "mu2", "sigma"}, {"A", "p", "B"},
  };
  return names[static_cast<int>(m)];
}

double evaluate(Model m, std::span<const double> p, double x) {
  switch (m) {
    case Model::lorentzian: {
      const double d = x - p[0], g2 = p[1] * p[1];
      return p[2] * g2 / (d * d + g2) + p[3];
    }
    case Model::exp_decay: return p[0] * std::exp(-x / p[1]) + p[2];
    case Model::damped_cos: return p[0] * std::exp(-x / p[1]) * std::cos(2 * kPi * p[2] * x + p[3]) + p[4];
    case Model::rabi_cos: return p[2] - p[1] * std::cos(kPi * x / p[0]);
    case Model::bimodal_gauss: {
      const double a = (x - p[1]) / p[4], b = (x - p[3]) / p[4];
      return p[0] * std::exp(-0.5 * a * a) + p[2] * std::exp(-0.5 * b * b);
    }
    case Model::rb_decay: return p[0] * std::pow(p[1], x) + p[2];
  }
  return 0;
}

std::vector<double> initial_guess(Model m, std::span<const double> x, std::span<const double> y) {
  switch (m) {
    case Model::lorentzian: return guess_lorentzian(x, y);
    case Model::exp_decay: return guess_exp(x, y);
    case Model::damped_cos: return guess_damped_cos(x, y);
    case Model::rabi_cos: return guess_rabi(x, y);
    case Model::bimodal_gauss: return guess_bimodal(x, y);
    case Model::rb_decay: return guess_rb(x, y);
  }
  return {};
}

double FitResult::value(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return params[k];
  }
  throw Error("fit " + model + " has no parameter " + std::string(name));
}

double FitResult::error(std::string_view name) const {
  if (errors.empty()) throw Error("fit " + model + " did not converge; no errors reported");
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return errors[k];
  }
  throw Error("fit " + model + " has no parameter " + std::string(name));
}

FitResult fit(Model m, std::span<const double> x, std::span<const double> y, const FitOptions& opt) {
  const auto& names = param_names(m);
  if (x.size() != y.size()) throw Error("fit: x and y lengths differ");
  if (x.size() < names.size()) {
    throw Error("fit " + std::string(model_name(m)) + ": needs at least " + std::to_string(names.size()) + " points");
  }
  auto p0 = opt.initial.value_or(initial_guess(m, x, y));
  if (p0.size() != names.size()) throw Error("fit: initial guess has the wrong size");
  std::vector<Eigen::Index> free;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (auto it = opt.fixed.find(names[k]); it != opt.fixed.end()) {
      p0[k] = it->second;
    } else {
      free.push_back(static_cast<Eigen::Index>(k));
    }
  }
  for (const auto& [name, v] : opt.fixed) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw Error("fit " + std::string(model_name(m)) + ": no parameter named " + name);
    }
  }
  if (free.empty()) throw Error("fit: every parameter is fixed");
  const auto sc = scales(m, p0, x, y);
  const auto n = static_cast<Eigen::Index>(p0.size());
  const auto nf = static_cast<Eigen::Index>(free.size());
  Residuals f(m, x, y, Eigen::Map<const Eigen::VectorXd>(p0.data(), n), Eigen::Map<const Eigen::VectorXd>(sc.data(), n),
              free);
  Eigen::LevenbergMarquardt<Residuals> lm(f);
  lm.setMaxfev(opt.max_evaluations);
  lm.setXtol(1e-12);
  lm.setFtol(1e-12);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(nf);
  const auto status = lm.minimize(u);

  FitResult r;
  r.model = std::string(model_name(m));
  r.names = names;
  const Eigen::VectorXd p = f.params(u);
  r.params.assign(p.data(), p.data() + n);
  Eigen::VectorXd fvec(f.values());
  f(u, fvec);
  r.residual_norm = fvec.norm();
  r.evaluations = static_cast<int>(lm.nfev());
  r.status = status_text(status);
  using namespace Eigen::LevenbergMarquardtSpace;
  const bool finite = p.allFinite() && std::isfinite(r.residual_norm);
  r.converged = finite && (status == RelativeReductionTooSmall || status == RelativeErrorTooSmall ||
                           status == RelativeErrorAndReductionTooSmall || status == CosinusTooSmall);
  if (r.converged) {
    Eigen::MatrixXd J(f.values(), nf);
    f.df(u, J);
    const Eigen::MatrixXd cov_u = (J.transpose() * J).completeOrthogonalDecomposition().pseudoInverse();
    const double dof = std::max<double>(1.0, double(x.size()) - double(nf));
    const double s2 = fvec.squaredNorm() / dof;
    r.errors.assign(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index k = 0; k < nf; ++k) {
      r.errors[static_cast<std::size_t>(free[k])] = sc[free[k]] * std::sqrt(std::max(0.0, cov_u(k, k) * s2));
    }
  }
  // Canonical signs.
  if (m == Model::lorentzian) r.params[1] = std::abs(r.params[1]);
  if (m == Model::bimodal_gauss) r.params[4] = std::abs(r.params[4]);
  if (m == Model::damped_cos) r.params[3] = std::remainder(r.params[3], 2 * kPi);
  return r;
}

Histogram histogram(std::span<const double> v, int bins) {
  if (v.empty() || bins < 2) throw Error("histogram needs data and at least two bins");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double w = (*hi - *lo) / bins;
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0.0);
  for (int k = 0; k < bins; ++k) h.centers.push_back(*lo + (k + 0.5) * w);
  for (double x : v) {
    auto k = w > 0 ? static_cast<std::size_t>((x - *lo) / w) : 0;
    h.counts[std::min(k, h.counts.size() - 1)] += 1;
  }
  return h;
}

double bimodal_fidelity(const FitResult& r) {
  const double d = std::abs(r.value("mu2") - r.value("mu1"));
  const double s = std::abs(r.value("sigma"));
  return 1.0 - 0.5 * std::erfc(d / (2.0 * std::numbers::sqrt2 * s));
}

}  // namespace qctrl::fit
