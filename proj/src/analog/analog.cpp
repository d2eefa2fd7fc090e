#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "qctrl/analog.hpp"

namespace qctrl::analog {

double FilterModel::attenuation(double f) const {
  const auto& b = breakpoints;
  if (b.empty()) return 0.0;
  if (f <= b.front().first) return b.front().second;
  if (f >= b.back().first) return b.back().second;
  const auto it = std::upper_bound(b.begin(), b.end(), f, [](double x, const auto& p) { return x < p.first; });
  const auto& [f1, a1] = *(it - 1);
  const auto& [f2, a2] = *it;
  return a1 + (a2 - a1) * (f - f1) / (f2 - f1);
}

double FilterModel::min_attenuation(double f_lo, double f_hi) const {
  double best = std::min(attenuation(f_lo), attenuation(f_hi));
  for (const auto& [f, a] : breakpoints) {
    if (f > f_lo && f < f_hi) best = std::min(best, a);
  }
  return best;
}

void FilterModel::validate() const {
  if (breakpoints.empty()) throw Error("filter '" + name + "' has no breakpoints");
  for (std::size_t k = 0; k < breakpoints.size(); ++k) {
    if (breakpoints[k].second < 0) throw Error("filter '" + name + "' has negative attenuation");
    if (k == 0) continue;
    if (!(breakpoints[k].first > breakpoints[k - 1].first)) throw Error("filter '" + name + "' breakpoints must ascend");
    const double d = breakpoints[k].second - breakpoints[k - 1].second;
    if (kind == FilterKind::low_pass && d < 0) throw Error("low-pass '" + name + "' attenuation must not fall with frequency");
    if (kind == FilterKind::high_pass && d > 0) throw Error("high-pass '" + name + "' attenuation must not rise with frequency");
  }
}

FilterModel filter_preset(const std::string& name) {
  FilterModel f;
  f.name = name;
  if (name == "lfcw-6000") {
    f.kind = FilterKind::low_pass;
    f.breakpoints = {{8.0e9, 0.0}, {8.1e9, 31.0}, {8.478e9, 45.0}, {10.0e9, 60.0}};
  } else if (name == "lfcn-1800") {
    f.kind = FilterKind::low_pass;
    f.breakpoints = {{1.8e9, 0.0}, {2.2e9, 20.0}, {3.0e9, 40.0}};
  } else if (name == "lfcw-6300-hp") {
    f.kind = FilterKind::high_pass;
    f.breakpoints = {{4.5e9, 40.0}, {5.8e9, 20.0}, {6.3e9, 0.0}};
  } else {
    throw Error("unknown filter preset '" + name + "'");
  }
  f.validate();
  return f;
}

std::vector<std::string> filter_preset_names() { return {"lfcw-6000", "lfcn-1800", "lfcw-6300-hp"}; }

std::vector<FilterModel> filter_set(const std::string& name) {
  if (name == "output") return {filter_preset("lfcw-6000")};
  if (name == "bandwidth-table") return {filter_preset("lfcn-1800"), filter_preset("lfcw-6300-hp")};
  if (name == "none") return {};
  throw Error("unknown filter set '" + name + "'");
}

namespace {

double total_attenuation(const std::vector<FilterModel>& filters, double f) {
  double a = 0;
  for (const auto& flt : filters) a += flt.attenuation(f);
  return a;
}

double total_min_attenuation(const std::vector<FilterModel>& filters, double lo, double hi) {
  // Each mask is piecewise linear, so the sum is too; its minimum sits at an
  // endpoint or at one of the breakpoints.
  std::vector<double> probes{lo, hi};
  for (const auto& flt : filters)
    for (const auto& [f, a] : flt.breakpoints)
      if (f > lo && f < hi) probes.push_back(f);
  double best = INFINITY;
  for (double f : probes) best = std::min(best, total_attenuation(filters, f));
  return filters.empty() ? 0.0 : best;
}

struct Product {
  int n, m, sign;
  ProductKind kind;
};

std::vector<Product> products(int max_order) {
  std::vector<Product> out;
  for (int n = 0; n <= max_order; ++n) {
    for (int m = 0; n + m <= max_order; ++m) {
      if (n == 0 && m == 0) continue;
      if (n == 0) {
        out.push_back({0, m, 0, m == 1 ? ProductKind::if_feedthrough : ProductKind::spur});
      } else if (m == 0) {
        out.push_back({n, 0, 0, n == 1 ? ProductKind::lo_feedthrough : ProductKind::spur});
      } else {
        const bool side = n == 1 && m == 1;
        out.push_back({n, m, -1, side ? ProductKind::lsb : ProductKind::spur});
        out.push_back({n, m, +1, side ? ProductKind::usb : ProductKind::spur});
      }
    }
  }
  return out;
}

double source_dbm(ProductKind k, const MixerModel& mx) {
  switch (k) {
    case ProductKind::lsb:
    case ProductKind::usb:
      return mx.carrier_dbm + mx.sideband_dbc;
    case ProductKind::if_feedthrough:
      return mx.carrier_dbm + mx.if_feedthrough_dbc;
    case ProductKind::lo_feedthrough:
      return mx.lo_feedthrough_dbm;
    default:
      return mx.carrier_dbm + mx.spur_dbc;
  }
}

const char* kind_name(ProductKind k) {
  switch (k) {
    case ProductKind::if_feedthrough: return "IF";
    case ProductKind::lo_feedthrough: return "LO";
    case ProductKind::lsb: return "LSB";
    case ProductKind::usb: return "USB";
    default: return "spur";
  }
}

std::string term(int n, int m, int sign) {
  std::ostringstream s;
  if (n > 0) s << (n > 1 ? std::to_string(n) : "") << "LO";
  if (n > 0 && m > 0) s << (sign < 0 ? "-" : "+");
  if (m > 0) s << (m > 1 ? std::to_string(m) : "") << "IF";
  return s.str();
}

Band product_band(const Product& p, double lo_hz, Band if_band) {
  const double s = p.sign == 0 ? 1.0 : double(p.sign);
  const double a = p.n * lo_hz + s * p.m * if_band.lo;
  const double b = p.n * lo_hz + s * p.m * if_band.hi;
  const double lo = std::min(a, b), hi = std::max(a, b);
  if (lo <= 0 && hi >= 0) return {0.0, std::max(-lo, hi)};
  if (hi < 0) return {-hi, -lo};
  return {lo, hi};
}

}  // namespace

std::string Spur::origin() const { return std::string(kind_name(kind)) + " " + term(n, m, sign); }

std::vector<Spur> spur_table(double if_hz, const MixerModel& mixer, const std::vector<FilterModel>& filters) {
  if (!(if_hz > 0)) throw Error("IF must be positive");
  if (!(mixer.lo_hz > 0)) throw Error("LO must be positive");
  if (mixer.max_order < 1) throw Error("spur order must be at least 1");
  for (const auto& f : filters) f.validate();
  std::vector<Spur> out;
  for (const auto& p : products(mixer.max_order)) {
    Spur s;
    s.n = p.n;
    s.m = p.m;
    s.sign = p.sign;
    s.kind = p.kind;
    const double sign = p.sign == 0 ? 1.0 : double(p.sign);
    s.freq_hz = std::abs(p.n * mixer.lo_hz + sign * p.m * if_hz);
    s.source_dbm = source_dbm(p.kind, mixer);
    s.atten_db = total_attenuation(filters, s.freq_hz);
    s.level_dbm = s.source_dbm - s.atten_db;
    s.level_dbc = s.level_dbm - mixer.carrier_dbm;
    out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(), [](const Spur& a, const Spur& b) { return a.freq_hz < b.freq_hz; });
  return out;
}

std::string spur_table_csv(const std::vector<Spur>& spurs) {
  std::ostringstream s;
  s << "freq_hz,n,m,sign,origin,source_dbm,atten_db,level_dbm,level_dbc\n";
  s << std::setprecision(12);
  for (const auto& x : spurs) {
    s << x.freq_hz << ',' << x.n << ',' << x.m << ',' << x.sign << ',' << x.origin() << ',' << x.source_dbm << ','
      << x.atten_db << ',' << x.level_dbm << ',' << x.level_dbc << '\n';
  }
  return s.str();
}

PlanReport plan_band(Band lo_range, Band if_band, Band target, const PlanOptions& opt) {
  if (!(lo_range.lo > 0 && lo_range.hi >= lo_range.lo)) throw Error("LO range must be positive and ordered");
  if (!(if_band.lo > 0 && if_band.hi >= if_band.lo)) throw Error("IF band must be positive and ordered");
  if (!(target.hi > target.lo && target.lo >= 0)) throw Error("target band must be non-empty");
  if (!(opt.lo_step_hz > 0)) throw Error("LO step must be positive");
  for (const auto& f : opt.filters) f.validate();

  PlanReport r;
  r.if_band = if_band;
  r.target = target;
  r.margin_db = opt.margin_db;
  const auto prods = products(std::max(opt.mixer.max_order, 2));
  const auto steps = static_cast<long>(std::floor((lo_range.hi - lo_range.lo) / opt.lo_step_hz + 1e-9));
  double best_width = -1;
  for (long k = 0; k <= steps + 1; ++k) {
    double lo = lo_range.lo + double(k) * opt.lo_step_hz;
    if (k == steps + 1) {
      if (lo_range.hi - (lo - opt.lo_step_hz) < 1.0) break;
      lo = lo_range.hi;
    }
    LoPlan p;
    p.lo_hz = lo;
    p.signal = {lo - if_band.hi, lo - if_band.lo};
    if (p.signal.lo <= 0) {
      p.reason = "IF band reaches the LO";
      r.los.push_back(p);
      continue;
    }
    p.occupied = {std::max(p.signal.lo, target.lo), std::min(p.signal.hi, target.hi)};
    if (p.occupied.hi <= p.occupied.lo) {
      p.reason = "lower sideband misses the target band";
      p.occupied = {};
    }
    const Band check = p.occupied.hi > p.occupied.lo ? p.occupied : target;
    for (const auto& pr : prods) {
      if (pr.kind == ProductKind::lsb) continue;
      const Band b = product_band(pr, lo, if_band);
      if (!b.overlaps(check)) continue;
      const Band overlap{std::max(b.lo, check.lo), std::min(b.hi, check.hi)};
      const double lvl = source_dbm(pr.kind, opt.mixer) - opt.mixer.carrier_dbm -
                         total_min_attenuation(opt.filters, overlap.lo, overlap.hi);
      if (lvl > -opt.margin_db) p.violations.push_back({pr.n, pr.m, pr.sign, pr.kind, b, lvl});
    }
    if (p.reason.empty()) {
      p.feasible = p.violations.empty();
      if (!p.feasible) p.reason = "products above margin inside the occupied band";
    }
    if (p.feasible) {
      r.reachable = r.reachable ? Band{std::min(r.reachable->lo, p.occupied.lo), std::max(r.reachable->hi, p.occupied.hi)}
                                : p.occupied;
      const double w = p.occupied.width();
      const bool better = !r.recommended_lo || w > best_width + 1.0 ||
                          (std::abs(w - best_width) <= 1.0 && std::abs(lo - 8.0e9) < std::abs(*r.recommended_lo - 8.0e9));
      if (better) {
        best_width = w;
        r.recommended_lo = lo;
      }
    }
    r.los.push_back(std::move(p));
  }
  return r;
}

std::string plan_json(const PlanReport& r) {
  using nlohmann::json;
  auto band = [](const Band& b) { return json{{"lo_hz", b.lo}, {"hi_hz", b.hi}}; };
  json j;
  j["if_band"] = band(r.if_band);
  j["target"] = band(r.target);
  j["margin_db"] = r.margin_db;
  j["feasible"] = r.feasible();
  j["recommended_lo_hz"] = r.recommended_lo ? json(*r.recommended_lo) : json(nullptr);
  j["reachable"] = r.reachable ? band(*r.reachable) : json(nullptr);
  json los = json::array();
  for (const auto& p : r.los) {
    json v = json::array();
    for (const auto& x : p.violations) {
      v.push_back({{"product", term(x.n, x.m, x.sign)}, {"kind", kind_name(x.kind)}, {"band", band(x.band)},
                   {"level_dbc", x.level_dbc}});
    }
    los.push_back({{"lo_hz", p.lo_hz},
                   {"signal", band(p.signal)},
                   {"occupied", band(p.occupied)},
                   {"feasible", p.feasible},
                   {"reason", p.reason},
                   {"violations", v}});
  }
  j["los"] = los;
  return j.dump(2);
}

void StepAttenuator::validate() const {
  if (!(setting_db >= 0 && setting_db <= max_db + 1e-9)) {
    throw Error("attenuator setting " + std::to_string(setting_db) + " dB outside [0, " + std::to_string(max_db) + "]");
  }
  const double steps = setting_db / step_db;
  if (std::abs(steps - std::nearbyint(steps)) > 1e-9) {
    throw Error("attenuator setting " + std::to_string(setting_db) + " dB is not a multiple of " + std::to_string(step_db));
  }
}

RfChain output_chain(double attenuation_db) {
  return {{{"amplifiers", 40.0}, {"fixed path loss", -12.0}}, {StepAttenuator{attenuation_db, 0.25, 1.0, 60.0}}};
}

RfChain input_chain(double attenuation_db, double gain_db) {
  return {{{"amplifiers", gain_db}}, {StepAttenuator{attenuation_db, 0.25, 1.0, 30.0}}};
}

double chain_power(double p_in_dbm, const RfChain& chain) {
  double p = p_in_dbm;
  for (const auto& g : chain.gains) p += g.gain_db;
  for (const auto& a : chain.attenuators) {
    a.validate();
    p -= a.insertion_loss_db + a.setting_db;
  }
  return p;
}

BiasDAC::Quantized BiasDAC::quantize(double v) {
  if (!(std::abs(v) <= kFullScale)) throw Error("bias voltage " + std::to_string(v) + " V outside +-10 V");
  const auto raw = std::llround((v + kFullScale) / kStep);
  const auto code = static_cast<std::uint32_t>(std::clamp<long long>(raw, 0, kMaxCode));
  return {code, volts(code)};
}

double BiasDAC::volts(std::uint32_t code) {
  if (code > kMaxCode) throw Error("bias DAC code out of range");
  return -kFullScale + double(code) * kStep;
}

namespace {

struct LatencyRow {
  bool nco, interp;
  int ila_clocks;
  double ns;
};

constexpr LatencyRow kRows[] = {{false, false, 46, 90.0}, {true, false, 58, 113.0}, {true, true, 60, 117.0}};

const LatencyRow& row_for(const LatencyConfig& c) {
  if (std::abs(c.adc_hz - 4.096e9) > 1.0 || std::abs(c.dac_hz - 6.144e9) > 1.0) {
    throw Error("no converter latency measured for ADC " + std::to_string(c.adc_hz / 1e6) + " MHz, DAC " +
                std::to_string(c.dac_hz / 1e6) + " MHz");
  }
  for (const auto& r : kRows)
    if (r.nco == c.nco_enabled && r.interp == c.interp_enabled) return r;
  throw Error("no converter latency measured for interpolation without the NCO");
}

}  // namespace

double latency_of(const LatencyConfig& cfg) { return row_for(cfg).ns; }
int latency_ila_clocks(const LatencyConfig& cfg) { return row_for(cfg).ila_clocks; }

LatencyBudget latency_budget(const LatencyConfig& cfg, const FeedbackLatency& fb) {
  return {latency_of(cfg), fb.cond_jump_ns(), fb.next_pulse_ns()};
}

}  // namespace qctrl::analog
