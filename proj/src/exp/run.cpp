#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "detail.hpp"
#include "qctrl/siggen.hpp"

namespace qctrl::exp {

namespace detail {

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int threads = std::clamp(workers, 1, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int k = next++; k < n; k = next++) {
      try {
        fn(k);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::pair<std::complex<double>, std::complex<double>> centroids(const ExperimentConfig& cfg) {
  const device::Transmon t(cfg.device);
  const auto word = siggen::freq_to_word(cfg.readout_freq - cfg.hw.readout_lo_hz);
  device::ReadoutProbe probe;
  probe.freq_hz = cfg.hw.readout_lo_hz + siggen::word_to_freq(word);
  probe.amplitude = double(gain_units(cfg.readout_gain)) / 32767.0;
  probe.window_s = double(cycles(cfg.readout_length)) / kFabricHz;
  return {t.centroid(probe, false), t.centroid(probe, true)};
}

double population(std::complex<double> v, std::complex<double> g, std::complex<double> e) {
  const auto d = e - g;
  return ((v - g) * std::conj(d)).real() / std::norm(d);
}

}  // namespace detail

using namespace detail;

std::uint64_t segment_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 of the pair
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

SegmentRun execute(const ExperimentConfig& cfg, const Compiled& c, std::uint64_t seed, tproc::TraceLevel trace) {
  Machine m(cfg.hw, cfg.device, seed);
  if (!c.envelope.empty()) m.envelopes().load(c.envelope);
  if (cfg.hw.loopback) {
    // The ADC runs at half the DAC rate: the same tone needs twice the word.
    const auto w = siggen::freq_to_word(cfg.readout_freq - cfg.hw.readout_lo_hz);
    m.readout(cfg.hw.adc_channel).set_frequency(static_cast<std::uint32_t>(2u * w));
  }
  tproc::Config tc;
  tc.trace = trace;
  SegmentRun out;
  out.trace = tproc::run(c.program, m, tc);
  out.shots = m.shots();
  out.stats = m.stats();
  return out;
}

ResultSet run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  if (cfg.kind == Kind::rb) return run_rb(cfg).results;
  if (cfg.kind == Kind::feedback_latency) throw Error("feedback_latency yields a latency report, not a sweep");
  const int points = cfg.sweep.points, per = cfg.segment_points;
  const int segments = (points + per - 1) / per;

  struct Out {
    std::vector<double> x;
    std::vector<ShotRecord> shots;
    std::uint64_t underruns = 0;
  };
  std::vector<Out> outs(static_cast<std::size_t>(segments));
  parallel_for(segments, cfg.workers, [&](int k) {
    const int first = k * per, count = std::min(per, points - first);
    const auto comp = compile_segment(cfg, first, count);
    auto run = execute(cfg, comp, segment_seed(cfg.seed, static_cast<std::uint64_t>(k)));
    const auto expected = static_cast<std::size_t>(count) * static_cast<std::size_t>(cfg.shots);
    if (run.shots.size() != expected) {
      throw Error("segment " + std::to_string(k) + ": expected " + std::to_string(expected) + " readouts, got " +
                  std::to_string(run.shots.size()));
    }
    outs[static_cast<std::size_t>(k)] = {comp.x, std::move(run.shots), run.trace.underruns.size()};
  });

  ResultSet r;
  r.kind = cfg.kind;
  r.seed = cfg.seed;
  r.config = config_entries(cfg);
  const auto shots = static_cast<std::size_t>(cfg.shots);
  for (const auto& o : outs) {
    r.underruns += o.underruns;
    for (std::size_t p = 0; p < o.x.size(); ++p) {
      std::int64_t si = 0, sq = 0;
      std::vector<std::complex<double>> keep;
      for (std::size_t s = 0; s < shots; ++s) {
        const auto& m = o.shots[p * shots + s].mean;
        si += m.i;
        sq += m.q;
        if (cfg.keep_shots) keep.emplace_back(m.i, m.q);
      }
      r.x.push_back(o.x[p]);
      r.i.push_back(double(si) / double(shots));
      r.q.push_back(double(sq) / double(shots));
      if (cfg.keep_shots) r.shots.push_back(std::move(keep));
    }
  }
  analyze(r, cfg);
  return r;
}

std::vector<double> signal_of(const ResultSet& r, const ExperimentConfig& cfg) {
  std::vector<double> y(r.size());
  if (cfg.kind == Kind::res_spec) {
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = r.i[k] * r.i[k] + r.q[k] * r.q[k];
    return y;
  }
  const auto [g, e] = centroids(cfg);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = population({r.i[k], r.q[k]}, g, e);
  return y;
}

namespace {

void put(ResultSet& r, const std::string& name, const fit::FitResult& f, std::string_view param) {
  r.derived[name] = f.value(param);
  if (f.converged) r.derived[name + "_err"] = f.error(param);
}

void analyze_single_shot(ResultSet& r) {
  if (r.shots.size() != 2 || r.shots[0].empty() || r.shots[1].empty()) {
    throw Error("single_shot analysis needs the kept shots of both preparations");
  }
  auto mean = [](const std::vector<std::complex<double>>& v) {
    std::complex<double> s;
    for (const auto& z : v) s += z;
    return s / double(v.size());
  };
  const auto mg = mean(r.shots[0]), me = mean(r.shots[1]);
  const auto u = (me - mg) / std::abs(me - mg);
  std::vector<double> proj[2], all;
  for (int k = 0; k < 2; ++k) {
    for (const auto& z : r.shots[static_cast<std::size_t>(k)]) {
      proj[k].push_back(((z - mg) * std::conj(u)).real());
      all.push_back(proj[k].back());
    }
  }
  const auto h = fit::histogram(all, 100);
  auto f = fit::fit(fit::Model::bimodal_gauss, h.centers, h.counts);
  r.fits.push_back(f);
  r.derived["fidelity"] = fit::bimodal_fidelity(f);
  r.derived["sigma"] = f.value("sigma");
  r.derived["separation"] = std::abs(f.value("mu2") - f.value("mu1"));
  const double thr = 0.5 * (f.value("mu1") + f.value("mu2"));
  const bool e_high = f.value("mu2") > f.value("mu1");
  double wrong_g = 0, wrong_e = 0;
  for (double s : proj[0]) wrong_g += (s > thr) == e_high ? 1 : 0;
  for (double s : proj[1]) wrong_e += (s > thr) != e_high ? 1 : 0;
  r.derived["fidelity_counted"] =
      1.0 - 0.5 * (wrong_g / double(proj[0].size()) + wrong_e / double(proj[1].size()));
}

}  // namespace

void analyze(ResultSet& r, const ExperimentConfig& cfg) {
  r.fits.clear();
  r.derived.clear();
  if (cfg.kind == Kind::single_shot) {
    analyze_single_shot(r);
    return;
  }
  const auto y = signal_of(r, cfg);
  const auto& p = cfg.device;
  if (r.size() < 5) return;  // too few points for any of the models
  switch (cfg.kind) {
    case Kind::res_spec: {
      auto f = fit::fit(fit::Model::lorentzian, r.x, y);
      put(r, "f_res", f, "x0");
      r.derived["kappa"] = 2 * f.value("gamma");
      r.derived["f_res_expected"] = p.f_r - p.chi_over_2pi;
      r.fits.push_back(std::move(f));
      break;
    }
    case Kind::qubit_spec: {
      auto f = fit::fit(fit::Model::lorentzian, r.x, y);
      put(r, "f_q", f, "x0");
      r.derived["f_q_expected"] = p.f_q;
      r.fits.push_back(std::move(f));
      break;
    }
    case Kind::rabi: {
      auto f = fit::fit(fit::Model::rabi_cos, r.x, y);
      put(r, "pi_gain", f, "x_pi");
      r.derived["pi_gain_expected"] = calibrated_pi_gain(cfg);
      r.fits.push_back(std::move(f));
      break;
    }
    case Kind::t1: {
      auto f = fit::fit(fit::Model::exp_decay, r.x, y);
      put(r, "T1", f, "tau");
      r.derived["T1_expected"] = p.T1;
      r.fits.push_back(std::move(f));
      break;
    }
    case Kind::ramsey: {
      auto f = fit::fit(fit::Model::damped_cos, r.x, y);
      put(r, "T2", f, "tau");
      put(r, "fringe_freq", f, "f");
      r.derived["fringe_freq"] = std::abs(r.derived["fringe_freq"]);
      r.derived["T2_expected"] = p.T2;
      r.derived["fringe_freq_expected"] = cfg.ramsey_freq;
      r.fits.push_back(std::move(f));
      break;
    }
    default: break;
  }
}

bool all_converged(const ResultSet& r) {
  return std::all_of(r.fits.begin(), r.fits.end(), [](const fit::FitResult& f) { return f.converged; });
}

}  // namespace qctrl::exp
