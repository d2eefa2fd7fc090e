#include <random>

#include "detail.hpp"

namespace qctrl::exp {

using namespace detail;
using device::Gate;
using device::GateOp;

Gate recovery_gate(const std::vector<Gate>& gates) {
  device::TransmonParams ideal;
  ideal.decoherence = false;
  device::Transmon q(ideal);
  for (Gate g : gates) q.apply_gate({g});
  for (int k = 0; k < device::kNumGates; ++k) {
    device::Transmon t = q;
    t.apply_gate({static_cast<Gate>(k)});
    if (t.p_excited() < 1e-9) return static_cast<Gate>(k);
  }
  throw Error("internal invariant violated: no gate of the set returns the sequence to ground (p_e = " +
              std::to_string(q.p_excited()) + ")");
}

RbSequence random_rb_sequence(int m, std::uint64_t seed) {
  if (m < 1) throw Error("rb sequence length must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, device::kNumGates - 1);
  RbSequence s;
  for (int k = 0; k < m; ++k) s.gates.push_back(static_cast<Gate>(pick(rng)));
  s.gates.push_back(recovery_gate(s.gates));
  return s;
}

std::string compile_rb_sequence(const ExperimentConfig& cfg, const RbSequence& seq) {
  const Common c = common_of(cfg);
  const int zone = cfg.hw.qubit_nyquist_zone;
  constexpr double kQuarter = 3.14159265358979323846 / 2;
  AsmText a;
  a.comment("rb m=" + std::to_string(seq.gates.size() - 1) + " x " + std::to_string(cfg.shots) + " shots");
  emit_readout_setup(a, cfg, c);
  // Page 1 + k: axis at k quarter turns; r0 group pi, r6 group pi/2.
  const std::int16_t half = gain_units(calibrated_pi_gain(cfg) / 2);
  for (int k = 0; k < 4; ++k) {
    Group g;
    g.freq = c.qubit_word;
    g.phase = qubit_phase_word(k * kQuarter, zone);
    g.length = c.env_length;
    g.gain = c.pi_units;
    a.group(0, g, 1 + k);
    g.gain = half;
    a.group(6, g, 1 + k);
  }
  Group idle;
  idle.freq = c.qubit_word;
  idle.length = c.env_length;
  idle.gain = 0;
  a.group(kQubitB, idle);

  if (cfg.shots > 1) {
    a.regwi(kShots, cfg.shots);
    a.label("shot");
  }
  if (c.relax_cycles) a.line("SYNCI " + std::to_string(c.relax_cycles));
  int frame = 0;  // quarter turns, same sign convention as the device frame
  Cycle t = 0;
  for (Gate g : seq.gates) {
    const GateOp op{g};
    if (op.virtual_z()) {
      frame -= static_cast<int>(std::lround(op.angle() / kQuarter));
      if (cfg.z_slot) t += cfg.gate_slot;
      continue;
    }
    if (g == Gate::I) {
      a.pulse(cfg.hw.qubit_channel, t, kQubitB);
    } else {
      const int axis = static_cast<int>(std::lround(op.axis() / kQuarter));
      const int quad = (((axis + frame) % 4) + 4) % 4;
      const bool full = std::abs(op.angle()) > 2.0;
      a.pulse(cfg.hw.qubit_channel, t, full ? 0 : 6, 1 + quad);
    }
    t += cfg.gate_slot;
  }
  if (t) a.line("SYNCI " + std::to_string(t));
  emit_measure(a, cfg, c);
  if (cfg.shots > 1) a.line("LOOPNZ r" + std::to_string(kShots) + ", shot");
  a.line("END");
  return a.str();
}

RbResult run_rb(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto lengths = cfg.rb_lengths;
  const int nl = static_cast<int>(lengths.size()), ns = cfg.rb_sequences;
  const auto [g, e] = centroids(cfg);

  struct Out {
    std::complex<double> mean;
    std::uint64_t underruns = 0;
  };
  std::vector<Out> outs(static_cast<std::size_t>(nl * ns));
  parallel_for(nl * ns, cfg.workers, [&](int k) {
    const auto idx = static_cast<std::uint64_t>(k);
    const auto seq = random_rb_sequence(lengths[static_cast<std::size_t>(k / ns)], segment_seed(cfg.seed, 2 * idx));
    Compiled comp;
    comp.text = compile_rb_sequence(cfg, seq);
    comp.program = parse_or_throw(comp.text);
    comp.envelope = envelope_of(cfg);
    comp.points = 1;
    comp.shots_per_point = cfg.shots;
    const auto run = execute(cfg, comp, segment_seed(cfg.seed, 2 * idx + 1));
    if (run.shots.size() != static_cast<std::size_t>(cfg.shots)) {
      throw Error("rb sequence " + std::to_string(k) + ": expected " + std::to_string(cfg.shots) +
                  " readouts, got " + std::to_string(run.shots.size()));
    }
    std::int64_t si = 0, sq = 0;
    for (const auto& s : run.shots) {
      si += s.mean.i;
      sq += s.mean.q;
    }
    outs[idx] = {{double(si) / cfg.shots, double(sq) / cfg.shots}, run.trace.underruns.size()};
  });

  RbResult rb;
  auto& r = rb.results;
  r.kind = Kind::rb;
  r.seed = cfg.seed;
  r.config = config_entries(cfg);
  for (int l = 0; l < nl; ++l) {
    std::vector<double> surv;
    std::complex<double> acc;
    for (int s = 0; s < ns; ++s) {
      const auto& o = outs[static_cast<std::size_t>(l * ns + s)];
      r.underruns += o.underruns;
      acc += o.mean;
      surv.push_back(1.0 - population(o.mean, g, e));
    }
    double m = 0;
    for (double v : surv) m += v;
    rb.mean_survival.push_back(m / ns);
    rb.survival.push_back(std::move(surv));
    r.x.push_back(lengths[static_cast<std::size_t>(l)]);
    r.i.push_back(acc.real() / ns);
    r.q.push_back(acc.imag() / ns);
  }
  // A fully depolarized two-level system reads 1/2.
  fit::FitOptions opt;
  opt.fixed["B"] = 0.5;
  rb.fit = fit::fit(fit::Model::rb_decay, r.x, rb.mean_survival, opt);
  rb.p = rb.fit.value("p");
  rb.f_avg = 1.0 - (1.0 - rb.p) / 2.0;
  r.fits.push_back(rb.fit);
  r.derived["p"] = rb.p;
  r.derived["f_avg"] = rb.f_avg;
  if (rb.fit.converged) {
    r.derived["p_err"] = rb.fit.error("p");
    r.derived["f_avg_err"] = rb.fit.error("p") / 2.0;
  }
  return rb;
}

}  // namespace qctrl::exp
