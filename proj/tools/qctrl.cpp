// qctrl command line: assembler, simulator runs, experiments, RF planning.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qctrl/analog.hpp"
#include "qctrl/experiment.hpp"
#include "qctrl/isa.hpp"
#include "qctrl/machine.hpp"

namespace fs = std::filesystem;
using namespace qctrl;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kUsage = 1, kRuntime = 2, kNoConverge = 3;

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void spit(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << data;
  if (!f) throw Error("write to " + path + " failed");
}

isa::Program parse_file(const std::string& path) {
  const auto r = isa::parse_asm(slurp(path));
  if (!r.ok()) {
    std::string msg;
    for (const auto& e : r.errors) msg += path + ":" + isa::format_error(e) + "\n";
    msg.pop_back();
    throw Error(msg);
  }
  return *r.program;
}

bool is_binary(const std::string& path) {
  const auto ext = fs::path(path).extension().string();
  return ext == ".bin" || ext == ".qbin";
}

isa::Program load_program(const std::string& path) {
  if (is_binary(path)) return isa::disassemble(isa::read_binary_file(path));
  return parse_file(path);
}

std::string stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path fresh_dir(const fs::path& root, const std::string& base) {
  fs::path d = root / base;
  for (int k = 2; fs::exists(d); ++k) d = root / (base + "-" + std::to_string(k));
  return d;
}

json derived_json(const exp::ResultSet& r) {
  json j = r.derived;
  j["underruns"] = r.underruns;
  j["converged"] = exp::all_converged(r);
  return j;
}

json latency_json(const exp::LatencyReport& r) {
  return {{"trigger_to_valid_cycles", r.trigger_to_valid},
          {"cond_jump_cycles", r.cond_jump},
          {"next_pulse_cycles", r.next_pulse},
          {"cond_jump_ns", r.cond_jump_ns},
          {"next_pulse_ns", r.next_pulse_ns},
          {"converter_ns", {{"bypass", r.converter_ns[0]}, {"nco", r.converter_ns[1]}, {"nco_interp", r.converter_ns[2]}}},
          {"total_min_ns", r.total_min_ns},
          {"total_max_ns", r.total_max_ns}};
}

tproc::TraceLevel trace_level(const std::string& s) {
  if (s == "none") return tproc::TraceLevel::none;
  if (s == "timed") return tproc::TraceLevel::timed;
  if (s == "all") return tproc::TraceLevel::all;
  throw CLI::ValidationError("--trace-level", "expected none, timed or all");
}

struct ExperimentArgs {
  std::string kind, config, device, out = "results";
  std::vector<std::string> sets;
  int workers = 0;
  std::optional<std::uint64_t> seed;
  bool print_asm = false;
};

exp::ExperimentConfig build_config(const ExperimentArgs& a) {
  const auto kind = exp::parse_kind(a.kind);
  if (!kind) throw CLI::ValidationError("kind", "unknown experiment kind '" + a.kind + "'");
  auto base = exp::default_config(*kind);
  if (!a.device.empty()) base.device = device::load_params(a.device);
  auto kv = a.config.empty() ? KeyValues::parse("", "--set") : KeyValues::load(a.config);
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  auto cfg = exp::config_from(kv, base);
  if (a.workers > 0) cfg.workers = a.workers;
  if (a.seed) cfg.seed = *a.seed;
  exp::validate(cfg);
  return cfg;
}

exp::ExperimentConfig checked_config(const ExperimentArgs& a) {
  try {
    return build_config(a);
  } catch (const Error& e) {
    throw CLI::ValidationError("config", e.what());
  }
}

int run_experiment_cmd(const ExperimentArgs& a) {
  const auto cfg = checked_config(a);
  if (a.print_asm) {
    if (cfg.kind == exp::Kind::rb) {
      std::cout << exp::compile_rb_sequence(cfg, exp::random_rb_sequence(cfg.rb_lengths.front(), cfg.seed));
    } else {
      std::cout << exp::compile_experiment(cfg).text;
    }
    return kOk;
  }
  const auto dir = fresh_dir(a.out, std::string(exp::kind_name(cfg.kind)) + "-" + stamp() + "-s" +
                                        std::to_string(cfg.seed));
  if (cfg.kind == exp::Kind::feedback_latency) {
    const auto r = exp::run_feedback_latency(cfg);
    fs::create_directories(dir);
    const auto j = latency_json(r);
    spit((dir / "latency.json").string(), j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n" << dir.string() << "\n";
    return kOk;
  }
  const auto r = cfg.kind == exp::Kind::rb ? exp::run_rb(cfg).results : exp::run_experiment(cfg);
  exp::export_results(r, dir.string());
  std::cout << derived_json(r).dump(2) << "\n" << dir.string() << "\n";
  if (!exp::all_converged(r)) {
    std::cerr << "fit did not converge\n";
    return kNoConverge;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qctrl: timed pulse processor, signal chain and mock transmon"};
  app.require_subcommand(1);

  std::string in, out;
  bool hex = false;
  auto* as = app.add_subcommand("assemble", "assemble text into a binary image");
  as->add_option("input", in, "assembly source")->required();
  as->add_option("-o,--output", out, "binary image (default: input with .bin)");
  as->add_flag("--hex", hex, "print the words as hex instead of writing a file");

  auto* dis = app.add_subcommand("disassemble", "binary image back to canonical text");
  dis->add_option("input", in, "binary image")->required();
  dis->add_option("-o,--output", out, "text output (default: stdout)");

  std::string trace_out, shots_out, envelope, device_file, level = "timed";
  bool loopback = false;
  std::uint64_t run_seed = 1;
  auto* run = app.add_subcommand("run", "execute a program on the simulated board");
  run->add_option("input", in, "binary image (.bin) or assembly text")->required();
  run->add_option("--trace", trace_out, "write the execution trace as JSON lines");
  run->add_option("--trace-level", level, "none, timed or all");
  run->add_option("--shots", shots_out, "write per-trigger readouts as CSV");
  run->add_option("--envelope", envelope, "envelope table to load (CSV of I,Q)");
  run->add_option("--device", device_file, "device parameter file");
  run->add_flag("--loopback", loopback, "wire the readout generator to the ADC instead of the device");
  run->add_option("--seed", run_seed, "device noise seed");

  ExperimentArgs ea;
  auto* ex = app.add_subcommand("experiment", "compile, run and fit an experiment");
  ex->add_option("kind", ea.kind, "res_spec, qubit_spec, rabi, t1, ramsey, single_shot, rb, feedback_latency")
      ->required();
  ex->add_option("-c,--config", ea.config, "key = value config file");
  ex->add_option("--device", ea.device, "device parameter file");
  ex->add_option("--set", ea.sets, "override, key=value (repeatable)");
  ex->add_option("--out", ea.out, "parent of the timestamped results directory");
  ex->add_option("--workers", ea.workers, "parallel workers")->check(CLI::PositiveNumber);
  ex->add_option("--seed", ea.seed, "master seed");
  ex->add_flag("--print-asm", ea.print_asm, "print the compiled program and exit");

  double lo_min = 7.5e9, lo_max = 8.5e9, if_min = 0.5e9, if_max = 3.5e9, t_min = 4e9, t_max = 8e9;
  double lo_step = 10e6, margin = 60;
  std::optional<double> spur_lo, spur_if;
  std::string plan_out;
  auto* rf = app.add_subcommand("plan-rf", "LO search and spur table for the up-conversion chain");
  rf->add_option("--lo-min", lo_min, "Hz");
  rf->add_option("--lo-max", lo_max, "Hz");
  rf->add_option("--lo-step", lo_step, "Hz")->check(CLI::PositiveNumber);
  rf->add_option("--if-min", if_min, "Hz");
  rf->add_option("--if-max", if_max, "Hz");
  rf->add_option("--target-min", t_min, "Hz");
  rf->add_option("--target-max", t_max, "Hz");
  rf->add_option("--margin", margin, "dBc below which products count as clean");
  rf->add_option("--lo", spur_lo, "LO for the spur table (default: recommended LO)");
  rf->add_option("--if", spur_if, "IF for the spur table (default: IF band center)");
  rf->add_option("--out", plan_out, "directory for plan.json and spurs.csv (default: stdout)");

  auto* lat = app.add_subcommand("latency", "feedback latency report");
  std::string lat_config;
  lat->add_option("-c,--config", lat_config, "key = value config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*as) {
      const auto words = isa::assemble(parse_file(in));
      if (hex) {
        for (auto w : words) std::printf("%016llx\n", static_cast<unsigned long long>(w));
      } else {
        if (out.empty()) out = fs::path(in).replace_extension(".bin").string();
        isa::write_binary_file(out, words);
        std::cerr << words.size() << " words -> " << out << "\n";
      }
    } else if (*dis) {
      const auto text = isa::render(isa::disassemble(isa::read_binary_file(in)));
      if (out.empty()) {
        std::cout << text;
      } else {
        spit(out, text);
      }
    } else if (*run) {
      HardwareConfig hw;
      hw.loopback = loopback;
      const auto params = device_file.empty() ? device::TransmonParams{} : device::load_params(device_file);
      Machine m(hw, params, run_seed);
      if (!envelope.empty()) m.envelopes().load(siggen::read_envelope_csv(envelope));
      tproc::Config tc;
      tc.trace = trace_level(level);
      const auto t = tproc::run(load_program(in), m, tc);
      if (!trace_out.empty()) spit(trace_out, tproc::to_jsonl(t));
      if (!shots_out.empty()) {
        std::string csv = "trigger,I,Q\n";
        for (const auto& s : m.shots()) {
          csv += std::to_string(s.trigger) + "," + std::to_string(s.mean.i) + "," + std::to_string(s.mean.q) + "\n";
        }
        spit(shots_out, csv);
      }
      json j = {{"end_cycle", t.end_cycle},     {"processor_cycle", t.processor_cycle},
                {"instructions", t.instructions}, {"pulses", t.pulses},
                {"triggers", t.triggers},         {"underruns", t.underruns.size()},
                {"readouts", m.shots().size()}};
      std::cout << j.dump(2) << "\n";
      for (const auto& u : t.underruns) {
        std::cerr << "underrun: queue " << u.queue << " scheduled " << u.scheduled << " fired " << u.actual << "\n";
      }
    } else if (*ex) {
      return run_experiment_cmd(ea);
    } else if (*rf) {
      const auto plan = analog::plan_band({lo_min, lo_max}, {if_min, if_max}, {t_min, t_max},
                                          [&] {
                                            analog::PlanOptions o;
                                            o.lo_step_hz = lo_step;
                                            o.margin_db = margin;
                                            return o;
                                          }());
      analog::MixerModel mixer;
      mixer.lo_hz = spur_lo.value_or(plan.recommended_lo.value_or(mixer.lo_hz));
      const auto spurs =
          analog::spur_table(spur_if.value_or(0.5 * (if_min + if_max)), mixer, analog::filter_set("output"));
      const auto pj = analog::plan_json(plan), sc = analog::spur_table_csv(spurs);
      if (plan_out.empty()) {
        std::cout << pj << "\n" << sc;
      } else {
        fs::create_directories(plan_out);
        spit((fs::path(plan_out) / "plan.json").string(), pj + "\n");
        spit((fs::path(plan_out) / "spurs.csv").string(), sc);
      }
      if (!plan.feasible()) {
        std::cerr << "no feasible LO in range\n";
        return kRuntime;
      }
    } else if (*lat) {
      ExperimentArgs la;
      la.kind = "feedback_latency";
      la.config = lat_config;
      std::cout << latency_json(exp::run_feedback_latency(checked_config(la))).dump(2) << "\n";
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "qctrl: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "qctrl: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
