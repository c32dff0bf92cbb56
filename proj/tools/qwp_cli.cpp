#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <list>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "qwp/cavity_io.hpp"
#include "qwp/entangle.hpp"
#include "qwp/metrology.hpp"
#include "qwp/virtual_cavity.hpp"

namespace {

using qwp::NumericalError;
using qwp::ValidationError;

// A validation failure attributed to one configuration field.
ValidationError field_error(const std::string& field, const std::string& what) {
  return ValidationError("--" + field + ": " + what);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Flat `key = value` file; '#' starts a comment line.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw field_error("config", "cannot read '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw field_error("config", "line " + std::to_string(no) + ": expected key=value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::size_t thread_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("QWP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ValidationError("QWP_THREADS must be a positive integer");
    n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

// Evaluates fn(0..n-1) on a worker pool; results land in index order.
template <class T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
        next = n;
      }
    }
  };
  const std::size_t k = thread_count(n);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < k; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
  return out;
}

// One subcommand: string-valued parameters resolved as flag > config file > default.
class Command {
public:
  Command(CLI::App& parent, std::string name, std::string help)
      : name_(std::move(name)), app_(parent.add_subcommand(name_, std::move(help))) {}

  void param(const std::string& key, std::string def, const std::string& help) {
    params_.push_back({key, std::move(def), nullptr});
    Param& p = params_.back();
    p.opt = app_->add_option("--" + key, p.value, help + " [" + p.value + "]");
  }

  CLI::App* app() const { return app_; }
  const std::string& name() const { return name_; }
  bool has(const std::string& key) const { return find(key) != nullptr; }

  void apply_config(const std::map<std::string, std::string>& cfg) {
    for (const auto& [k, v] : cfg) {
      if (k == "command") {
        if (v != name_) throw field_error("config", "manifest is for command '" + v + "'");
        continue;
      }
      Param* p = find(k);
      if (!p) throw field_error("config", "unknown key '" + k + "' for " + name_);
      if (p->opt->count() == 0) p->value = v;
    }
  }

  double real(const std::string& key) {
    const double x = parse_real(key, get(key));
    set_normalized(key, qwp::csv::format(x));
    return x;
  }

  std::vector<double> list(const std::string& key) {
    std::vector<double> xs;
    std::string norm;
    std::stringstream ss(get(key));
    for (std::string item; std::getline(ss, item, ',');) {
      xs.push_back(parse_real(key, item));
      norm += (norm.empty() ? "" : ",") + qwp::csv::format(xs.back());
    }
    if (xs.empty()) throw field_error(key, "empty list");
    set_normalized(key, norm);
    return xs;
  }

  std::size_t count(const std::string& key) {
    const double x = parse_real(key, get(key));
    if (!(x >= 0.0) || x != std::floor(x) || x > 1e12) throw field_error(key, "expected a non-negative integer");
    set_normalized(key, std::to_string(static_cast<std::uint64_t>(x)));
    return static_cast<std::size_t>(x);
  }

  double probability(const std::string& key) {
    const double x = real(key);
    if (!(x >= 0.0 && x <= 1.0)) throw field_error(key, "must lie in [0,1]");
    return x;
  }

  std::vector<double> probabilities(const std::string& key) {
    auto xs = list(key);
    for (double x : xs)
      if (!(x >= 0.0 && x <= 1.0)) throw field_error(key, "must lie in [0,1]");
    return xs;
  }

  // min + k step for k = 0, 1, ... while <= max.
  std::vector<double> range(const std::string& prefix) {
    const double lo = real(prefix + "-min"), hi = real(prefix + "-max"), step = real(prefix + "-step");
    if (!(step > 0.0)) throw field_error(prefix + "-step", "must be positive");
    if (!(lo <= hi)) throw field_error(prefix + "-max", "range is empty (max < min)");
    std::vector<double> xs;
    const double slack = 1e-9 * std::max(1.0, std::abs(hi));
    for (std::size_t k = 0;; ++k) {
      const double x = lo + static_cast<double>(k) * step;
      if (x > hi + slack) break;
      xs.push_back(std::min(x, hi));
    }
    return xs;
  }

  std::string text(const std::string& key) {
    set_normalized(key, get(key));
    return get(key);
  }

  // Every parameter, in declaration order, as key=value.
  std::string manifest() const {
    std::string out = "# qwp run manifest\ncommand=" + name_ + "\n";
    for (const auto& p : params_) {
      auto it = normalized_.find(p.key);
      out += p.key + "=" + (it != normalized_.end() ? it->second : p.value) + "\n";
    }
    return out;
  }

private:
  struct Param {
    std::string key;
    std::string value;
    CLI::Option* opt;
  };

  Param* find(const std::string& key) {
    for (auto& p : params_)
      if (p.key == key) return &p;
    return nullptr;
  }
  const Param* find(const std::string& key) const {
    for (const auto& p : params_)
      if (p.key == key) return &p;
    return nullptr;
  }
  const std::string& get(const std::string& key) const {
    const Param* p = find(key);
    if (!p) throw std::logic_error("no parameter " + key);
    return p->value;
  }
  static double parse_real(const std::string& key, const std::string& s) {
    try {
      const double x = qwp::csv::parse(s);
      if (!std::isfinite(x)) throw field_error(key, "must be finite");
      return x;
    } catch (const ValidationError&) {
      throw field_error(key, "not a number: '" + s + "'");
    }
  }
  void set_normalized(const std::string& key, std::string v) { normalized_[key] = std::move(v); }

  std::string name_;
  CLI::App* app_;
  std::list<Param> params_;
  std::map<std::string, std::string> normalized_;
};

struct Output {
  qwp::csv::Table table;
  std::string results;  // extra '# ' lines appended to the manifest
};

// ---------------------------------------------------------------------------
// commands

Output run_qfi_sweep(Command& c) {
  const auto ns = c.range("n");
  const auto p1s = c.probabilities("p1");
  const auto p2s = c.probabilities("p2");
  const double tol = c.real("tail-tol");
  const double eps = c.real("eig-cutoff");
  if (!(tol > 0.0 && tol < 1.0)) throw field_error("tail-tol", "must lie in (0,1)");
  if (!(eps > 0.0)) throw field_error("eig-cutoff", "must be positive");
  if (!(ns.front() > 0.0)) throw field_error("n-min", "N must be positive");
  struct Point {
    double n, p1, p2;
  };
  std::vector<Point> grid;
  for (double n : ns)
    for (double p1 : p1s)
      for (double p2 : p2s) grid.push_back({n, p1, p2});
  const auto rows = parallel_map<qwp::QfiRow>(grid.size(), [&](std::size_t i) {
    const qwp::LossModel loss{grid[i].p1, grid[i].p2, 1.0};
    qwp::QfiRow row{grid[i].n, loss.p1, loss.p2, qwp::qfi_qwp_analytic(grid[i].n, loss), 0.0, 0.0, 0.0};
    row.qwp_numeric = qwp::probe_qfi(qwp::build_probe(qwp::ProbeKind::qwp, row.n, tol), loss, 0.0, eps);
    row.ecs = qwp::probe_qfi(qwp::build_probe(qwp::ProbeKind::ecs, row.n, tol), loss, 0.0, eps);
    if (qwp::is_integer(row.n))
      row.noon = qwp::probe_qfi(qwp::build_probe(qwp::ProbeKind::noon, row.n, tol), loss, 0.0, eps);
    else
      row.noon = loss.p1 == 0.0 && loss.p2 == 0.0 ? row.n * row.n : std::numeric_limits<double>::quiet_NaN();
    return row;
  });
  return {qwp::qfi_table(rows), ""};
}

Output run_concurrence_map(Command& c) {
  const auto nd = c.range("n");
  const auto nl = c.range("lost");
  if (!(nd.front() >= 0.0)) throw field_error("n-min", "N_det must be non-negative");
  if (!(nl.front() >= 0.0)) throw field_error("lost-min", "N_lost must be non-negative");
  return {qwp::concurrence_map(nd, nl), ""};
}

qwp::SystemParams system_params(Command& c) {
  qwp::SystemParams p;
  p.kappa1 = c.real("kappa1");
  p.kappa2 = c.real("kappa2");
  p.alpha0 = c.real("alpha0");
  if (!(p.kappa1 > 0.0)) throw field_error("kappa1", "must be positive");
  if (!(p.kappa2 > 0.0)) throw field_error("kappa2", "must be positive");
  return p;
}

Output run_simulate(Command& c) {
  qwp::QwpConfig cfg;
  cfg.params = system_params(c);
  cfg.params.kappa_tau = c.real("kappa-tau");
  if (!(cfg.params.kappa_tau > 0.0)) throw field_error("kappa-tau", "must be positive");
  cfg.truncation.mode_dim = c.count("mode-dim");
  if (const std::size_t m = c.count("max-exc"); m > 0)
    cfg.truncation.max_excitations = m;
  else
    cfg.truncation.max_excitations.reset();
  cfg.truncation.tail_tolerance = c.real("tail-tol");
  cfg.step_kappa = c.real("step-kappa");
  cfg.evolve.substeps = c.count("substeps");
  cfg.evolve.record_every = c.count("record-every");
  cfg.evolve.overflow_threshold = c.real("overflow");
  if (cfg.truncation.mode_dim < 2) throw field_error("mode-dim", "must be at least 2");
  if (!(cfg.truncation.tail_tolerance > 0.0 && cfg.truncation.tail_tolerance < 1.0))
    throw field_error("tail-tol", "must lie in (0,1)");
  if (!(cfg.step_kappa > 0.0 && cfg.step_kappa <= qwp::max_step_kappa))
    throw field_error("step-kappa", "must lie in (0, " + qwp::csv::format(qwp::max_step_kappa) + "]");
  if (cfg.evolve.substeps < 2 || cfg.evolve.substeps % 2) throw field_error("substeps", "must be even and >= 2");
  if (cfg.evolve.record_every < 1) throw field_error("record-every", "must be at least 1");
  if (!(cfg.evolve.overflow_threshold > 0.0)) throw field_error("overflow", "must be positive");
  const qwp::cplx alpha0 = cfg.params.alpha0;
  qwp::Evolution ev;
  const qwp::QuantumState arms = qwp::dynamical_qwp_state(alpha0, cfg, &ev);
  const double f = qwp::fidelity(qwp::ideal_qwp_state(alpha0, arms.space()).vector(), arms);
  std::string res = "# fidelity=" + qwp::csv::format(f) + "\n";
  res += "# max_trace_error=" + qwp::csv::format(ev.max_trace_error) + "\n";
  res += "# max_top_occupation=" + qwp::csv::format(ev.max_top_occupation) + "\n";
  return {qwp::trajectory_table(ev), res};
}

Output run_scaling(Command& c) {
  qwp::SystemParams base = system_params(c);
  const auto kts = c.list("kappa-tau");
  const double step = c.real("step-kappa");
  for (double kt : kts)
    if (!(kt > 0.0)) throw field_error("kappa-tau", "must be positive");
  if (!(step > 0.0 && step <= qwp::max_step_kappa))
    throw field_error("step-kappa", "must lie in (0, " + qwp::csv::format(qwp::max_step_kappa) + "]");
  const auto rows = parallel_map<std::vector<double>>(kts.size(), [&](std::size_t i) {
    qwp::SystemParams p = base;
    p.kappa_tau = kts[i];
    p.s = 0;
    const qwp::Waveform u = qwp::default_pulse(p, step);
    const auto a = qwp::output_amplitudes(u, p);
    const double inf = qwp::which_path_infidelity(u, p);
    return std::vector<double>{kts[i], a.alpha1.real(), a.alpha1.imag(), a.alpha2.real(), a.alpha2.imag(), inf};
  });
  qwp::csv::Table t;
  t.header = {"kappa_tau", "alpha10_re", "alpha10_im", "alpha20_re", "alpha20_im", "infidelity"};
  t.rows = rows;
  return {t, ""};
}

Output run_xstates(Command& c) {
  const std::size_t seed = c.count("seed");
  const std::size_t n = c.count("count");
  if (n == 0) throw field_error("count", "must be positive");
  std::mt19937_64 rng(seed);
  auto uniform = [&] { return std::generate_canonical<double, 53>(rng); };
  qwp::csv::Table t;
  t.header = {"a", "b", "c", "d", "w_re", "w_im", "z_re", "z_im", "C_x", "C_wootters"};
  for (std::size_t k = 0; k < n; ++k) {
    // cubed draws skew the populations so a good share of the states is entangled
    double a = std::pow(uniform(), 3), b = std::pow(uniform(), 3), cc = std::pow(uniform(), 3),
           d = std::pow(uniform(), 3);
    const double s = a + b + cc + d;
    a /= s, b /= s, cc /= s, d /= s;
    const qwp::cplx w = std::polar(std::sqrt(a * d) * uniform(), 2.0 * std::numbers::pi * uniform());
    const qwp::cplx z = std::polar(std::sqrt(b * cc) * uniform(), 2.0 * std::numbers::pi * uniform());
    const qwp::XState x{a, b, cc, d, w, z};
    t.rows.push_back({a, b, cc, d, w.real(), w.imag(), z.real(), z.imag(), qwp::concurrence_xstate(x),
                      qwp::concurrence_general(x.matrix())});
  }
  return {t, ""};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw field_error("out", "cannot write '" + path + "'");
  f << text;
  if (!f) throw field_error("out", "cannot write '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Qubit-which-path entangler toolkit: QFI sweeps, concurrence maps, cascade simulation."};
  app.require_subcommand(1);
  std::string config_path;

  std::vector<std::unique_ptr<Command>> cmds;
  using Runner = Output (*)(Command&);
  std::map<std::string, Runner> runners;
  auto add = [&](const std::string& name, const std::string& help, Runner r) -> Command& {
    cmds.push_back(std::make_unique<Command>(app, name, help));
    runners[name] = r;
    Command& c = *cmds.back();
    c.app()->add_option("--config", config_path, "flat key=value file; flags override it");
    return c;
  };

  Command& qfi = add("qfi-sweep", "QFI of QWP, ECS and NOON probes over N and per-arm loss", run_qfi_sweep);
  qfi.param("n-min", "0.1", "smallest N");
  qfi.param("n-max", "10", "largest N");
  qfi.param("n-step", "0.1", "N grid step");
  qfi.param("p1", "0", "arm-1 loss probabilities (comma list)");
  qfi.param("p2", "0", "arm-2 loss probabilities (comma list)");
  qfi.param("tail-tol", "1e-10", "Poisson tail left beyond each Fock truncation");
  qfi.param("eig-cutoff", "1e-12", "eigenvalue-pair cutoff of the spectral QFI sum");

  Command& cmap = add("concurrence-map", "two-qubit concurrence over detected and lost photon numbers",
                      run_concurrence_map);
  cmap.param("n-min", "0", "smallest N_det");
  cmap.param("n-max", "30", "largest N_det");
  cmap.param("n-step", "0.5", "N_det grid step");
  cmap.param("lost-min", "0", "smallest N_lost");
  cmap.param("lost-max", "8", "largest N_lost");
  cmap.param("lost-step", "0.25", "N_lost grid step");

  Command& sim = add("simulate", "cascaded master-equation generation of the QWP state", run_simulate);
  sim.param("alpha0", "0.8", "drive amplitude");
  sim.param("kappa-tau", "30", "kappa times pulse width");
  sim.param("kappa1", "0.5", "input-port decay rate");
  sim.param("kappa2", "0.5", "output-port decay rate");
  sim.param("mode-dim", "9", "Fock dimension per mode");
  sim.param("max-exc", "8", "cap on total excitations (0: none)");
  sim.param("tail-tol", "1e-7", "Poisson tail tolerated by the truncation");
  sim.param("step-kappa", "0.02", "waveform grid step in units of 1/kappa");
  sim.param("substeps", "12", "grid intervals per RK4 step");
  sim.param("record-every", "1", "trajectory stride in RK4 steps");
  sim.param("overflow", "1e-6", "largest population allowed on a truncation edge");

  Command& scal = add("scaling", "which-path amplitudes and infidelity versus kappa tau", run_scaling);
  scal.param("kappa-tau", "10,20,40,80", "kappa tau values (comma list)");
  scal.param("alpha0", "1", "drive amplitude");
  scal.param("kappa1", "0.5", "input-port decay rate");
  scal.param("kappa2", "0.5", "output-port decay rate");
  scal.param("step-kappa", "0.02", "waveform grid step in units of 1/kappa");

  Command& xs = add("xstates", "seeded random X states: closed-form vs general concurrence", run_xstates);
  xs.param("seed", "1", "random seed");
  xs.param("count", "1000", "number of states");

  for (auto& c : cmds) c->param("out", "", "CSV output path (stdout when empty); writes <out>.manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  Command* cmd = nullptr;
  for (auto& c : cmds)
    if (c->app()->parsed()) cmd = c.get();

  try {
    thread_count(1);
    if (!config_path.empty()) cmd->apply_config(read_config(config_path));
    const std::string out = cmd->text("out");
    if (!out.empty()) {
      std::ofstream probe(out, std::ios::binary | std::ios::app);
      if (!probe) throw field_error("out", "cannot write '" + out + "'");
    }
    const Output result = runners.at(cmd->name())(*cmd);
    const std::string csv = qwp::csv::to_string(result.table);
    if (out.empty()) {
      std::cout << csv;
      std::cerr << result.results;
    } else {
      write_text(out, csv);
      write_text(out + ".manifest", cmd->manifest() + result.results);
      std::cerr << result.results;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
