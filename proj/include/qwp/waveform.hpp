#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "qwp/csv.hpp"
#include "qwp/error.hpp"

namespace qwp {

// Complex envelope sampled at t0 + k*dt (times in units of 1/kappa when kappa = 1).
struct Waveform {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<std::complex<double>> samples;
  // Nominal pulse duration tau; 0 for derived signals.
  double duration = 0.0;

  std::size_t size() const { return samples.size(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
  double end_time() const { return samples.empty() ? t0 : time(samples.size() - 1); }

  // Riemann sum of |w|^2 dt.
  double energy() const {
    double e = 0.0;
    for (const auto& s : samples) e += std::norm(s);
    return e * dt;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& s : samples) m = std::max(m, std::abs(s));
    return m;
  }
};

inline bool same_grid(const Waveform& a, const Waveform& b) {
  const double scale = std::max(std::abs(a.dt), std::abs(b.dt));
  return a.samples.size() == b.samples.size() && std::abs(a.dt - b.dt) <= 1e-12 * scale &&
         std::abs(a.t0 - b.t0) <= 1e-12 * std::max(scale, std::abs(a.t0));
}

inline void require_same_grid(const Waveform& a, const Waveform& b) {
  if (!same_grid(a, b)) throw ValidationError("incompatible grids");
}

inline void require_normalized(const Waveform& u, double tol = 1e-8) {
  if (std::abs(u.energy() - 1.0) > tol) throw ValidationError("waveform not normalized");
}

inline Waveform zeros_like(const Waveform& w) {
  Waveform z = w;
  z.duration = 0.0;
  for (auto& s : z.samples) s = 0.0;
  return z;
}

// Appends zeros so the grid extends at least `extra` past its last sample.
inline Waveform pad_zeros(const Waveform& w, double extra) {
  Waveform p = w;
  const auto n = static_cast<std::size_t>(std::ceil(extra / w.dt - 1e-9));
  p.samples.resize(w.samples.size() + n, 0.0);
  return p;
}

// Gaussian envelope exp(-(t - 4 tg)^2 / 2 tg^2) on [0, 8 tg] with tg = tau, renormalized so
// that sum |u|^2 dt = 1. The grid step is the largest value <= dt_max that divides 8 tau
// into an even number of steps.
inline Waveform gaussian_pulse(double tau, double dt_max) {
  detail::require(tau > 0.0 && dt_max > 0.0, "pulse duration and step must be positive");
  const double support = 8.0 * tau;
  auto steps = static_cast<std::size_t>(std::ceil(support / dt_max - 1e-9));
  if (steps % 2) ++steps;
  Waveform u;
  u.t0 = 0.0;
  u.dt = support / static_cast<double>(steps);
  u.duration = tau;
  u.samples.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double x = (u.time(k) - 4.0 * tau) / tau;
    u.samples[k] = std::exp(-0.5 * x * x);
  }
  const double norm = std::sqrt(u.energy());
  for (auto& s : u.samples) s /= norm;
  return u;
}

inline csv::Table waveform_table(const Waveform& w) {
  csv::Table t;
  t.header = {"t", "re", "im"};
  t.rows.reserve(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) t.rows.push_back({w.time(k), w.samples[k].real(), w.samples[k].imag()});
  return t;
}

inline Waveform waveform_from_table(const csv::Table& t) {
  if (t.header != std::vector<std::string>{"t", "re", "im"}) throw ValidationError("waveform CSV needs columns t,re,im");
  Waveform w;
  if (t.rows.empty()) return w;
  w.t0 = t.rows.front()[0];
  w.dt = t.rows.size() > 1 ? (t.rows.back()[0] - w.t0) / static_cast<double>(t.rows.size() - 1) : 0.0;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    if (t.rows.size() > 1 && std::abs(t.rows[k][0] - w.time(k)) > 1e-9 * std::max(1.0, std::abs(w.time(k))))
      throw ValidationError("waveform CSV is not uniformly sampled");
    w.samples.emplace_back(t.rows[k][1], t.rows[k][2]);
  }
  return w;
}

inline void write_waveform_csv(const std::string& path, const Waveform& w) { csv::write_file(path, waveform_table(w)); }

inline Waveform read_waveform_csv(const std::string& path) { return waveform_from_table(csv::read_file(path)); }

}  // namespace qwp
