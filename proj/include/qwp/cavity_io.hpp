#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "qwp/couplings.hpp"
#include "qwp/error.hpp"
#include "qwp/waveform.hpp"

namespace qwp {

struct SystemParams {
  double kappa1 = 0.5;
  double kappa2 = 0.5;
  std::complex<double> alpha0 = 0.0;
  int s = 0;
  double kappa_tau = 30.0;

  double kappa() const { return kappa1 + kappa2; }
  double tau() const { return kappa_tau / kappa(); }
  bool symmetric() const { return std::abs(kappa1 - kappa2) / kappa() < 1e-12; }

  void validate() const {
    detail::require(kappa1 > 0.0, "kappa1 must be positive");
    detail::require(kappa2 > 0.0, "kappa2 must be positive");
    detail::require(s == 0 || s == 1, "qubit branch s must be 0 or 1");
    detail::require(kappa_tau > 0.0, "kappa_tau must be positive");
    detail::require(std::isfinite(alpha0.real()) && std::isfinite(alpha0.imag()), "alpha0 must be finite");
  }
};

// Largest grid step accepted by the integrators, and the default one.
inline constexpr double max_step_kappa = 0.1;
inline constexpr double default_step_kappa = 0.02;
// Zero padding after the pulse when a t -> infinity limit is taken (e^{-kappa t/2} ~ 1e-13).
inline constexpr double default_tail_kappa = 60.0;

inline Waveform default_pulse(const SystemParams& p, double step_kappa = default_step_kappa) {
  p.validate();
  return gaussian_pulse(p.tau(), step_kappa / p.kappa());
}

// T(w) = (1 - s) sqrt(k1 k2) / (i w - k/2) under the matching condition.
inline std::complex<double> transmission(double omega, const SystemParams& p) {
  return static_cast<double>(1 - p.s) * std::sqrt(p.kappa1 * p.kappa2) / std::complex<double>(-0.5 * p.kappa(), omega);
}

inline std::complex<double> reflection(double omega, const SystemParams& p) {
  return 1.0 + std::sqrt(p.kappa1 / p.kappa2) * transmission(omega, p);
}

inline Waveform matched_envelope(const Waveform& u, const SystemParams& p) {
  require_normalized(u);
  Waveform g = zeros_like(u);
  const std::complex<double> c = std::sqrt(p.kappa1) * p.alpha0;
  for (std::size_t k = 0; k < u.size(); ++k) g.samples[k] = c * u.samples[k];
  return g;
}

namespace detail {

// Value halfway between samples k and k+1 by cubic Lagrange interpolation.
inline std::complex<double> midpoint(const std::vector<std::complex<double>>& f, std::size_t k) {
  const std::size_t n = f.size();
  if (n < 4) return 0.5 * (f[k] + f[k + 1]);
  if (k == 0) return (5.0 * f[0] + 15.0 * f[1] - 5.0 * f[2] + f[3]) / 16.0;
  if (k + 2 >= n) return (f[n - 4] - 5.0 * f[n - 3] + 15.0 * f[n - 2] + 5.0 * f[n - 1]) / 16.0;
  return (-f[k - 1] + 9.0 * f[k] + 9.0 * f[k + 1] - f[k + 2]) / 16.0;
}

inline void check_step(const Waveform& w, double kappa) {
  if (!(w.dt > 0.0) || w.dt * kappa > max_step_kappa) throw ValidationError("unstable step");
}

// RK4 for y' = -gamma y + f(t) on the grid of f, midpoints interpolated.
inline std::vector<std::complex<double>> integrate_damped(double gamma, const std::vector<std::complex<double>>& f,
                                                          double h) {
  std::vector<std::complex<double>> y(f.size(), 0.0);
  for (std::size_t k = 0; k + 1 < f.size(); ++k) {
    const auto fm = midpoint(f, k);
    const auto a = y[k];
    const auto k1 = -gamma * a + f[k];
    const auto k2 = -gamma * (a + 0.5 * h * k1) + fm;
    const auto k3 = -gamma * (a + 0.5 * h * k2) + fm;
    const auto k4 = -gamma * (a + h * k3) + f[k + 1];
    y[k + 1] = a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

}  // namespace detail

struct MeanFieldTrajectory {
  Waveform cavity;  // <a>_t
  Waveform out1;    // <r_out,1>_t
  Waveform out2;    // <r_out,2>_t
};

// <a>' = -(k/2)<a> + gz(t) s - sqrt(k1) alpha0 u(t), <a>_0 = 0; r_in,1 = alpha0 u, r_in,2 = 0.
inline MeanFieldTrajectory langevin_mean_field(const Waveform& u, const Waveform& gz, const SystemParams& p) {
  p.validate();
  require_same_grid(u, gz);
  detail::check_step(u, p.kappa());
  const std::complex<double> c = std::sqrt(p.kappa1) * p.alpha0;
  std::vector<std::complex<double>> drive(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) drive[k] = static_cast<double>(p.s) * gz.samples[k] - c * u.samples[k];
  MeanFieldTrajectory tr{zeros_like(u), zeros_like(u), zeros_like(u)};
  tr.cavity.samples = detail::integrate_damped(0.5 * p.kappa(), drive, u.dt);
  for (std::size_t k = 0; k < u.size(); ++k) {
    tr.out1.samples[k] = p.alpha0 * u.samples[k] + std::sqrt(p.kappa1) * tr.cavity.samples[k];
    tr.out2.samples[k] = std::sqrt(p.kappa2) * tr.cavity.samples[k];
  }
  return tr;
}

inline Waveform normalized(const Waveform& w) {
  const double e = w.energy();
  Waveform n = w;
  if (e <= 0.0) return n;
  for (auto& s : n.samples) s /= std::sqrt(e);
  return n;
}

// Output envelopes v_i = r_out,i / alpha0 for branch p.s (v1 = R u, v2 = T u), on the
// pulse grid extended by `tail`.
struct OutputWaveforms {
  Waveform v1;
  Waveform v2;
};

inline OutputWaveforms output_waveforms(const Waveform& u, const SystemParams& p,
                                        double tail_kappa = default_tail_kappa) {
  require_normalized(u);
  SystemParams unit = p;
  unit.alpha0 = 1.0;
  const Waveform up = pad_zeros(u, tail_kappa / p.kappa());
  const auto tr = langevin_mean_field(up, matched_envelope(up, unit), unit);
  return {tr.out1, tr.out2};
}

// Shapes of the two absorbing quasimodes: the normalized reflection for s = 1 (equal to u)
// and the normalized transmission for s = 0.
struct Quasimodes {
  Waveform v1;
  Waveform v2;
};

inline Quasimodes quasimode_shapes(const Waveform& u, const SystemParams& p, double tail_kappa = default_tail_kappa) {
  SystemParams s1 = p, s0 = p;
  s1.s = 1;
  s0.s = 0;
  return {normalized(output_waveforms(u, s1, tail_kappa).v1), normalized(output_waveforms(u, s0, tail_kappa).v2)};
}

// Mean field of an absorbing quasimode: c' = -|l|^2/2 c - conj(l) r(t). RK4 with step 2 dt
// so every stage lands on a grid point. Returns c on the even grid points.
inline std::vector<std::complex<double>> absorber_mean_field(const Waveform& lambda, const Waveform& r) {
  require_same_grid(lambda, r);
  const double h = 2.0 * r.dt;
  const auto& l = lambda.samples;
  const auto rhs = [&](std::size_t k, std::complex<double> c) {
    return -0.5 * std::norm(l[k]) * c - std::conj(l[k]) * r.samples[k];
  };
  std::vector<std::complex<double>> c{0.0};
  for (std::size_t k = 0; k + 2 < r.size(); k += 2) {
    const auto y = c.back();
    const auto k1 = rhs(k, y);
    const auto k2 = rhs(k + 1, y + 0.5 * h * k1);
    const auto k3 = rhs(k + 1, y + 0.5 * h * k2);
    const auto k4 = rhs(k + 2, y + h * k3);
    c.push_back(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  }
  return c;
}

struct OutputAmplitudes {
  std::complex<double> alpha1;
  std::complex<double> alpha2;
};

// alpha_is as the t -> infinity field of the absorbing quasimodes driven by the mean-field
// outputs of branch p.s.
inline OutputAmplitudes output_amplitudes(const Waveform& u, const SystemParams& p,
                                          double tail_kappa = default_tail_kappa) {
  const auto q = quasimode_shapes(u, p, tail_kappa);
  const auto w = output_waveforms(u, p, tail_kappa);
  OutputAmplitudes out;
  out.alpha1 = p.alpha0 * absorber_mean_field(absorber_coupling(q.v1), w.v1).back();
  out.alpha2 = p.alpha0 * absorber_mean_field(absorber_coupling(q.v2), w.v2).back();
  return out;
}

inline std::complex<double> overlap(const Waveform& a, const Waveform& b) {
  require_same_grid(a, b);
  std::complex<double> s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::conj(a.samples[k]) * b.samples[k];
  return s * a.dt;
}

// The three amplitude conventions side by side.
struct AmplitudeConventions {
  OutputAmplitudes dynamical;     // absorber limit
  OutputAmplitudes overlap;       // alpha0 <v_i hat | v_i> by quadrature
  OutputAmplitudes norm;          // alpha0 ||v_i||
  OutputAmplitudes squared_norm;  // alpha0 ||v_i||^2
};

inline AmplitudeConventions amplitude_conventions(const Waveform& u, const SystemParams& p,
                                                  double tail_kappa = default_tail_kappa) {
  const auto q = quasimode_shapes(u, p, tail_kappa);
  const auto w = output_waveforms(u, p, tail_kappa);
  AmplitudeConventions out;
  out.dynamical = output_amplitudes(u, p, tail_kappa);
  out.overlap = {p.alpha0 * overlap(q.v1, w.v1), p.alpha0 * overlap(q.v2, w.v2)};
  out.norm = {p.alpha0 * std::sqrt(w.v1.energy()), p.alpha0 * std::sqrt(w.v2.energy())};
  out.squared_norm = {p.alpha0 * w.v1.energy(), p.alpha0 * w.v2.energy()};
  return out;
}

// |1 - |alpha_20 / alpha0||: the part of the s = 0 wavepacket missed by the arm-2 quasimode.
inline double which_path_infidelity(const Waveform& u, const SystemParams& p) {
  SystemParams s0 = p;
  s0.s = 0;
  s0.alpha0 = 1.0;
  return std::abs(1.0 - std::abs(output_amplitudes(u, s0).alpha2));
}

}  // namespace qwp
