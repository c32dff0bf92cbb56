#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "qwp/waveform.hpp"

namespace qwp {

inline constexpr double default_coupling_floor = 1e-8;
inline constexpr double default_absorber_gate = 1e-10;

struct VirtualCouplings {
  Waveform lambda_u;
  Waveform lambda_v1;
  Waveform lambda_v2;
  double floor = default_coupling_floor;
};

namespace detail {

// Trapezoidal running integral of |w|^2, starting at 0.
inline std::vector<double> running_energy(const Waveform& w) {
  std::vector<double> acc(w.size(), 0.0);
  for (std::size_t k = 1; k < w.size(); ++k)
    acc[k] = acc[k - 1] + 0.5 * w.dt * (std::norm(w.samples[k - 1]) + std::norm(w.samples[k]));
  return acc;
}

}  // namespace detail

// Emitting quasimode: lambda_u(t) = u(t) / sqrt(1 - int_0^t |u|^2), denominator floored.
inline Waveform emitter_coupling(const Waveform& u, double floor = default_coupling_floor) {
  Waveform lam = zeros_like(u);
  const auto acc = detail::running_energy(u);
  for (std::size_t k = 0; k < u.size(); ++k) lam.samples[k] = u.samples[k] / std::sqrt(std::max(1.0 - acc[k], floor));
  return lam;
}

// Absorbing quasimode: lambda_v(t) = -v(t) / sqrt(int_0^t |v|^2). Zero while the
// accumulated norm is below `gate`, so an all-zero v gives an all-zero coupling.
inline Waveform absorber_coupling(const Waveform& v, double floor = default_coupling_floor,
                                  double gate = default_absorber_gate) {
  Waveform lam = zeros_like(v);
  const auto acc = detail::running_energy(v);
  for (std::size_t k = 0; k < v.size(); ++k)
    if (acc[k] >= gate) lam.samples[k] = -v.samples[k] / std::sqrt(std::max(acc[k], floor));
  return lam;
}

inline VirtualCouplings build_couplings(const Waveform& u, const Waveform& v1, const Waveform& v2,
                                        double floor = default_coupling_floor) {
  require_same_grid(u, v1);
  require_same_grid(u, v2);
  require_normalized(u);
  return {emitter_coupling(u, floor), absorber_coupling(v1, floor), absorber_coupling(v2, floor), floor};
}

}  // namespace qwp
