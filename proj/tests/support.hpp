#pragma once

#include <complex>
#include <random>

#include "qwp/fock.hpp"

namespace qwp::testing {

inline cplx random_cplx(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return {g(rng), g(rng)};
}

inline Vector random_vector(std::mt19937_64& rng, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = random_cplx(rng);
  return v / v.norm();
}

// Random full-rank density matrix G G^dag / tr.
inline Matrix random_density(std::mt19937_64& rng, std::size_t n) {
  Matrix g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = random_cplx(rng);
  Matrix r = g * g.adjoint();
  return r / r.trace().real();
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace qwp::testing
